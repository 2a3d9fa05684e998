//! Coupled displacement / non-local damage finite elements.
//!
//! Every node carries four unknowns `(u_x, u_y, u_z, φ)`, numbered
//! node-major. Boundary values and nodal loads are given at load factor 1
//! and scaled by the current load factor.

pub mod assembly;
pub mod kernel;
pub mod mesh;
pub mod post;
pub mod shape;
pub mod solver;
pub mod sparse;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::damage::DamageError;
use crate::materials::MaterialModel;
pub use assembly::{Assembler, Execution};
use kernel::KernelError;
pub use mesh::{Mesh, MeshError};
use shape::ElementGeometry;
use sparse::LinearSolveError;

pub const DOFS_PER_NODE: usize = 4;
/// Component index of φ within a node's unknowns.
pub const PHI: usize = 3;

pub fn dof(node: usize, component: usize) -> usize {
    DOFS_PER_NODE * node + component
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FemError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("{count} element(s) failed; first: element {element}: {source}")]
    Elements {
        count: usize,
        element: usize,
        #[source]
        source: KernelError,
    },
    #[error("history update failed at element {element}: {source}")]
    History {
        element: usize,
        #[source]
        source: DamageError,
    },
    #[error(transparent)]
    Linear(#[from] LinearSolveError),
    #[error("Newton iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("non-finite values in the solution")]
    NotFinite,
    #[error("arc-length constraint has no real root")]
    ArcLengthRoot,
    #[error("invalid problem definition: {0}")]
    Problem(String),
}

/// Solution strategy for the coupled problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Fields and history solved together; κ resolved in every iteration.
    Monolithic,
    /// Fields solved with κ frozen, then one history sweep per increment.
    Staggered,
    /// Gradient terms removed, staggered update.
    Local,
    /// Gradient terms removed, history resolved in every iteration.
    LocalMonolithic,
}

impl Scheme {
    pub fn is_local(self) -> bool {
        matches!(self, Scheme::Local | Scheme::LocalMonolithic)
    }

    pub fn resolves_history(self) -> bool {
        matches!(self, Scheme::Monolithic | Scheme::LocalMonolithic)
    }

    /// The scheme with the same history treatment and no gradient terms.
    pub fn without_gradient(self) -> Self {
        match self {
            Scheme::Monolithic | Scheme::LocalMonolithic => Scheme::LocalMonolithic,
            Scheme::Staggered | Scheme::Local => Scheme::Local,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Monolithic => "monolithic",
            Scheme::Staggered => "staggered",
            Scheme::Local => "local",
            Scheme::LocalMonolithic => "local-monolithic",
        }
    }

    /// The material model as seen by this scheme.
    pub fn effective_model(self, m: &MaterialModel) -> MaterialModel {
        if self.is_local() {
            m.local_only()
        } else {
            m.clone()
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "monolithic" => Ok(Scheme::Monolithic),
            "staggered" => Ok(Scheme::Staggered),
            "local" => Ok(Scheme::Local),
            "local-monolithic" => Ok(Scheme::LocalMonolithic),
            other => Err(format!("unknown scheme `{other}`")),
        }
    }
}

/// Mesh, material and loading of a boundary-value problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub mesh: Mesh,
    pub geometry: Vec<ElementGeometry>,
    pub model: MaterialModel,
    /// Prescribed values at load factor 1, keyed by dof.
    pub dirichlet: BTreeMap<usize, f64>,
    /// Nodal forces at load factor 1, keyed by dof.
    pub loads: BTreeMap<usize, f64>,
    /// Dofs whose internal forces are summed into the reported reaction.
    pub reaction_dofs: Vec<usize>,
    /// Dof whose displacement is reported in histories.
    pub control_dof: Option<usize>,
}

impl Problem {
    pub fn new(mesh: Mesh, model: MaterialModel) -> Result<Self, FemError> {
        let geometry = mesh.geometry()?;
        model.validate().map_err(|e| FemError::Problem(e.to_string()))?;
        Ok(Self {
            mesh,
            geometry,
            model,
            dirichlet: BTreeMap::new(),
            loads: BTreeMap::new(),
            reaction_dofs: Vec::new(),
            control_dof: None,
        })
    }

    pub fn num_dofs(&self) -> usize {
        DOFS_PER_NODE * self.mesh.num_nodes()
    }

    /// Prescribes `value` (at load factor 1) on `component` of every node in
    /// the named set.
    pub fn prescribe(&mut self, set: &str, component: usize, value: f64) -> Result<&mut Self, FemError> {
        let nodes = self.mesh.node_set(set)?.to_vec();
        for n in nodes {
            self.dirichlet.insert(dof(n, component), value);
        }
        Ok(self)
    }

    pub fn prescribe_node(&mut self, node: usize, component: usize, value: f64) -> &mut Self {
        self.dirichlet.insert(dof(node, component), value);
        self
    }

    /// Distributes `total` (at load factor 1) equally over the nodes of a set.
    pub fn load(&mut self, set: &str, component: usize, total: f64) -> Result<&mut Self, FemError> {
        let nodes = self.mesh.node_set(set)?.to_vec();
        let share = total / nodes.len() as f64;
        for n in nodes {
            *self.loads.entry(dof(n, component)).or_insert(0.0) += share;
        }
        Ok(self)
    }

    /// Reports the summed internal force of `component` over a set and the
    /// displacement of its first node.
    pub fn monitor(&mut self, set: &str, component: usize) -> Result<&mut Self, FemError> {
        let nodes = self.mesh.node_set(set)?;
        self.reaction_dofs = nodes.iter().map(|&n| dof(n, component)).collect();
        self.control_dof = nodes.first().map(|&n| dof(n, component));
        Ok(self)
    }

    /// Constrained dofs and their values at load factor 1 for a scheme; in
    /// local schemes every φ dof is held at zero.
    pub fn constraints(&self, scheme: Scheme) -> BTreeMap<usize, f64> {
        let mut c = self.dirichlet.clone();
        if scheme.is_local() {
            for n in 0..self.mesh.num_nodes() {
                c.insert(dof(n, PHI), 0.0);
            }
        }
        c
    }

    pub fn check(&self) -> Result<(), FemError> {
        let n = self.num_dofs();
        if let Some(&d) = self.dirichlet.keys().chain(self.loads.keys()).chain(&self.reaction_dofs).find(|&&d| d >= n) {
            return Err(FemError::Problem(format!("dof {d} out of range ({n} dofs)")));
        }
        if self.dirichlet.values().chain(self.loads.values()).any(|v| !v.is_finite()) {
            return Err(FemError::Problem("non-finite boundary value".into()));
        }
        Ok(())
    }
}
