//! JSON run configuration.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::inp::{read_inp, InpError};
use super::vtk::VtkField;
use crate::fem::mesh::{box_mesh, NotchedPlate};
use crate::fem::solver::SolverConfig;
use crate::fem::{FemError, Mesh, Problem, PHI};
use crate::materials::{ClosedFormParams, DataDrivenParams, MaterialModel};
use crate::networks::{load_weights, IcnnWeights, MonotoneNetWeights, NetworkError};
use crate::studies::NotchedStudyConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config error at `{key}` (line {line}, column {column}): {message}")]
    Schema { key: String, line: usize, column: usize, message: String },
    #[error("config error at `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("mesh: {0}")]
    Mesh(#[from] InpError),
    #[error("weights: {0}")]
    Weights(#[from] NetworkError),
    #[error(transparent)]
    Fem(#[from] FemError),
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeshSource {
    /// Abaqus input file, relative to the configuration file.
    File {
        path: PathBuf,
    },
    /// Box `[0, size]` with `counts` elements per direction.
    Box {
        size: [f64; 3],
        counts: [usize; 3],
    },
    NotchedPlate {
        plate: NotchedPlate,
    },
}

fn one() -> f64 {
    1.0
}

fn default_init_scale() -> f64 {
    0.3
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

/// Data-driven material: networks from a weight file (or a seeded random
/// initialization), with optional overrides of the scalar parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataDrivenConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_d: Option<f64>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub c_d: f64,
    #[serde(default, skip_serializing_if = "is_default")]
    pub beta_d: f64,
    #[serde(default = "one")]
    pub gamma_d: f64,
    /// Scale of the random initialization used without a weight file.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum MaterialConfig {
    ClosedForm(ClosedFormParams),
    DataDriven(DataDrivenConfig),
}

impl MaterialConfig {
    /// Builds the model; relative weight paths resolve against `base`.
    pub fn build(&self, base: &Path, seed: u64) -> Result<MaterialModel, ConfigError> {
        let model = match self {
            MaterialConfig::ClosedForm(p) => MaterialModel::ClosedForm(*p),
            MaterialConfig::DataDriven(c) => {
                let mut p = match &c.weights {
                    Some(path) => load_weights(&base.join(path))?,
                    None => {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        DataDrivenParams {
                            mu_e: 1.0,
                            lambda_e: 1.0,
                            psi_iso_net: IcnnWeights::random(&mut rng, c.init_scale),
                            yield_net: MonotoneNetWeights::random(&mut rng, c.init_scale),
                            eta_d: 1.0,
                            kappa_d: 0.0,
                            c_d: 0.0,
                            beta_d: 0.0,
                            gamma_d: 1.0,
                        }
                    }
                };
                p.mu_e = c.mu_e.unwrap_or(p.mu_e);
                p.lambda_e = c.lambda_e.unwrap_or(p.lambda_e);
                p.eta_d = c.eta_d.unwrap_or(p.eta_d);
                p.kappa_d = c.kappa_d.unwrap_or(p.kappa_d);
                p.c_d = c.c_d;
                p.beta_d = c.beta_d;
                p.gamma_d = c.gamma_d;
                MaterialModel::DataDriven(p)
            }
        };
        model.validate().map_err(|e| invalid("material", e.to_string()))?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dof {
    X,
    Y,
    Z,
    Phi,
}

impl Dof {
    pub fn component(self) -> usize {
        match self {
            Dof::X => 0,
            Dof::Y => 1,
            Dof::Z => 2,
            Dof::Phi => PHI,
        }
    }
}

/// Value of one dof on every node of a set, reached at load factor 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prescribed {
    pub set: String,
    pub dof: Dof,
    #[serde(default)]
    pub value: f64,
}

/// Total force on a set, shared equally by its nodes, at load factor 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodalLoad {
    pub set: String,
    pub dof: Dof,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monitor {
    pub set: String,
    pub dof: Dof,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn all_fields() -> Vec<VtkField> {
    VtkField::ALL.to_vec()
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "all_fields")]
    pub fields: Vec<VtkField>,
    /// Write a VTK file every this many steps; 0 writes only the final state.
    #[serde(default)]
    pub every: usize,
    #[serde(default = "yes")]
    pub history: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: default_directory(), fields: all_fields(), every: 0, history: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub mesh: MeshSource,
    pub material: MaterialConfig,
    #[serde(default)]
    pub boundary: Vec<Prescribed>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loads: Vec<NodalLoad>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitor: Option<Monitor>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Deserializes JSON, reporting the path of the offending key.
pub fn from_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let inner = e.into_inner();
        ConfigError::Schema { key, line: inner.line(), column: inner.column(), message: inner.to_string() }
    })
}

/// Reads and deserializes a JSON file.
pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    from_json(&text)
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = from_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let cfg: Self = load_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks that do not need the mesh or weight files.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.solver.validate().map_err(|e| invalid("solver", e.to_string()))?;
        for (i, b) in self.boundary.iter().enumerate() {
            if !b.value.is_finite() {
                return Err(invalid(format!("boundary[{i}].value"), "must be finite"));
            }
        }
        for (i, l) in self.loads.iter().enumerate() {
            if !l.total.is_finite() {
                return Err(invalid(format!("loads[{i}].total"), "must be finite"));
            }
        }
        if let MeshSource::Box { size, counts } = &self.mesh {
            if size.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
                return Err(invalid("mesh.size", "must be positive"));
            }
            if counts.contains(&0) {
                return Err(invalid("mesh.counts", "must be positive"));
            }
        }
        if self.output.fields.is_empty() && self.output.every > 0 {
            return Err(invalid("output.fields", "no fields selected"));
        }
        Ok(())
    }

    pub fn build_mesh(&self, base: &Path) -> Result<Mesh, ConfigError> {
        Ok(match &self.mesh {
            MeshSource::File { path } => read_inp(&base.join(path))?,
            MeshSource::Box { size, counts } => box_mesh(*size, *counts).map_err(|e| invalid("mesh", e.to_string()))?,
            MeshSource::NotchedPlate { plate } => plate.mesh().map_err(|e| invalid("mesh.plate", e.to_string()))?,
        })
    }

    /// Mesh, material and boundary conditions. Relative paths resolve
    /// against `base`, normally the directory of the configuration file.
    pub fn build_problem(&self, base: &Path) -> Result<Problem, ConfigError> {
        let mesh = self.build_mesh(base)?;
        let model = self.material.build(base, self.seed)?;
        let mut p = Problem::new(mesh, model)?;
        let check = |p: &Problem, key: String, set: &str| -> Result<(), ConfigError> {
            if p.mesh.node_sets.contains_key(set) {
                Ok(())
            } else {
                let known: Vec<&str> = p.mesh.node_sets.keys().map(String::as_str).collect();
                Err(invalid(key, format!("unknown node set `{set}` (known: {})", known.join(", "))))
            }
        };
        for (i, b) in self.boundary.iter().enumerate() {
            check(&p, format!("boundary[{i}].set"), &b.set)?;
            p.prescribe(&b.set, b.dof.component(), b.value)?;
        }
        for (i, l) in self.loads.iter().enumerate() {
            check(&p, format!("loads[{i}].set"), &l.set)?;
            p.load(&l.set, l.dof.component(), l.total)?;
        }
        if let Some(m) = &self.monitor {
            check(&p, "monitor.set".into(), &m.set)?;
            p.monitor(&m.set, m.dof.component())?;
        }
        Ok(p)
    }
}

/// Configuration of the notched-plate step and mesh studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NotchedPlateConfig {
    #[serde(default)]
    pub seed: u64,
    pub material: MaterialConfig,
    #[serde(default)]
    pub study: NotchedStudyConfig,
    /// Abaqus file replacing the generated first mesh, relative to the
    /// configuration file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse_mesh: Option<PathBuf>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl NotchedPlateConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let cfg: Self = load_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.study;
        if s.meshes.is_empty() {
            return Err(invalid("study.meshes", "at least one mesh is required"));
        }
        if let Some(i) = s.meshes.iter().position(|c| c.contains(&0)) {
            return Err(invalid(format!("study.meshes[{i}]"), "element counts must be positive"));
        }
        if let Some(i) = s.step_counts.iter().position(|&c| c == 0) {
            return Err(invalid(format!("study.step_counts[{i}]"), "must be positive"));
        }
        if s.mesh_steps == 0 {
            return Err(invalid("study.mesh_steps", "must be positive"));
        }
        if !s.strain.is_finite() {
            return Err(invalid("study.strain", "must be finite"));
        }
        Ok(())
    }

    pub fn build_model(&self, base: &Path) -> Result<MaterialModel, ConfigError> {
        self.material.build(base, self.seed)
    }

    pub fn coarse_mesh(&self, base: &Path) -> Result<Option<Mesh>, ConfigError> {
        Ok(match &self.coarse_mesh {
            Some(path) => Some(read_inp(&base.join(path))?),
            None => None,
        })
    }
}
