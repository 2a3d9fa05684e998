//! Global assembly.
//!
//! Element kernels run independently (in parallel with the `parallel`
//! feature); their outputs are scattered serially in element order, so the
//! assembled system is bit-identical for any thread count.

use serde::{Deserialize, Serialize};

use super::kernel::{element_kernel, ElementOutput, ElementState, KappaMode, KernelError, ELEMENT_DOFS};
use super::shape::QUAD_POINTS;
use super::sparse::{CsrMatrix, Profile};
use super::{dof, FemError, Problem, DOFS_PER_NODE, PHI};
use crate::materials::MaterialModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Execution {
    /// Element loop on the rayon pool (sequential without the `parallel`
    /// feature).
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Ordered map over `0..n`.
pub fn ordered_map<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Sizes the global thread pool; `None` keeps the default. Has no effect
/// without the `parallel` feature.
pub fn configure_threads(threads: Option<usize>) -> Result<(), String> {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        return rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string());
    }
    let _ = threads;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Assembly {
    /// Internal force vector (no external loads).
    pub residual: Vec<f64>,
    /// History used at each point; the return-map result when resolving.
    pub kappa: Vec<[f64; QUAD_POINTS]>,
    pub resolution_limited: usize,
}

/// Sparsity pattern, scatter maps and ordering for one mesh.
#[derive(Debug, Clone)]
pub struct Assembler {
    element_dofs: Vec<[usize; ELEMENT_DOFS]>,
    scatter: Vec<u32>,
    pub matrix: CsrMatrix,
    profile: Profile,
    pub execution: Execution,
}

pub fn element_dofs(conn: &[usize; 8]) -> [usize; ELEMENT_DOFS] {
    let mut d = [0; ELEMENT_DOFS];
    for (a, &n) in conn.iter().enumerate() {
        for i in 0..3 {
            d[3 * a + i] = dof(n, i);
        }
        d[24 + a] = dof(n, PHI);
    }
    d
}

impl Assembler {
    pub fn new(problem: &Problem, execution: Execution) -> Self {
        let ndof = problem.num_dofs();
        let element_dofs: Vec<_> = problem.mesh.elements.iter().map(element_dofs).collect();
        let mut rows: Vec<Vec<usize>> = (0..ndof).map(|i| vec![i]).collect();
        for ed in &element_dofs {
            for &i in ed {
                rows[i].extend_from_slice(ed);
            }
        }
        let matrix = CsrMatrix::from_pattern(ndof, rows);
        let mut scatter = Vec::with_capacity(element_dofs.len() * ELEMENT_DOFS * ELEMENT_DOFS);
        for ed in &element_dofs {
            for &i in ed {
                for &j in ed {
                    scatter.push(matrix.position(i, j).expect("element entry in pattern") as u32);
                }
            }
        }
        let profile = Profile::new(&matrix);
        Self { element_dofs, scatter, matrix, profile, execution }
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn num_dofs(&self) -> usize {
        self.matrix.dim()
    }

    /// Evaluates every element at `x` and assembles the internal force
    /// vector and, if requested, the tangent into [`Assembler::matrix`].
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        &mut self,
        problem: &Problem,
        model: &MaterialModel,
        x: &[f64],
        kappa_n: &[[f64; QUAD_POINTS]],
        kappa: &[[f64; QUAD_POINTS]],
        mode: KappaMode,
        want_tangent: bool,
    ) -> Result<Assembly, FemError> {
        let outputs = self.evaluate(problem, model, x, kappa_n, kappa, mode, want_tangent);
        let mut failures = outputs.iter().enumerate().filter_map(|(e, o)| o.as_ref().err().map(|err| (e, err.clone())));
        if let Some((element, source)) = failures.next() {
            return Err(FemError::Elements { count: 1 + failures.count(), element, source });
        }
        let mut residual = vec![0.0; self.num_dofs()];
        let mut kappa_out = Vec::with_capacity(outputs.len());
        let mut resolution_limited = 0;
        if want_tangent {
            self.matrix.zero_values();
        }
        for (e, out) in outputs.into_iter().enumerate() {
            let out = out.expect("failures handled above");
            let ed = &self.element_dofs[e];
            for (i, &gi) in ed.iter().enumerate() {
                residual[gi] += out.residual[i];
            }
            if let Some(k) = out.tangent.as_deref() {
                let map = &self.scatter[e * ELEMENT_DOFS * ELEMENT_DOFS..(e + 1) * ELEMENT_DOFS * ELEMENT_DOFS];
                for (i, row) in k.iter().enumerate() {
                    for (j, &v) in row.iter().enumerate() {
                        self.matrix.values[map[i * ELEMENT_DOFS + j] as usize] += v;
                    }
                }
            }
            kappa_out.push(out.kappa);
            resolution_limited += out.resolution_limited;
        }
        Ok(Assembly { residual, kappa: kappa_out, resolution_limited })
    }

    #[allow(clippy::too_many_arguments)]
    fn evaluate(
        &self,
        problem: &Problem,
        model: &MaterialModel,
        x: &[f64],
        kappa_n: &[[f64; QUAD_POINTS]],
        kappa: &[[f64; QUAD_POINTS]],
        mode: KappaMode,
        want_tangent: bool,
    ) -> Vec<Result<ElementOutput, KernelError>> {
        ordered_map(problem.mesh.num_elements(), self.execution, |e| {
            let (u, phi) = gather(&problem.mesh.elements[e], x);
            let state =
                ElementState { geo: &problem.geometry[e], u: &u, phi: &phi, kappa_n: &kappa_n[e], kappa: &kappa[e] };
            element_kernel(&state, model, mode, want_tangent)
        })
    }
}

/// Element displacements and φ values from the global vector.
pub fn gather(conn: &[usize; 8], x: &[f64]) -> ([f64; 24], [f64; 8]) {
    let mut u = [0.0; 24];
    let mut phi = [0.0; 8];
    for (a, &n) in conn.iter().enumerate() {
        let base = DOFS_PER_NODE * n;
        u[3 * a..3 * a + 3].copy_from_slice(&x[base..base + 3]);
        phi[a] = x[base + PHI];
    }
    (u, phi)
}
