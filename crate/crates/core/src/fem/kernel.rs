//! Element residual and consistent tangent.
//!
//! At each Gauss point the energy gradient `g = ∂Ψ/∂y` with respect to the
//! local kinematic vector `y = (F, φ, ∇φ)` and its derivative are obtained by
//! nested dual numbers. Element quantities follow from the linear map
//! `y = B x_e`: `R = Σ Bᵀ g Jw`, `K = Σ Bᵀ (dg/dy) B Jw`. With the history
//! resolved inside the kernel, `dg/dy` includes the implicit derivative of the
//! return map, `dκ/dy = −(∂Φ/∂y) / (∂Φ/∂κ)`.

use thiserror::Error;

use super::shape::{ElementGeometry, QUAD_POINTS};
use crate::autodiff::{derivative, Dual};
use crate::damage::{return_map, yield_function, DamageError, ReturnMapOptions};
use crate::materials::{energy_gradients, MaterialError, MaterialModel};
use crate::tensor::Tensor2;

/// Element unknowns: 24 displacements (node-major) followed by 8 φ values.
pub const ELEMENT_DOFS: usize = 32;
/// Length of the local kinematic vector `(F, φ, ∇φ)`.
pub const LOCAL_VARS: usize = 13;

type D14 = Dual<f64, 14>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("quadrature point {qp}: {source}")]
    Material {
        qp: usize,
        #[source]
        source: MaterialError,
    },
    #[error("quadrature point {qp}: {source}")]
    Damage {
        qp: usize,
        #[source]
        source: DamageError,
    },
    #[error("non-finite residual or tangent")]
    NotFinite,
}

/// How the history variable enters the element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaMode {
    /// Use the given κ as a constant.
    Frozen,
    /// Run the return map from the committed κ at the current state and
    /// linearize through it.
    Resolve(ReturnMapOptions),
}

#[derive(Debug, Clone, Copy)]
pub struct ElementState<'a> {
    pub geo: &'a ElementGeometry,
    pub u: &'a [f64; 24],
    pub phi: &'a [f64; 8],
    /// Committed history.
    pub kappa_n: &'a [f64; QUAD_POINTS],
    /// History used in [`KappaMode::Frozen`].
    pub kappa: &'a [f64; QUAD_POINTS],
}

#[derive(Debug, Clone)]
pub struct ElementOutput {
    pub residual: [f64; ELEMENT_DOFS],
    pub tangent: Option<Box<[[f64; ELEMENT_DOFS]; ELEMENT_DOFS]>>,
    /// κ used at each point (the return-map result when resolving).
    pub kappa: [f64; QUAD_POINTS],
    /// Points whose return map stopped at floating-point resolution.
    pub resolution_limited: usize,
}

/// Local kinematics at a Gauss point.
pub fn point_kinematics(geo: &ElementGeometry, q: usize, u: &[f64; 24], phi: &[f64; 8]) -> [f64; LOCAL_VARS] {
    let mut y = [0.0; LOCAL_VARS];
    y[0] = 1.0;
    y[4] = 1.0;
    y[8] = 1.0;
    for a in 0..8 {
        let dn = geo.dn_dx[q][a];
        for i in 0..3 {
            for j in 0..3 {
                y[3 * i + j] += u[3 * a + i] * dn[j];
            }
        }
        y[9] += geo.n[q][a] * phi[a];
        for j in 0..3 {
            y[10 + j] += dn[j] * phi[a];
        }
    }
    y
}

fn split(y: &[f64; LOCAL_VARS]) -> (Tensor2<f64>, f64, [f64; 3]) {
    (Tensor2(std::array::from_fn(|k| y[k])), y[9], [y[10], y[11], y[12]])
}

/// Energy gradient and its total derivative at one point.
pub struct PointResponse {
    pub gradient: [f64; LOCAL_VARS],
    pub tangent: [[f64; LOCAL_VARS]; LOCAL_VARS],
    pub kappa: f64,
    pub resolution_limited: bool,
}

pub fn point_response(
    y: &[f64; LOCAL_VARS],
    kappa_n: f64,
    kappa_frozen: f64,
    mode: KappaMode,
    m: &MaterialModel,
    want_tangent: bool,
) -> Result<PointResponse, KernelError> {
    let qp = 0;
    let (f, phi, gphi) = split(y);
    let mut resolution_limited = false;
    let mut coupling: Option<[f64; LOCAL_VARS]> = None;
    let kappa = match mode {
        KappaMode::Frozen => kappa_frozen,
        KappaMode::Resolve(opts) => {
            let rm =
                return_map(&f, phi, &gphi, kappa_n, m, opts).map_err(|source| KernelError::Damage { qp, source })?;
            resolution_limited = rm.resolution_limited;
            if want_tangent && rm.delta_lambda > 0.0 {
                let vars: [D14; LOCAL_VARS] = std::array::from_fn(|k| D14::variable(y[k], k));
                let fd = Tensor2(std::array::from_fn(|k| vars[k]));
                let gd = [vars[10], vars[11], vars[12]];
                let phi_y = yield_function(&fd, vars[9], &gd, D14::constant(rm.kappa_next), m)
                    .map_err(|source| KernelError::Material { qp, source })?;
                let fc = f.map(Dual::<f64, 1>::constant);
                let gc = gphi.map(Dual::<f64, 1>::constant);
                let (_, phi_k) = derivative(|k| yield_function(&fc, Dual::constant(phi), &gc, k, m), rm.kappa_next)
                    .map_err(|source| KernelError::Material { qp, source })?;
                if phi_k != 0.0 {
                    coupling = Some(std::array::from_fn(|k| -phi_y.eps[k] / phi_k));
                }
            }
            rm.kappa_next
        }
    };

    if !want_tangent {
        let eg = energy_gradients(&f, phi, &gphi, kappa, m).map_err(|source| KernelError::Material { qp, source })?;
        let mut gradient = [0.0; LOCAL_VARS];
        gradient[..9].copy_from_slice(&eg.pk1.0);
        gradient[9] = -eg.y_scalar;
        gradient[10..].copy_from_slice(&eg.y_vec);
        return Ok(PointResponse { gradient, tangent: [[0.0; LOCAL_VARS]; LOCAL_VARS], kappa, resolution_limited });
    }

    let vars: [D14; LOCAL_VARS] = std::array::from_fn(|k| D14::variable(y[k], k));
    let fd = Tensor2(std::array::from_fn(|k| vars[k]));
    let gd = [vars[10], vars[11], vars[12]];
    let eg = energy_gradients(&fd, vars[9], &gd, D14::variable(kappa, 13), m)
        .map_err(|source| KernelError::Material { qp, source })?;
    let mut g = [D14::constant(0.0); LOCAL_VARS];
    g[..9].copy_from_slice(&eg.pk1.0);
    g[9] = -eg.y_scalar;
    g[10..].copy_from_slice(&eg.y_vec);

    let mut gradient = [0.0; LOCAL_VARS];
    let mut tangent = [[0.0; LOCAL_VARS]; LOCAL_VARS];
    for r in 0..LOCAL_VARS {
        gradient[r] = g[r].re;
        for c in 0..LOCAL_VARS {
            tangent[r][c] = g[r].eps[c];
        }
        if let Some(dk) = &coupling {
            let gk = g[r].eps[13];
            for c in 0..LOCAL_VARS {
                tangent[r][c] += gk * dk[c];
            }
        }
    }
    Ok(PointResponse { gradient, tangent, kappa, resolution_limited })
}

/// Rows of `B` at a point: for each local variable, the nonzero entries
/// `(element dof, coefficient)`.
fn b_rows(geo: &ElementGeometry, q: usize) -> [[(usize, f64); 8]; LOCAL_VARS] {
    let mut rows = [[(0, 0.0); 8]; LOCAL_VARS];
    for a in 0..8 {
        let dn = geo.dn_dx[q][a];
        for i in 0..3 {
            for j in 0..3 {
                rows[3 * i + j][a] = (3 * a + i, dn[j]);
            }
        }
        rows[9][a] = (24 + a, geo.n[q][a]);
        for j in 0..3 {
            rows[10 + j][a] = (24 + a, dn[j]);
        }
    }
    rows
}

/// Residual, optional tangent and history of one element.
pub fn element_kernel(
    s: &ElementState<'_>,
    m: &MaterialModel,
    mode: KappaMode,
    want_tangent: bool,
) -> Result<ElementOutput, KernelError> {
    let mut residual = [0.0; ELEMENT_DOFS];
    let mut tangent = want_tangent.then(|| Box::new([[0.0; ELEMENT_DOFS]; ELEMENT_DOFS]));
    let mut kappa = [0.0; QUAD_POINTS];
    let mut resolution_limited = 0;
    for q in 0..QUAD_POINTS {
        let y = point_kinematics(s.geo, q, s.u, s.phi);
        let pr = point_response(&y, s.kappa_n[q], s.kappa[q], mode, m, want_tangent).map_err(|e| match e {
            KernelError::Material { source, .. } => KernelError::Material { qp: q, source },
            KernelError::Damage { source, .. } => KernelError::Damage { qp: q, source },
            other => other,
        })?;
        kappa[q] = pr.kappa;
        resolution_limited += usize::from(pr.resolution_limited);
        let jw = s.geo.jw[q];
        let rows = b_rows(s.geo, q);
        for (r, row) in rows.iter().enumerate() {
            let gr = pr.gradient[r] * jw;
            for &(dof, b) in row {
                residual[dof] += b * gr;
            }
        }
        if let Some(k) = tangent.as_deref_mut() {
            // TB[r][dof] = Σ_c T[r][c] B[c][dof]
            let mut tb = [[0.0; ELEMENT_DOFS]; LOCAL_VARS];
            for r in 0..LOCAL_VARS {
                for (c, row) in rows.iter().enumerate() {
                    let t = pr.tangent[r][c] * jw;
                    if t != 0.0 {
                        for &(dof, b) in row {
                            tb[r][dof] += t * b;
                        }
                    }
                }
            }
            for (r, row) in rows.iter().enumerate() {
                for &(dof, b) in row {
                    let out = &mut k[dof];
                    for (o, t) in out.iter_mut().zip(&tb[r]) {
                        *o += b * t;
                    }
                }
            }
        }
    }
    if residual.iter().any(|v| !v.is_finite())
        || tangent.as_deref().is_some_and(|k| k.iter().flatten().any(|v| !v.is_finite()))
    {
        return Err(KernelError::NotFinite);
    }
    Ok(ElementOutput { residual, tangent, kappa, resolution_limited })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::shape::NODE_SIGNS;
    use crate::materials::ClosedFormParams;

    fn unit_geo() -> ElementGeometry {
        ElementGeometry::new(&NODE_SIGNS.map(|s| s.map(|v| 0.5 * (v + 1.0)))).unwrap()
    }

    fn model() -> MaterialModel {
        let (mu, lambda) = crate::materials::lame(210.0, 0.3);
        MaterialModel::ClosedForm(ClosedFormParams {
            mu_e: mu,
            lambda_e: lambda,
            eta_d: 0.5,
            kappa_d: 0.1,
            c_d: 1.0,
            beta_d: 10.0,
            gamma_d: 1.0,
        })
    }

    #[test]
    fn virgin_state_has_zero_residual() {
        let geo = unit_geo();
        let out = element_kernel(
            &ElementState { geo: &geo, u: &[0.0; 24], phi: &[0.0; 8], kappa_n: &[0.0; 8], kappa: &[0.0; 8] },
            &model(),
            KappaMode::Resolve(ReturnMapOptions::default()),
            true,
        )
        .unwrap();
        assert!(out.residual.iter().all(|&r| r.abs() < 1e-12));
    }

    #[test]
    fn uniform_phi_equal_to_kappa_has_zero_phi_residual() {
        let geo = unit_geo();
        let mut u = [0.0; 24];
        for a in 0..8 {
            let x = NODE_SIGNS[a].map(|v| 0.5 * (v + 1.0));
            u[3 * a] = 0.1 * x[0];
            u[3 * a + 1] = -0.03 * x[1];
            u[3 * a + 2] = -0.03 * x[2];
        }
        let out = element_kernel(
            &ElementState { geo: &geo, u: &u, phi: &[0.7; 8], kappa_n: &[0.7; 8], kappa: &[0.7; 8] },
            &model(),
            KappaMode::Frozen,
            false,
        )
        .unwrap();
        assert!(out.residual[24..].iter().all(|&r| r.abs() < 1e-12));
    }
}
