//! Constitutive laws: the internal free energy and everything derived from it.
//!
//! `Ψ_int = f_d(κ) ψ_e(C) + (c_d/2) ∇φ·C⁻¹·∇φ + (β_d/2)(φ − κ)²`
//!
//! `ψ_e` is either a compressible neo-Hookean energy or the data-driven split
//! `μ_e ψ̃_iso(I1G, I2G) + λ_e (J + 1/J − 2)²`. Stresses and non-local
//! conjugates are energy gradients taken with dual numbers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{grad_wrt_scalars, grad_wrt_tensor, Dual, Scalar};
use crate::networks::{IcnnWeights, MonotoneNetWeights};
use crate::tensor::{invariants, right_cauchy_green, Tensor2, TensorError};

/// Degradation factor below which a material point counts as failed
/// (`d > 0.995`).
pub const FAILURE_DEGRADATION: f64 = 5e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MaterialError {
    #[error(transparent)]
    Kinematics(#[from] TensorError),
    #[error("numerical failure in constitutive evaluation: {0}")]
    Numerical(String),
    #[error("invalid material parameter: {0}")]
    InvalidParameter(String),
}

fn default_gamma() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedFormParams {
    pub mu_e: f64,
    pub lambda_e: f64,
    pub eta_d: f64,
    pub kappa_d: f64,
    #[serde(default)]
    pub c_d: f64,
    #[serde(default)]
    pub beta_d: f64,
    #[serde(default = "default_gamma")]
    pub gamma_d: f64,
}

impl ClosedFormParams {
    /// Lamé parameters from Young's modulus and Poisson's ratio; non-local
    /// terms off.
    pub fn from_young(e: f64, nu: f64, eta_d: f64, kappa_d: f64) -> Self {
        let (mu_e, lambda_e) = lame(e, nu);
        Self { mu_e, lambda_e, eta_d, kappa_d, c_d: 0.0, beta_d: 0.0, gamma_d: 1.0 }
    }

    pub fn with_nonlocal(mut self, c_d: f64, beta_d: f64) -> Self {
        self.c_d = c_d;
        self.beta_d = beta_d;
        self
    }
}

/// `(μ, λ)` from `(E, ν)`.
pub fn lame(e: f64, nu: f64) -> (f64, f64) {
    (e / (2.0 * (1.0 + nu)), e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataDrivenParams {
    pub mu_e: f64,
    pub lambda_e: f64,
    pub psi_iso_net: IcnnWeights,
    pub yield_net: MonotoneNetWeights,
    pub eta_d: f64,
    pub kappa_d: f64,
    pub c_d: f64,
    pub beta_d: f64,
    pub gamma_d: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MaterialModel {
    ClosedForm(ClosedFormParams),
    DataDriven(DataDrivenParams),
}

/// Damage and regularization parameters shared by both variants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DamageParams {
    pub eta_d: f64,
    pub kappa_d: f64,
    pub c_d: f64,
    pub beta_d: f64,
    pub gamma_d: f64,
}

impl MaterialModel {
    pub fn damage(&self) -> DamageParams {
        match self {
            MaterialModel::ClosedForm(p) => {
                DamageParams { eta_d: p.eta_d, kappa_d: p.kappa_d, c_d: p.c_d, beta_d: p.beta_d, gamma_d: p.gamma_d }
            }
            MaterialModel::DataDriven(p) => {
                DamageParams { eta_d: p.eta_d, kappa_d: p.kappa_d, c_d: p.c_d, beta_d: p.beta_d, gamma_d: p.gamma_d }
            }
        }
    }

    /// The same model with the gradient and penalty terms removed, so that
    /// `q = q_loc = ψ_e`.
    pub fn local_only(&self) -> Self {
        let mut m = self.clone();
        match &mut m {
            MaterialModel::ClosedForm(p) => {
                p.c_d = 0.0;
                p.beta_d = 0.0;
            }
            MaterialModel::DataDriven(p) => {
                p.c_d = 0.0;
                p.beta_d = 0.0;
            }
        }
        m
    }

    pub fn is_nonlocal(&self) -> bool {
        let d = self.damage();
        d.c_d > 0.0 || d.beta_d > 0.0
    }

    pub fn validate(&self) -> Result<(), MaterialError> {
        let (mu, lambda) = match self {
            MaterialModel::ClosedForm(p) => (p.mu_e, p.lambda_e),
            MaterialModel::DataDriven(p) => {
                p.psi_iso_net.validate().map_err(|e| MaterialError::InvalidParameter(e.to_string()))?;
                p.yield_net.validate().map_err(|e| MaterialError::InvalidParameter(e.to_string()))?;
                (p.mu_e, p.lambda_e)
            }
        };
        let d = self.damage();
        let checks = [
            ("mu_e", mu, mu > 0.0),
            ("lambda_e", lambda, lambda >= 0.0),
            ("eta_d", d.eta_d, d.eta_d > 0.0),
            ("kappa_d", d.kappa_d, d.kappa_d >= 0.0),
            ("c_d", d.c_d, d.c_d >= 0.0),
            ("beta_d", d.beta_d, d.beta_d >= 0.0),
            ("gamma_d", d.gamma_d, d.gamma_d >= 0.0),
        ];
        for (name, v, ok) in checks {
            if !ok || !v.is_finite() {
                return Err(MaterialError::InvalidParameter(format!("{name} = {v}")));
            }
        }
        Ok(())
    }

    /// Undamaged elastic energy `ψ_e(C)`.
    pub fn elastic_energy<T: Scalar>(&self, c: &Tensor2<T>) -> Result<T, MaterialError> {
        match self {
            MaterialModel::ClosedForm(p) => neo_hookean_energy(c, p.mu_e, p.lambda_e),
            MaterialModel::DataDriven(p) => datadriven_energy(c, p),
        }
    }

    /// Yield map `G(q)`: identity for the closed-form model, the shifted
    /// monotone network otherwise.
    pub fn yield_map<T: Scalar>(&self, q: T) -> T {
        match self {
            MaterialModel::ClosedForm(_) => q,
            MaterialModel::DataDriven(p) => p.yield_net.eval_yield(q),
        }
    }
}

/// `(μ/2)(I1 − 3) − μ ln J + (λ/2)(ln J)²`
pub fn neo_hookean_energy<T: Scalar>(c: &Tensor2<T>, mu_e: f64, lambda_e: f64) -> Result<T, MaterialError> {
    let inv = invariants(c)?;
    let ln_j = inv.j.ln();
    Ok((inv.i1 - 3.0) * (mu_e / 2.0) - ln_j * mu_e + ln_j * ln_j * (lambda_e / 2.0))
}

/// `μ_e ψ̃_iso(I1G, I2G) + λ_e (J + 1/J − 2)²`
pub fn datadriven_energy<T: Scalar>(c: &Tensor2<T>, p: &DataDrivenParams) -> Result<T, MaterialError> {
    let inv = invariants(c)?;
    let iso = p.psi_iso_net.eval_psi_iso(inv.i1g, inv.i2g);
    let vol = (inv.j + inv.j.recip() - 2.0).square();
    Ok(iso * p.mu_e + vol * p.lambda_e)
}

/// Degradation factor `exp(−η ⟨κ − κ_d⟩₊)`.
pub fn degradation_factor<T: Scalar>(kappa: T, eta_d: f64, kappa_d: f64) -> T {
    ((kappa - kappa_d).max_const(0.0) * (-eta_d)).exp()
}

/// `(f_d, d)` with `d = 1 − f_d`.
pub fn degradation(kappa: f64, eta_d: f64, kappa_d: f64) -> (f64, f64) {
    let f = degradation_factor(kappa, eta_d, kappa_d);
    (f, 1.0 - f)
}

/// Internal free energy at a material point.
pub fn internal_energy<T: Scalar>(
    f: &Tensor2<T>,
    phi: T,
    grad_phi: &[T; 3],
    kappa: T,
    m: &MaterialModel,
) -> Result<T, MaterialError> {
    let c = right_cauchy_green(f)?;
    let dp = m.damage();
    let psi_e = m.elastic_energy(&c)?;
    let fd = degradation_factor(kappa, dp.eta_d, dp.kappa_d);
    let mut energy = fd * psi_e;
    if dp.c_d != 0.0 {
        let c_inv = c.inverse()?;
        let w = c_inv.matvec(grad_phi);
        let quad = grad_phi[0] * w[0] + grad_phi[1] * w[1] + grad_phi[2] * w[2];
        energy += quad * (dp.c_d / 2.0);
    }
    if dp.beta_d != 0.0 {
        energy += (phi - kappa).square() * (dp.beta_d / 2.0);
    }
    Ok(energy)
}

/// First Piola–Kirchhoff stress `∂Ψ_int/∂F` at fixed `(φ, ∇φ, κ)`.
pub fn pk1_stress(
    f: &Tensor2<f64>,
    phi: f64,
    grad_phi: &[f64; 3],
    kappa: f64,
    m: &MaterialModel,
) -> Result<Tensor2<f64>, MaterialError> {
    grad_wrt_tensor(
        |fd: &Tensor2<Dual<f64, 9>>| {
            let gp = grad_phi.map(Dual::constant);
            internal_energy(fd, Dual::constant(phi), &gp, Dual::constant(kappa), m)
        },
        f,
    )
}

/// `(Y, Y_scalar) = (∂Ψ/∂∇φ, −∂Ψ/∂φ)`.
pub fn nonlocal_conjugates(
    f: &Tensor2<f64>,
    phi: f64,
    grad_phi: &[f64; 3],
    kappa: f64,
    m: &MaterialModel,
) -> Result<([f64; 3], f64), MaterialError> {
    let g = grad_wrt_scalars(
        |x: [Dual<f64, 4>; 4]| {
            let fd = f.map(Dual::constant);
            internal_energy(&fd, x[0], &[x[1], x[2], x[3]], Dual::constant(kappa), m)
        },
        [phi, grad_phi[0], grad_phi[1], grad_phi[2]],
    )?;
    Ok(([g[1], g[2], g[3]], -g[0]))
}

/// Stress and non-local conjugates obtained from a single dual pass.
#[derive(Clone, Copy, Debug)]
pub struct EnergyGradients<S> {
    pub pk1: Tensor2<S>,
    pub y_vec: [S; 3],
    pub y_scalar: S,
}

/// All first derivatives of `Ψ_int` with respect to `(F, φ, ∇φ)` at fixed
/// `κ`, for any scalar type (so the element kernel can differentiate them
/// once more with respect to nodal unknowns).
pub fn energy_gradients<S: Scalar>(
    f: &Tensor2<S>,
    phi: S,
    grad_phi: &[S; 3],
    kappa: S,
    m: &MaterialModel,
) -> Result<EnergyGradients<S>, MaterialError> {
    type D<S> = Dual<S, 13>;
    let fd = Tensor2::from_fn(|k| D::variable(f.0[k], k));
    let phid = D::variable(phi, 9);
    let gd = [D::variable(grad_phi[0], 10), D::variable(grad_phi[1], 11), D::variable(grad_phi[2], 12)];
    let e = internal_energy(&fd, phid, &gd, D::constant(kappa), m)?;
    let g = e.eps;
    Ok(EnergyGradients { pk1: Tensor2::from_fn(|k| g[k]), y_vec: [g[10], g[11], g[12]], y_scalar: -g[9] })
}

/// Thermodynamic force conjugate to `d`:
/// `q = ψ_e(C) + γ_d β_d (φ − κ) / (η_d f_d(κ))`.
///
/// Below the damage threshold the non-local part uses `f_d = 1`, the
/// right-limit at the threshold.
pub fn driving_force<T: Scalar>(
    f: &Tensor2<T>,
    phi: T,
    _grad_phi: &[T; 3],
    kappa: T,
    m: &MaterialModel,
) -> Result<T, MaterialError> {
    let c = right_cauchy_green(f)?;
    let q_loc = m.elastic_energy(&c)?;
    let dp = m.damage();
    if dp.beta_d == 0.0 || dp.gamma_d == 0.0 {
        return Ok(q_loc);
    }
    let fd = degradation_factor(kappa, dp.eta_d, dp.kappa_d);
    if !(fd.value() >= f64::MIN_POSITIVE) {
        return Err(MaterialError::Numerical(format!("degradation factor underflow at kappa = {}", kappa.value())));
    }
    Ok(q_loc + (phi - kappa) * (dp.gamma_d * dp.beta_d / dp.eta_d) / fd)
}
