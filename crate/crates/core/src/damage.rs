//! Local damage evolution at a material point.
//!
//! The KKT system of the return map is reduced to the scalar equation
//! `Φ(κ) = G(q(κ)) − κ = 0` on `[κ_n, ∞)`, solved by Newton iteration
//! safeguarded with a bracket; the multiplier follows as
//! `Δλ = (κ − κ_n) / G'(q)`.

use thiserror::Error;

use crate::autodiff::{derivative, Dual, Scalar};
use crate::materials::{degradation, driving_force, MaterialError, MaterialModel};
use crate::tensor::Tensor2;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100;
/// Bracket expansions before the map gives up.
pub const MAX_DOUBLINGS: usize = 60;
/// Lower guard on `G'(q)` when recovering `Δλ`.
pub const MIN_YIELD_SLOPE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DamageError {
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error("yield function is not a number at kappa = {kappa}")]
    NotANumber { kappa: f64 },
    #[error("no bracket for the yield equation within {MAX_DOUBLINGS} doublings from kappa = {kappa_n}")]
    NoBracket { kappa_n: f64 },
    #[error("return map did not converge (last kappa = {}, residual = {})", last.kappa_next, last.phi_d_residual)]
    NonConvergence { last: ReturnMapResult },
    #[error("lateral equilibrium did not converge at stretch {stretch}")]
    Lateral { stretch: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnMapOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ReturnMapOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnMapResult {
    pub kappa_next: f64,
    pub delta_lambda: f64,
    /// `Φ(κ_next)`.
    pub phi_d_residual: f64,
    pub iterations: usize,
    /// The KKT conditions hold to the requested tolerance.
    pub converged: bool,
    /// `G'(q) ≈ 0` at the solution; `Δλ` used the guard slope.
    pub degenerate: bool,
    /// The bracket shrank to adjacent floating-point values without reaching
    /// the tolerance. `κ_next` is the upper end, so `Φ ≤ 0` still holds.
    pub resolution_limited: bool,
}

impl ReturnMapResult {
    pub fn is_elastic(&self) -> bool {
        self.delta_lambda == 0.0
    }
}

/// `Φ = G(q) − κ` for any scalar type, so that its derivatives with respect
/// to deformation and κ are available to the global solver.
pub fn yield_function<T: Scalar>(
    f: &Tensor2<T>,
    phi: T,
    grad_phi: &[T; 3],
    kappa: T,
    m: &MaterialModel,
) -> Result<T, MaterialError> {
    let q = driving_force(f, phi, grad_phi, kappa, m)?;
    Ok(m.yield_map(q) - kappa)
}

/// Closure `κ ↦ (Φ, ∂Φ/∂κ)` at a fixed deformation state.
struct YieldCurve<'a> {
    f: Tensor2<Dual<f64, 1>>,
    phi: Dual<f64, 1>,
    grad_phi: [Dual<f64, 1>; 3],
    m: &'a MaterialModel,
}

impl<'a> YieldCurve<'a> {
    fn new(f: &Tensor2<f64>, phi: f64, grad_phi: &[f64; 3], m: &'a MaterialModel) -> Self {
        Self { f: f.map(Dual::constant), phi: Dual::constant(phi), grad_phi: grad_phi.map(Dual::constant), m }
    }

    fn eval(&self, kappa: f64) -> Result<(f64, f64), DamageError> {
        let (v, d) = derivative(|k| yield_function(&self.f, self.phi, &self.grad_phi, k, self.m), kappa)?;
        if !v.is_finite() || !d.is_finite() {
            return Err(DamageError::NotANumber { kappa });
        }
        Ok((v, d))
    }
}

fn yield_slope(
    f: &Tensor2<f64>,
    phi: f64,
    grad_phi: &[f64; 3],
    kappa: f64,
    m: &MaterialModel,
) -> Result<f64, DamageError> {
    let q = driving_force(f, phi, grad_phi, kappa, m)?;
    let (_, g) = derivative::<f64, MaterialError, _>(|x| Ok(m.yield_map(x)), q)?;
    Ok(g)
}

/// Solves the local KKT problem for the history variable.
pub fn return_map(
    f: &Tensor2<f64>,
    phi: f64,
    grad_phi: &[f64; 3],
    kappa_n: f64,
    m: &MaterialModel,
    opts: ReturnMapOptions,
) -> Result<ReturnMapResult, DamageError> {
    let curve = YieldCurve::new(f, phi, grad_phi, m);
    let (phi_n, _) = curve.eval(kappa_n)?;
    if phi_n <= opts.tol {
        return Ok(ReturnMapResult {
            kappa_next: kappa_n,
            delta_lambda: 0.0,
            phi_d_residual: phi_n,
            iterations: 0,
            converged: true,
            degenerate: false,
            resolution_limited: false,
        });
    }

    let finish = |kappa: f64, residual: f64, iterations: usize, strict: bool| -> Result<ReturnMapResult, DamageError> {
        let slope = yield_slope(f, phi, grad_phi, kappa, m)?;
        let degenerate = slope < MIN_YIELD_SLOPE;
        let delta_lambda = (kappa - kappa_n) / slope.max(MIN_YIELD_SLOPE);
        Ok(ReturnMapResult {
            kappa_next: kappa,
            delta_lambda,
            phi_d_residual: residual,
            iterations,
            converged: strict,
            degenerate,
            resolution_limited: !strict,
        })
    };
    let accepted = |kappa: f64, residual: f64| -> Result<bool, DamageError> {
        if residual.abs() > opts.tol {
            return Ok(false);
        }
        let slope = yield_slope(f, phi, grad_phi, kappa, m)?.max(MIN_YIELD_SLOPE);
        Ok(residual.abs() * ((kappa - kappa_n) / slope).max(1.0) <= opts.tol)
    };

    // The first trial is exact in the local limit, where Φ(κ) = ψ_e − κ.
    let mut lo = kappa_n;
    let mut step = phi_n;
    let mut hi = kappa_n + step;
    let mut iterations = 1;
    let (mut f_hi, mut d_hi) = curve.eval(hi)?;
    let mut doublings = 0;
    while f_hi > 0.0 {
        if accepted(hi, f_hi)? {
            return finish(hi, f_hi, iterations, true);
        }
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(DamageError::NoBracket { kappa_n });
        }
        lo = hi;
        step *= 2.0;
        hi = kappa_n + step;
        (f_hi, d_hi) = curve.eval(hi)?;
        iterations += 1;
    }

    let (mut f_lo, mut d_lo) = curve.eval(lo)?;
    let (mut x, mut fx) = (hi, f_hi);
    let mut width = [f64::INFINITY; 2];
    loop {
        if accepted(x, fx)? {
            return finish(x, fx, iterations, true);
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(f64::MIN_POSITIVE) {
            return finish(hi, f_hi, iterations, false);
        }
        if iterations >= opts.max_iter {
            let last = ReturnMapResult {
                kappa_next: x,
                delta_lambda: 0.0,
                phi_d_residual: fx,
                iterations,
                converged: false,
                degenerate: false,
                resolution_limited: false,
            };
            return Err(DamageError::NonConvergence { last });
        }
        // Newton from the bracket end with the smaller residual, else from
        // the other end, else bisection. Bisection is also forced when two
        // steps have not halved the bracket.
        let stalled = hi - lo > 0.5 * width[0];
        width = [width[1], hi - lo];
        let inside = |t: f64| !stalled && t > lo && t < hi;
        let newton = |x: f64, f: f64, d: f64| if d != 0.0 { x - f / d } else { f64::NAN };
        let (a, b) = (newton(lo, f_lo, d_lo), newton(hi, f_hi, d_hi));
        let (first, second) = if f_lo.abs() <= f_hi.abs() { (a, b) } else { (b, a) };
        x = if inside(first) {
            first
        } else if inside(second) {
            second
        } else {
            0.5 * (lo + hi)
        };
        let dx;
        (fx, dx) = curve.eval(x)?;
        iterations += 1;
        if fx > 0.0 {
            (lo, f_lo, d_lo) = (x, fx, dx);
        } else {
            (hi, f_hi, d_hi) = (x, fx, dx);
        }
    }
}

/// State of a material point under homogeneous uniaxial stress.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointState {
    pub stretch: f64,
    /// Lateral stretch solving `P22 = P33 = 0`.
    pub lateral: f64,
    /// Axial first Piola–Kirchhoff stress.
    pub stress: f64,
    pub kappa: f64,
    pub damage: f64,
    /// Driving force at the committed state.
    pub q: f64,
}

fn lateral_energy<T: Scalar>(m: &MaterialModel, stretch: f64, t: T) -> Result<T, MaterialError> {
    let z = T::zero();
    let f = Tensor2([T::from_f64(stretch), z, z, z, t, z, z, z, t]);
    let c = f.transpose() * f;
    m.elastic_energy(&c)
}

/// Lateral stretch at which the undamaged energy is stationary, i.e. the
/// lateral faces are traction free. The energy is convex in `t` along this
/// path, so its derivative is bracketed and refined by safeguarded Newton.
pub fn lateral_stretch(m: &MaterialModel, stretch: f64, guess: f64) -> Result<f64, DamageError> {
    type D2 = Dual<Dual<f64, 1>, 1>;
    let slope = |t: f64| -> Result<(f64, f64), DamageError> {
        let td = D2::variable(Dual::variable(t, 0), 0);
        let e = lateral_energy(m, stretch, td)?;
        let (g, h) = (e.eps[0].re, e.eps[0].eps[0]);
        if !g.is_finite() || !h.is_finite() {
            return Err(DamageError::Lateral { stretch });
        }
        Ok((g, h))
    };
    let (mut lo, mut hi) = (guess, guess);
    let mut k = 0;
    while slope(lo)?.0 > 0.0 {
        lo *= 0.5;
        k += 1;
        if k > MAX_DOUBLINGS {
            return Err(DamageError::Lateral { stretch });
        }
    }
    while slope(hi)?.0 < 0.0 {
        hi *= 2.0;
        k += 1;
        if k > MAX_DOUBLINGS {
            return Err(DamageError::Lateral { stretch });
        }
    }
    let mut t = guess.clamp(lo, hi);
    for _ in 0..200 {
        let (g, h) = slope(t)?;
        if g == 0.0 {
            return Ok(t);
        }
        if g > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let newton = t - g / h;
        let next = if h > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - t).abs() <= 2.0 * f64::EPSILON * t || hi - lo <= 2.0 * f64::EPSILON * hi {
            return Ok(next);
        }
        t = next;
    }
    Err(DamageError::Lateral { stretch })
}

/// Local point driver under uniaxial stress along a stretch history.
///
/// Lateral equilibrium does not involve the degradation factor, so the
/// lateral stretch is found from the undamaged energy and the history
/// variable follows from the local return map. The model's non-local terms
/// are ignored.
pub fn uniaxial_stress_path(
    m: &MaterialModel,
    stretches: &[f64],
    opts: ReturnMapOptions,
) -> Result<Vec<PointState>, DamageError> {
    let local = m.local_only();
    let dp = local.damage();
    let mut kappa = 0.0;
    let mut lateral = 1.0;
    let mut out = Vec::with_capacity(stretches.len());
    for &stretch in stretches {
        lateral = lateral_stretch(&local, stretch, lateral)?;
        let f = Tensor2::diag(stretch, lateral, lateral);
        let rm = return_map(&f, kappa, &[0.0; 3], kappa, &local, opts)?;
        if !rm.converged {
            return Err(DamageError::NonConvergence { last: rm });
        }
        kappa = rm.kappa_next;
        let p = crate::materials::pk1_stress(&f, kappa, &[0.0; 3], kappa, &local)?;
        let q = driving_force(&f, kappa, &[0.0; 3], kappa, &local)?;
        out.push(PointState {
            stretch,
            lateral,
            stress: p[(0, 0)],
            kappa,
            damage: degradation(kappa, dp.eta_d, dp.kappa_d).1,
            q,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::{neo_hookean_energy, ClosedFormParams};

    fn plate() -> ClosedFormParams {
        let (mu, lambda) = crate::materials::lame(210.0, 0.3);
        ClosedFormParams {
            mu_e: mu,
            lambda_e: lambda,
            eta_d: 0.002,
            kappa_d: 0.1,
            c_d: 1.0,
            beta_d: 1000.0,
            gamma_d: 1.0,
        }
    }

    fn stretch_for_energy(m: &MaterialModel, target: f64) -> Tensor2<f64> {
        // uniaxial strain, bisection on the stretch
        let (mut lo, mut hi) = (1.0, 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let f = Tensor2::diag(mid, 1.0, 1.0);
            if m.elastic_energy(&(f.transpose() * f)).unwrap() < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Tensor2::diag(0.5 * (lo + hi), 1.0, 1.0)
    }

    #[test]
    fn yield_function_cases() {
        let m = MaterialModel::ClosedForm(plate());
        let i = Tensor2::<f64>::identity();
        assert_eq!(yield_function(&i, 0.0, &[0.0; 3], 0.0, &m).unwrap(), 0.0);

        let f = stretch_for_energy(&m, 0.3);
        let v = yield_function(&f, 0.5, &[0.0; 3], 0.5, &m).unwrap();
        assert!((v + 0.2).abs() < 1e-12);

        let f = stretch_for_energy(&m, 0.2);
        let v = yield_function(&f, 0.1005, &[0.0; 3], 0.1, &m).unwrap();
        assert!((v - 250.1).abs() < 1e-9, "{v}");
    }

    #[test]
    fn elastic_trial() {
        let m = MaterialModel::ClosedForm(plate());
        let f = stretch_for_energy(&m, 0.3);
        let r = return_map(&f, 0.5, &[0.0; 3], 0.5, &m, ReturnMapOptions::default()).unwrap();
        assert_eq!((r.kappa_next, r.delta_lambda, r.converged), (0.5, 0.0, true));
        assert!(r.phi_d_residual < 0.0);
    }

    #[test]
    fn local_limit_is_exact() {
        let m = MaterialModel::ClosedForm(plate()).local_only();
        let f = Tensor2([1.2, 0.1, 0.0, 0.05, 0.95, 0.0, 0.0, 0.02, 1.05]);
        let psi = neo_hookean_energy(&(f.transpose() * f), plate().mu_e, plate().lambda_e).unwrap();
        let r = return_map(&f, 0.0, &[0.0; 3], 0.3, &m, ReturnMapOptions::default()).unwrap();
        assert!((r.kappa_next - psi).abs() <= 1e-15);
        assert!(r.converged && !r.resolution_limited);
        assert!((r.delta_lambda - (psi - 0.3)).abs() < 1e-14);
    }

    #[test]
    fn nonlocal_solution_satisfies_yield() {
        let p = ClosedFormParams { eta_d: 0.5, beta_d: 10.0, ..plate() };
        let m = MaterialModel::ClosedForm(p);
        let f = Tensor2::diag(1.2, 0.97, 0.97);
        let r = return_map(&f, 0.8, &[0.1, 0.0, 0.0], 0.2, &m, ReturnMapOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.kappa_next > 0.2);
        assert!(r.phi_d_residual.abs() <= 1e-10);
    }

    #[test]
    fn lateral_stretch_of_neo_hookean() {
        let p = ClosedFormParams::from_young(42.0, 0.45, 5.0, 0.5);
        let m = MaterialModel::ClosedForm(p);
        let t = lateral_stretch(&m, 1.0, 1.0).unwrap();
        assert!((t - 1.0).abs() < 1e-14);
        let lam = 1.3;
        let t = lateral_stretch(&m, lam, 1.0).unwrap();
        // P22 = μ(t − 1/t) + λ ln(J)/t = 0
        let j: f64 = lam * t * t;
        let p22 = p.mu_e * (t - 1.0 / t) + p.lambda_e * j.ln() / t;
        assert!(p22.abs() < 1e-11, "{p22}");
        assert!(t < 1.0);
    }

    #[test]
    fn point_driver_kappa_is_running_max_of_energy() {
        let p = ClosedFormParams::from_young(42.0, 0.45, 5.0, 0.5);
        let m = MaterialModel::ClosedForm(p);
        let path: Vec<f64> =
            (0..=20).map(|i| 1.0 + 0.02 * i as f64).chain((0..10).map(|i| 1.38 - 0.03 * i as f64)).collect();
        let states = uniaxial_stress_path(&m, &path, ReturnMapOptions::default()).unwrap();
        let mut running: f64 = 0.0;
        for s in &states {
            let f = Tensor2::diag(s.stretch, s.lateral, s.lateral);
            running = running.max(neo_hookean_energy(&(f.transpose() * f), p.mu_e, p.lambda_e).unwrap());
            assert!((s.kappa - running).abs() <= 1e-15 * running.max(1.0));
        }
        assert!(states.last().unwrap().damage > 0.0);
    }
}
