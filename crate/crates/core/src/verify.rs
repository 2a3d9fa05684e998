//! Property suites behind the `verify` command: stresses against finite
//! differences, stress-free reference, network convexity and monotonicity,
//! and the local KKT conditions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::damage::{return_map, yield_function, ReturnMapOptions};
use crate::materials::{
    internal_energy, neo_hookean_energy, pk1_stress, ClosedFormParams, DataDrivenParams, MaterialModel,
};
use crate::networks::{IcnnWeights, MonotoneNetWeights};
use crate::tensor::{right_cauchy_green, Tensor2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Random states of the stress checks.
    pub stress_states: usize,
    /// Random weight draws of the reference-state check.
    pub weight_draws: usize,
    /// Samples of the convexity, monotonicity and KKT checks.
    pub samples: usize,
    pub fd_step: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { seed: 0, stress_states: 100, weight_draws: 20, samples: 10_000, fd_step: 1e-6 }
    }
}

/// Outcome of one property suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub worst: f64,
    pub tolerance: f64,
    pub failures: usize,
    pub cases: usize,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.worst <= self.tolerance
    }

    fn record(&mut self, value: f64) {
        self.cases += 1;
        if !(value <= self.tolerance) {
            self.failures += 1;
        }
        if value > self.worst || value.is_nan() {
            self.worst = value;
        }
    }

    fn new(name: &'static str, tolerance: f64) -> Self {
        Self { name, worst: 0.0, tolerance, failures: 0, cases: 0 }
    }
}

/// Closed-form parameters of the plate example.
pub fn plate_parameters() -> ClosedFormParams {
    ClosedFormParams::from_young(210.0, 0.3, 0.002, 0.1).with_nonlocal(1.0, 1000.0)
}

/// Data-driven parameters with random networks.
pub fn random_data_driven(rng: &mut impl Rng, scale: f64) -> DataDrivenParams {
    let (mu_e, lambda_e) = crate::materials::lame(42.0, 0.45);
    DataDrivenParams {
        mu_e,
        lambda_e,
        psi_iso_net: IcnnWeights::random(rng, scale),
        yield_net: MonotoneNetWeights::random(rng, scale),
        eta_d: 0.5,
        kappa_d: 0.2,
        c_d: 1.0,
        beta_d: 1000.0,
        gamma_d: 1.0,
    }
}

/// `I + H` with entries of `H` uniform in `[-amp, amp]` and `det F ≥ 0.3`.
pub fn random_deformation(rng: &mut impl Rng, amp: f64) -> Tensor2<f64> {
    loop {
        let f = Tensor2::from_fn(|k| if k % 4 == 0 { 1.0 } else { 0.0 } + rng.random_range(-amp..amp));
        if f.det() >= 0.3 {
            return f;
        }
    }
}

/// Non-local state `(φ, ∇φ, κ)` around a history value.
fn random_nonlocal(rng: &mut impl Rng) -> (f64, [f64; 3], f64) {
    let kappa = rng.random_range(0.0..1.0);
    let phi = kappa + rng.random_range(-1e-3..1e-3);
    let g = std::array::from_fn(|_| rng.random_range(-0.5..0.5));
    (phi, g, kappa)
}

fn fd_pk1(f: &Tensor2<f64>, phi: f64, g: &[f64; 3], kappa: f64, m: &MaterialModel, h: f64) -> Option<Tensor2<f64>> {
    let mut out = Tensor2::zeros();
    for k in 0..9 {
        let (mut fp, mut fm) = (*f, *f);
        fp.0[k] += h;
        fm.0[k] -= h;
        let ep = internal_energy(&fp, phi, g, kappa, m).ok()?;
        let em = internal_energy(&fm, phi, g, kappa, m).ok()?;
        out.0[k] = (ep - em) / (2.0 * h);
    }
    Some(out)
}

fn stress_vs_fd(
    name: &'static str,
    cfg: &VerifyConfig,
    rng: &mut ChaCha8Rng,
    mut model: impl FnMut(&mut ChaCha8Rng) -> MaterialModel,
) -> Check {
    let mut check = Check::new(name, 1e-5);
    for _ in 0..cfg.stress_states {
        let m = model(rng);
        let f = random_deformation(rng, 0.3);
        let (phi, g, kappa) = random_nonlocal(rng);
        let ad = pk1_stress(&f, phi, &g, kappa, &m);
        let fd = fd_pk1(&f, phi, &g, kappa, &m, cfg.fd_step);
        let err = match (ad, fd) {
            (Ok(a), Some(b)) => (a - b).norm() / a.norm().max(1.0),
            _ => f64::INFINITY,
        };
        check.record(err);
    }
    check
}

fn analytic_neo_hookean(cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> Check {
    let p = ClosedFormParams { c_d: 0.0, beta_d: 0.0, ..plate_parameters() };
    let m = MaterialModel::ClosedForm(p);
    let mut check = Check::new("neo-Hookean stress, analytic vs AD", 1e-10);
    for _ in 0..cfg.stress_states {
        let f = random_deformation(rng, 0.3);
        let err = (|| {
            let ad = pk1_stress(&f, 0.0, &[0.0; 3], 0.0, &m).ok()?;
            let fit = f.inverse().ok()?.transpose();
            let exact = (f - fit).scale(p.mu_e) + fit.scale(p.lambda_e * f.det().ln());
            Some((ad - exact).norm() / exact.norm().max(1.0))
        })()
        .unwrap_or(f64::INFINITY);
        check.record(err);
    }
    check
}

fn reference_state(cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> Check {
    let mut check = Check::new("stress-free reference state", 1e-10);
    let i = Tensor2::identity();
    let mut models = vec![MaterialModel::ClosedForm(plate_parameters())];
    models.extend((0..cfg.weight_draws).map(|_| MaterialModel::DataDriven(random_data_driven(rng, 0.5))));
    for m in &models {
        let p = pk1_stress(&i, 0.0, &[0.0; 3], 0.0, m).map(|p| p.norm()).unwrap_or(f64::INFINITY);
        check.record(p);
    }
    check
}

/// Midpoint convexity of the energy network on `[3, 20]²` and monotonicity
/// of the yield network, each on fresh random weights.
fn network_properties(cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> [Check; 2] {
    const SLACK: f64 = 1e-12;
    let mut convex = Check::new("energy network midpoint convexity", SLACK);
    let mut monotone = Check::new("yield network monotonicity", SLACK);
    for _ in 0..cfg.samples {
        let (icnn, yld) = (IcnnWeights::random(rng, 0.5), MonotoneNetWeights::random(rng, 0.5));
        let x: [f64; 2] = std::array::from_fn(|_| rng.random_range(3.0..20.0));
        let y: [f64; 2] = std::array::from_fn(|_| rng.random_range(3.0..20.0));
        let mid = [0.5 * (x[0] + y[0]), 0.5 * (x[1] + y[1])];
        let (fx, fy, fm) = (icnn.eval(x), icnn.eval(y), icnn.eval(mid));
        convex.record((fm - 0.5 * (fx + fy)) / fx.abs().max(fy.abs()).max(1.0));
        let (a, b) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let (na, nb) = (yld.eval(a), yld.eval(b));
        monotone.record(-(nb - na) * (b - a) / (na.abs().max(nb.abs()).max(1.0) * (b - a).abs().max(1.0)));
    }
    [convex, monotone]
}

/// Smallest κ ≥ κ_n with Φ(κ) ≤ 0, by bisection on a doubling bracket.
pub fn bisection_kappa(f: &Tensor2<f64>, phi: f64, g: &[f64; 3], kappa_n: f64, m: &MaterialModel) -> Option<f64> {
    let eval = |k: f64| yield_function(f, phi, g, k, m).ok();
    if eval(kappa_n)? <= 0.0 {
        return Some(kappa_n);
    }
    let (mut lo, mut step) = (kappa_n, 1e-3);
    let mut hi = kappa_n + step;
    while eval(hi)? > 0.0 {
        lo = hi;
        step *= 2.0;
        hi = kappa_n + step;
        if step > 1e12 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eval(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

fn kkt(cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> [Check; 3] {
    let mut conditions = Check::new("KKT conditions", 1e-10);
    let mut local = Check::new("local limit kappa = psi", 1e-12);
    let mut oracle = Check::new("return map vs bisection", 1e-9);
    let opts = ReturnMapOptions::default();
    let closed = plate_parameters();
    for s in 0..cfg.samples {
        let m = if s % 2 == 0 {
            MaterialModel::ClosedForm(closed)
        } else {
            MaterialModel::DataDriven(random_data_driven(rng, 0.5))
        };
        let f = random_deformation(rng, 0.2);
        let (phi, g, kappa_n) = random_nonlocal(rng);
        match return_map(&f, phi, &g, kappa_n, &m, opts) {
            Ok(r) => {
                let phi_next = yield_function(&f, phi, &g, r.kappa_next, &m).unwrap_or(f64::INFINITY);
                let violation = [-r.delta_lambda, phi_next, (r.delta_lambda * phi_next).abs(), kappa_n - r.kappa_next]
                    .into_iter()
                    .fold(0.0, f64::max);
                conditions.record(violation);
                let err = match bisection_kappa(&f, phi, &g, kappa_n, &m) {
                    Some(k) => (k - r.kappa_next).abs() / k.abs().max(1.0),
                    None => f64::INFINITY,
                };
                oracle.record(err);
            }
            Err(_) => {
                conditions.record(f64::INFINITY);
                oracle.record(f64::INFINITY);
            }
        }

        let lm = MaterialModel::ClosedForm(ClosedFormParams { c_d: 0.0, beta_d: 0.0, ..closed });
        let psi = right_cauchy_green(&f)
            .ok()
            .and_then(|c| neo_hookean_energy(&c, closed.mu_e, closed.lambda_e).ok())
            .unwrap_or(f64::NAN);
        let kn = rng.random_range(0.0..psi.max(1e-3));
        let err = match return_map(&f, 0.0, &[0.0; 3], kn, &lm, opts) {
            Ok(r) => (r.kappa_next - kn.max(psi)).abs() / psi.max(1.0),
            Err(_) => f64::INFINITY,
        };
        local.record(err);
    }
    [conditions, local, oracle]
}

/// Runs every suite.
pub fn run(cfg: &VerifyConfig) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let closed = MaterialModel::ClosedForm(plate_parameters());
    let mut out = vec![
        stress_vs_fd("closed-form stress, AD vs FD", cfg, &mut rng, |_| closed.clone()),
        stress_vs_fd("data-driven stress, AD vs FD", cfg, &mut rng, |r| {
            MaterialModel::DataDriven(random_data_driven(r, 0.5))
        }),
        analytic_neo_hookean(cfg, &mut rng),
        reference_state(cfg, &mut rng),
    ];
    out.extend(network_properties(cfg, &mut rng));
    out.extend(kkt(cfg, &mut rng));
    out
}
