//! Fitting both networks to uniaxial stress–stretch histories.
//!
//! Predictions run the local damage point driver under incompressible
//! uniaxial kinematics, `F = diag(λ, λ^{-1/2}, λ^{-1/2})`, so the volumetric
//! term vanishes and the nominal stress is `f_d(κ) dŴ/dλ`. The history
//! variable follows the local return map `κ ← max(κ, N(ψ_e))`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tape::{self, Var};
use super::{Icnn, IcnnWeights, MonotoneNet, MonotoneNetWeights, NetworkError};
use crate::autodiff::{Dual, Scalar};
use crate::materials::{degradation_factor, lame, ClosedFormParams, DataDrivenParams};

/// Smallest admissible stretch in a dataset.
pub const STRETCH_MIN: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSample {
    pub cycle: u32,
    pub stretch: f64,
    /// Axial nominal stress.
    pub stress: f64,
}

/// Samples in time order; `cycle` labels consecutive loading/unloading
/// cycles.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitDataset {
    pub samples: Vec<FitSample>,
}

impl FitDataset {
    pub fn stretches(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.stretch).collect()
    }

    pub fn stresses(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.stress).collect()
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.samples.is_empty() {
            return Err(NetworkError::Schema("dataset is empty".into()));
        }
        let mut last_cycle = 0;
        for (i, s) in self.samples.iter().enumerate() {
            if !(s.stretch >= STRETCH_MIN) || !s.stretch.is_finite() || !s.stress.is_finite() {
                return Err(NetworkError::Schema(format!(
                    "sample {i}: stretch {} / stress {} out of range",
                    s.stretch, s.stress
                )));
            }
            if s.cycle < last_cycle {
                return Err(NetworkError::Schema(format!("sample {i}: cycles out of order")));
            }
            last_cycle = s.cycle;
        }
        Ok(())
    }
}

fn default_mu() -> f64 {
    lame(42.0, 0.45).0
}
fn default_lambda() -> f64 {
    lame(42.0, 0.45).1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Standard deviation of the raw initial parameters.
    pub init_scale: f64,
    /// Relative loss above which training is reported as not converged.
    pub loss_threshold: f64,
    /// Material constants kept fixed during training.
    pub mu_e: f64,
    pub lambda_e: f64,
    pub eta_d: f64,
    pub kappa_d: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 5000,
            learning_rate: 1e-2,
            seed: 0,
            init_scale: 0.3,
            loss_threshold: 1e-3,
            mu_e: default_mu(),
            lambda_e: default_lambda(),
            eta_d: 5.0,
            kappa_d: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    /// Final loss `Σ(P − P*)² / Σ P*²` (plain squared error when all targets
    /// vanish).
    pub loss: f64,
    pub relative_rmse: f64,
    pub epochs: usize,
    pub converged: bool,
}

/// Point of an incompressible uniaxial prediction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniaxialPoint {
    pub stretch: f64,
    pub stress: f64,
    pub kappa: f64,
    pub damage: f64,
}

/// Runs the local point driver along `stretches` and calls `emit` with the
/// stress and history variable at every sample.
fn drive_path<T: Scalar>(
    psi: &Icnn<T>,
    yield_net: &MonotoneNet<T>,
    mu_e: f64,
    eta_d: f64,
    kappa_d: f64,
    stretches: &[f64],
    mut emit: impl FnMut(T, T),
) {
    let psi_d: Icnn<Dual<T, 1>> = psi.map(Dual::constant);
    let shift = psi.forward([T::from_f64(3.0), T::from_f64(3.0)]);
    let n0 = yield_net.forward(T::zero());
    let mut kappa = T::zero();
    for &lam in stretches {
        let l = Dual::<T, 1>::variable(T::from_f64(lam), 0);
        let i1g = l * l + l.recip() * 2.0;
        let i2 = l * 2.0 + (l * l).recip();
        let i2g = i2 * i2 * i2 / 9.0;
        let w = (psi_d.forward([i1g, i2g]) - Dual::constant(shift)) * mu_e;
        let candidate = yield_net.forward(w.re) - n0;
        if candidate > kappa {
            kappa = candidate;
        }
        emit(degradation_factor(kappa, eta_d, kappa_d) * w.eps[0], kappa);
    }
}

/// Incompressible uniaxial response of a data-driven model along a stretch
/// history.
pub fn predict_incompressible(p: &DataDrivenParams, stretches: &[f64]) -> Vec<UniaxialPoint> {
    let mut out = Vec::with_capacity(stretches.len());
    let mut it = stretches.iter();
    drive_path(&p.psi_iso_net, &p.yield_net, p.mu_e, p.eta_d, p.kappa_d, stretches, |s, k| {
        let stretch = *it.next().expect("one stress per stretch");
        out.push(UniaxialPoint {
            stretch,
            stress: s,
            kappa: k,
            damage: 1.0 - degradation_factor(k, p.eta_d, p.kappa_d),
        });
    });
    out
}

/// Loading/unloading history: cycle `k` goes from `λ = 1` to `peaks[k]` and
/// back, with `points_per_leg` samples per leg.
pub fn cyclic_stretches(peaks: &[f64], points_per_leg: usize) -> Vec<(u32, f64)> {
    let mut out = Vec::new();
    for (c, &peak) in peaks.iter().enumerate() {
        for i in 0..=points_per_leg {
            out.push((c as u32, 1.0 + (peak - 1.0) * i as f64 / points_per_leg as f64));
        }
        for i in 1..=points_per_leg {
            out.push((c as u32, peak - (peak - 1.0) * i as f64 / points_per_leg as f64));
        }
    }
    out
}

/// Synthetic data from the closed-form model under the same kinematics:
/// `P = f_d(κ) μ (λ − λ⁻²)`, `κ = max ψ_NH` along the history.
pub fn synthetic_dataset(p: &ClosedFormParams, peaks: &[f64], points_per_leg: usize) -> FitDataset {
    let mut kappa: f64 = 0.0;
    let samples = cyclic_stretches(peaks, points_per_leg)
        .into_iter()
        .map(|(cycle, lam)| {
            let psi = 0.5 * p.mu_e * (lam * lam + 2.0 / lam - 3.0);
            kappa = kappa.max(psi);
            let stress = degradation_factor(kappa, p.eta_d, p.kappa_d) * p.mu_e * (lam - 1.0 / (lam * lam));
            FitSample { cycle, stretch: lam, stress }
        })
        .collect();
    FitDataset { samples }
}

fn raw_counts() -> (usize, usize) {
    (IcnnWeights::zeros().parameter_count(), MonotoneNetWeights::zeros().parameter_count())
}

fn split_params<T: Scalar>(raw: &[T]) -> (Icnn<T>, MonotoneNet<T>) {
    let (ni, _) = raw_counts();
    (IcnnWeights::from_raw(&raw[..ni]), MonotoneNetWeights::from_raw(&raw[ni..]))
}

fn normalizer(data: &FitDataset) -> f64 {
    let s: f64 = data.samples.iter().map(|s| s.stress * s.stress).sum();
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

fn loss_of<T: Scalar>(raw: &[T], data: &FitDataset, cfg: &FitConfig, norm: f64) -> T {
    let (psi, yld) = split_params(raw);
    let mut loss = T::zero();
    let mut targets = data.samples.iter();
    drive_path(&psi, &yld, cfg.mu_e, cfg.eta_d, cfg.kappa_d, &data.stretches(), |s, _| {
        let t = targets.next().expect("one target per sample").stress;
        loss += (s - t).square();
    });
    loss / norm
}

/// Trains both networks with full-batch Adam on the raw parameters.
/// Training that ends above `loss_threshold` is reported through
/// [`FitReport::converged`]; the best weights seen are returned either way.
pub fn fit(data: &FitDataset, cfg: &FitConfig) -> Result<(DataDrivenParams, FitReport), NetworkError> {
    data.validate()?;
    let (ni, nm) = raw_counts();
    let n = ni + nm;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.init_scale).map_err(|e| NetworkError::Schema(format!("init_scale: {e}")))?;
    let mut raw: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    // start the yield map near the identity
    raw[n - 2] = 1.0;
    raw[n - 1] = 0.0;

    let norm = normalizer(data);
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut best = (f64::INFINITY, raw.clone());
    for epoch in 1..=cfg.epochs {
        tape::reset();
        let vars: Vec<Var> = raw.iter().map(|&r| tape::input(r)).collect();
        let loss = loss_of(&vars, data, cfg, norm);
        let lv = loss.value();
        if lv < best.0 {
            best = (lv, raw.clone());
        }
        if lv == 0.0 || !lv.is_finite() {
            break;
        }
        let g = tape::gradient(loss, n);
        let c1 = 1.0 - f64::powi(b1, epoch as i32);
        let c2 = 1.0 - f64::powi(b2, epoch as i32);
        for k in 0..n {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            raw[k] -= cfg.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
        }
    }
    tape::reset();
    let final_loss = loss_of(&best.1, data, cfg, norm);
    if final_loss < best.0 {
        best.0 = final_loss;
    }
    let (psi, yld) = split_params(&best.1);
    let params = DataDrivenParams {
        mu_e: cfg.mu_e,
        lambda_e: cfg.lambda_e,
        psi_iso_net: psi,
        yield_net: yld,
        eta_d: cfg.eta_d,
        kappa_d: cfg.kappa_d,
        c_d: 0.0,
        beta_d: 0.0,
        gamma_d: 1.0,
    };
    params.psi_iso_net.validate()?;
    params.yield_net.validate()?;
    let report = FitReport {
        loss: final_loss,
        relative_rmse: final_loss.sqrt(),
        epochs: cfg.epochs,
        converged: final_loss <= cfg.loss_threshold,
    };
    Ok((params, report))
}

/// `sqrt(Σ(p − t)² / Σ t²)`.
pub fn relative_rmse(pred: &[f64], target: &[f64]) -> f64 {
    let num: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    let den: f64 = target.iter().map(|t| t * t).sum();
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

const HEADER: [&str; 3] = ["cycle", "stretch", "stress"];

fn csv_error(path: &Path, e: csv::Error) -> NetworkError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    NetworkError::Parse { path: path.display().to_string(), line, column: 0, message: e.to_string() }
}

pub fn read_dataset(path: &Path) -> Result<FitDataset, NetworkError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(NetworkError::Parse {
            path: path.display().to_string(),
            line: 1,
            column: 0,
            message: format!("expected header {}", HEADER.join(",")),
        });
    }
    let samples = rdr.deserialize().collect::<Result<Vec<FitSample>, _>>().map_err(|e| csv_error(path, e))?;
    let data = FitDataset { samples };
    data.validate()?;
    Ok(data)
}

pub fn write_dataset(data: &FitDataset, path: &Path) -> Result<(), NetworkError> {
    let io = |e: csv::Error| NetworkError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for s in &data.samples {
        w.serialize(s).map_err(io)?;
    }
    w.flush().map_err(|e| NetworkError::Io { path: path.display().to_string(), source: e })
}
