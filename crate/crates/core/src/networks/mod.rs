//! Physics-augmented networks: an input-convex network for the isochoric
//! energy and a monotone network for the damage yield function.
//!
//! Both architectures are fixed: two hidden layers of width [`HIDDEN`] with
//! softplus activations. Weights that must be non-negative are stored in their
//! effective (already non-negative) form; trainers work on unconstrained raw
//! parameters and square them.

mod fit;
mod tape;

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Scalar;
use crate::materials::DataDrivenParams;

pub use fit::{
    cyclic_stretches, fit, predict_incompressible, read_dataset, relative_rmse, synthetic_dataset, write_dataset,
    FitConfig, FitDataset, FitReport, FitSample, UniaxialPoint, STRETCH_MIN,
};

/// Width of both hidden layers.
pub const HIDDEN: usize = 8;
/// Inputs of the energy network: `(I1G, I2G)`.
pub const ICNN_INPUTS: usize = 2;
pub const WEIGHT_FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),
    #[error("parse error at {path} (line {line}, column {column}): {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcnnLayer<W = f64> {
    /// Passthrough from the previous hidden layer (rows = outputs). Empty for
    /// the first layer. Entries must be non-negative.
    pub w_z: Vec<Vec<W>>,
    /// Skip connection from the network input (rows = outputs, 2 columns).
    pub w_x: Vec<Vec<W>>,
    pub bias: Vec<W>,
}

/// Input-convex network `R^2 -> R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Icnn<W = f64> {
    pub layers: Vec<IcnnLayer<W>>,
}

pub type IcnnWeights = Icnn<f64>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneLayer<W = f64> {
    /// Non-negative weights, rows = outputs.
    pub w: Vec<Vec<W>>,
    pub bias: Vec<W>,
}

/// Non-decreasing network `R -> R`, plus a linear skip `a0 q` and offset `b0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneNet<W = f64> {
    pub layers: Vec<MonotoneLayer<W>>,
    pub a0: W,
    pub b0: W,
}

pub type MonotoneNetWeights = MonotoneNet<f64>;

fn cast_matrix<W: Copy, T>(m: &[Vec<W>], f: &impl Fn(W) -> T) -> Vec<Vec<T>> {
    m.iter().map(|r| r.iter().map(|&w| f(w)).collect()).collect()
}

fn affine<T: Scalar>(w: &[Vec<T>], x: &[T], acc: &mut [T]) {
    for (a, row) in acc.iter_mut().zip(w) {
        for (wij, xj) in row.iter().zip(x) {
            *a += *wij * *xj;
        }
    }
}

fn affine_f64<T: Scalar>(w: &[Vec<f64>], bias: &[f64], x: &[T]) -> Vec<T> {
    w.iter()
        .zip(bias)
        .map(|(row, &b)| row.iter().zip(x).fold(T::from_f64(b), |acc, (&wij, &xj)| acc + xj * wij))
        .collect()
}

impl<W: Copy> Icnn<W> {
    pub fn map<T>(&self, f: impl Fn(W) -> T) -> Icnn<T> {
        Icnn {
            layers: self
                .layers
                .iter()
                .map(|l| IcnnLayer {
                    w_z: cast_matrix(&l.w_z, &f),
                    w_x: cast_matrix(&l.w_x, &f),
                    bias: l.bias.iter().map(|&b| f(b)).collect(),
                })
                .collect(),
        }
    }

    /// Number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.w_z.iter().map(Vec::len).sum::<usize>() + l.w_x.iter().map(Vec::len).sum::<usize>() + l.bias.len()
            })
            .sum()
    }
}

impl<T: Scalar> Icnn<T> {
    /// Forward pass. Hidden layers use softplus; the output layer is affine
    /// with non-negative passthrough, which keeps the output convex.
    pub fn forward(&self, x: [T; 2]) -> T {
        let mut z: Vec<T> = Vec::new();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut acc = layer.bias.clone();
            affine(&layer.w_x, &x, &mut acc);
            if !z.is_empty() {
                affine(&layer.w_z, &z, &mut acc);
            }
            if k < last {
                z = acc.into_iter().map(Scalar::softplus).collect();
            } else {
                return acc[0];
            }
        }
        unreachable!("network has no output layer")
    }

    /// Isochoric energy normalized to vanish in the reference state,
    /// `ψ(I1G, I2G) − ψ(3, 3)`.
    pub fn psi_iso(&self, i1g: T, i2g: T) -> T {
        self.forward([i1g, i2g]) - self.forward([T::from_f64(3.0), T::from_f64(3.0)])
    }
}

impl IcnnWeights {
    pub fn zeros() -> Self {
        let z = |r: usize, c: usize| vec![vec![0.0; c]; r];
        Self {
            layers: vec![
                IcnnLayer { w_z: Vec::new(), w_x: z(HIDDEN, 2), bias: vec![0.0; HIDDEN] },
                IcnnLayer { w_z: z(HIDDEN, HIDDEN), w_x: z(HIDDEN, 2), bias: vec![0.0; HIDDEN] },
                IcnnLayer { w_z: z(1, HIDDEN), w_x: z(1, 2), bias: vec![0.0] },
            ],
        }
    }

    /// Builds valid weights from arbitrary raw values: passthrough entries
    /// are squared, everything else is taken as is. `raw` must hold
    /// [`Self::parameter_count`] values in layer order (w_z, w_x, bias).
    pub fn from_raw<T: Scalar>(raw: &[T]) -> Icnn<T> {
        let template = Self::zeros();
        let mut it = raw.iter().copied();
        let mut take = || it.next().expect("too few raw parameters");
        let layers = template
            .layers
            .iter()
            .map(|l| {
                let w_z = l.w_z.iter().map(|r| r.iter().map(|_| take().square()).collect()).collect();
                let w_x = l.w_x.iter().map(|r| r.iter().map(|_| take()).collect()).collect();
                let bias = l.bias.iter().map(|_| take()).collect();
                IcnnLayer { w_z, w_x, bias }
            })
            .collect();
        Icnn { layers }
    }

    /// Random valid weights with entries of standard deviation `scale`.
    pub fn random<R: Rng>(rng: &mut R, scale: f64) -> Self {
        let n = Self::zeros().parameter_count();
        let normal = Normal::new(0.0, scale).expect("valid scale");
        let raw: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
        Self::from_raw(&raw)
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let shapes = [(0, HIDDEN), (HIDDEN, HIDDEN), (HIDDEN, 1)];
        if self.layers.len() != shapes.len() {
            return Err(NetworkError::Schema(format!(
                "psi_iso: expected {} layers, found {}",
                shapes.len(),
                self.layers.len()
            )));
        }
        for (k, (layer, &(inputs, outputs))) in self.layers.iter().zip(&shapes).enumerate() {
            check_matrix(
                &format!("psi_iso.layers[{k}].w_z"),
                &layer.w_z,
                if inputs == 0 { 0 } else { outputs },
                inputs,
            )?;
            check_matrix(&format!("psi_iso.layers[{k}].w_x"), &layer.w_x, outputs, ICNN_INPUTS)?;
            check_len(&format!("psi_iso.layers[{k}].bias"), layer.bias.len(), outputs)?;
            check_non_negative(&format!("psi_iso.layers[{k}].w_z"), layer.w_z.iter().flatten())?;
            check_finite(&format!("psi_iso.layers[{k}]"), layer.w_x.iter().flatten().chain(&layer.bias))?;
        }
        Ok(())
    }
}

impl IcnnWeights {
    /// Forward pass with `f64` weights and generic inputs; agrees with
    /// [`Icnn::forward`] but avoids lifting every weight to `T`.
    pub fn eval<T: Scalar>(&self, x: [T; 2]) -> T {
        let last = self.layers.len() - 1;
        let mut z: Vec<T> = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut acc = affine_f64(&layer.w_x, &layer.bias, &x);
            if !z.is_empty() {
                for (a, row) in acc.iter_mut().zip(&layer.w_z) {
                    for (&w, &zj) in row.iter().zip(&z) {
                        *a += zj * w;
                    }
                }
            }
            if k < last {
                z = acc.into_iter().map(Scalar::softplus).collect();
            } else {
                return acc[0];
            }
        }
        unreachable!("network has no output layer")
    }

    /// `ψ(I1G, I2G) − ψ(3, 3)` with `f64` weights.
    pub fn eval_psi_iso<T: Scalar>(&self, i1g: T, i2g: T) -> T {
        self.eval([i1g, i2g]) - self.eval([3.0, 3.0])
    }
}

impl MonotoneNetWeights {
    pub fn eval<T: Scalar>(&self, q: T) -> T {
        let last = self.layers.len() - 1;
        let mut h = vec![q];
        let mut out = T::zero();
        for (k, layer) in self.layers.iter().enumerate() {
            let acc = affine_f64(&layer.w, &layer.bias, &h);
            if k < last {
                h = acc.into_iter().map(Scalar::softplus).collect();
            } else {
                out = acc[0];
            }
        }
        out + q * self.a0 + self.b0
    }

    /// `N(q) − N(0)` with `f64` weights.
    pub fn eval_yield<T: Scalar>(&self, q: T) -> T {
        self.eval(q) - self.eval(0.0)
    }
}

impl<W: Copy> MonotoneNet<W> {
    pub fn map<T>(&self, f: impl Fn(W) -> T) -> MonotoneNet<T> {
        MonotoneNet {
            layers: self
                .layers
                .iter()
                .map(|l| MonotoneLayer { w: cast_matrix(&l.w, &f), bias: l.bias.iter().map(|&b| f(b)).collect() })
                .collect(),
            a0: f(self.a0),
            b0: f(self.b0),
        }
    }

    pub fn parameter_count(&self) -> usize {
        2 + self.layers.iter().map(|l| l.w.iter().map(Vec::len).sum::<usize>() + l.bias.len()).sum::<usize>()
    }
}

impl<T: Scalar> MonotoneNet<T> {
    /// Unshifted network output.
    pub fn forward(&self, q: T) -> T {
        let mut h = vec![q];
        let last = self.layers.len() - 1;
        let mut out = T::zero();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut acc = layer.bias.clone();
            affine(&layer.w, &h, &mut acc);
            if k < last {
                h = acc.into_iter().map(Scalar::softplus).collect();
            } else {
                out = acc[0];
            }
        }
        out + self.a0 * q + self.b0
    }

    /// Yield map `N(q) − N(0)`, so that `N(0) = 0`.
    pub fn yield_value(&self, q: T) -> T {
        self.forward(q) - self.forward(T::zero())
    }
}

impl MonotoneNetWeights {
    pub fn zeros() -> Self {
        let z = |r: usize, c: usize| vec![vec![0.0; c]; r];
        Self {
            layers: vec![
                MonotoneLayer { w: z(HIDDEN, 1), bias: vec![0.0; HIDDEN] },
                MonotoneLayer { w: z(HIDDEN, HIDDEN), bias: vec![0.0; HIDDEN] },
                MonotoneLayer { w: z(1, HIDDEN), bias: vec![0.0] },
            ],
            a0: 0.0,
            b0: 0.0,
        }
    }

    /// `N(q) = q`: the closed-form yield map.
    pub fn identity() -> Self {
        Self { a0: 1.0, ..Self::zeros() }
    }

    /// Builds valid weights from arbitrary raw values; all weights and `a0`
    /// are squared. Order: per layer (w, bias), then a0, b0.
    pub fn from_raw<T: Scalar>(raw: &[T]) -> MonotoneNet<T> {
        let template = Self::zeros();
        let mut it = raw.iter().copied();
        let mut take = || it.next().expect("too few raw parameters");
        let layers = template
            .layers
            .iter()
            .map(|l| MonotoneLayer {
                w: l.w.iter().map(|r| r.iter().map(|_| take().square()).collect()).collect(),
                bias: l.bias.iter().map(|_| take()).collect(),
            })
            .collect();
        let a0 = take().square();
        let b0 = take();
        MonotoneNet { layers, a0, b0 }
    }

    pub fn random<R: Rng>(rng: &mut R, scale: f64) -> Self {
        let n = Self::zeros().parameter_count();
        let normal = Normal::new(0.0, scale).expect("valid scale");
        let raw: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
        Self::from_raw(&raw)
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let shapes = [(1, HIDDEN), (HIDDEN, HIDDEN), (HIDDEN, 1)];
        if self.layers.len() != shapes.len() {
            return Err(NetworkError::Schema(format!(
                "yield: expected {} layers, found {}",
                shapes.len(),
                self.layers.len()
            )));
        }
        for (k, (layer, &(inputs, outputs))) in self.layers.iter().zip(&shapes).enumerate() {
            check_matrix(&format!("yield.layers[{k}].w"), &layer.w, outputs, inputs)?;
            check_len(&format!("yield.layers[{k}].bias"), layer.bias.len(), outputs)?;
            check_non_negative(&format!("yield.layers[{k}].w"), layer.w.iter().flatten())?;
            check_finite(&format!("yield.layers[{k}].bias"), layer.bias.iter())?;
        }
        check_non_negative("yield.a0", [self.a0].iter())?;
        check_finite("yield.b0", [self.b0].iter())?;
        Ok(())
    }
}

fn check_len(name: &str, found: usize, expected: usize) -> Result<(), NetworkError> {
    if found != expected {
        return Err(NetworkError::Schema(format!("{name}: expected length {expected}, found {found}")));
    }
    Ok(())
}

fn check_matrix(name: &str, m: &[Vec<f64>], rows: usize, cols: usize) -> Result<(), NetworkError> {
    check_len(&format!("{name} rows"), m.len(), rows)?;
    for (i, r) in m.iter().enumerate() {
        check_len(&format!("{name}[{i}]"), r.len(), cols)?;
    }
    Ok(())
}

fn check_non_negative<'a>(name: &str, values: impl Iterator<Item = &'a f64>) -> Result<(), NetworkError> {
    for (i, &v) in values.enumerate() {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(NetworkError::ConstraintViolation(format!(
                "{name}: entry {i} = {v} must be a finite non-negative number"
            )));
        }
    }
    Ok(())
}

fn check_finite<'a>(name: &str, values: impl Iterator<Item = &'a f64>) -> Result<(), NetworkError> {
    for (i, &v) in values.enumerate() {
        if !v.is_finite() {
            return Err(NetworkError::ConstraintViolation(format!("{name}: entry {i} = {v} is not finite")));
        }
    }
    Ok(())
}

/// On-disk layout of a weight file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightFile {
    pub model_version: u32,
    pub psi_iso: IcnnWeights,
    #[serde(rename = "yield")]
    pub yield_net: MonotoneNetWeights,
    pub mu_e: f64,
    pub lambda_e: f64,
    pub eta_d: f64,
    pub kappa_d: f64,
}

impl WeightFile {
    pub fn from_params(p: &DataDrivenParams) -> Self {
        Self {
            model_version: WEIGHT_FILE_VERSION,
            psi_iso: p.psi_iso_net.clone(),
            yield_net: p.yield_net.clone(),
            mu_e: p.mu_e,
            lambda_e: p.lambda_e,
            eta_d: p.eta_d,
            kappa_d: p.kappa_d,
        }
    }

    /// Data-driven parameters with the non-local terms switched off
    /// (`c_d = beta_d = 0`, `gamma_d = 1`); run configurations set those.
    pub fn into_params(self) -> DataDrivenParams {
        DataDrivenParams {
            mu_e: self.mu_e,
            lambda_e: self.lambda_e,
            psi_iso_net: self.psi_iso,
            yield_net: self.yield_net,
            eta_d: self.eta_d,
            kappa_d: self.kappa_d,
            c_d: 0.0,
            beta_d: 0.0,
            gamma_d: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.model_version != WEIGHT_FILE_VERSION {
            return Err(NetworkError::Schema(format!(
                "model_version {} is not supported (expected {WEIGHT_FILE_VERSION})",
                self.model_version
            )));
        }
        self.psi_iso.validate()?;
        self.yield_net.validate()?;
        for (name, v, strict) in [
            ("mu_e", self.mu_e, true),
            ("lambda_e", self.lambda_e, false),
            ("eta_d", self.eta_d, true),
            ("kappa_d", self.kappa_d, false),
        ] {
            let ok = if strict { v > 0.0 } else { v >= 0.0 };
            if !ok || !v.is_finite() {
                return Err(NetworkError::ConstraintViolation(format!("{name} = {v} is out of range")));
            }
        }
        Ok(())
    }
}

pub fn weights_to_string(p: &DataDrivenParams) -> String {
    serde_json::to_string_pretty(&WeightFile::from_params(p)).expect("weights serialize")
}

pub fn weights_from_str(text: &str) -> Result<DataDrivenParams, NetworkError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: WeightFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        NetworkError::Parse { path, line: inner.line(), column: inner.column(), message: inner.to_string() }
    })?;
    file.validate()?;
    Ok(file.into_params())
}

pub fn save_weights(p: &DataDrivenParams, path: &Path) -> Result<(), NetworkError> {
    fs::write(path, weights_to_string(p) + "\n")
        .map_err(|source| NetworkError::Io { path: path.display().to_string(), source })
}

pub fn load_weights(path: &Path) -> Result<DataDrivenParams, NetworkError> {
    let text =
        fs::read_to_string(path).map_err(|source| NetworkError::Io { path: path.display().to_string(), source })?;
    weights_from_str(&text)
}
