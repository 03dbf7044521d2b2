//! Gaussian-process state-space model: a GP fitted to noisy observations of a
//! scalar transition map, whose one-step predictive density is used as a
//! Markov transition kernel.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::kernels::{central_difference, normal_pdf, Kernel};
use crate::error::{Error, Result};

/// Predictive variances below this are clamped (and counted).
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Step of the central-difference gradient fallback.
pub const FD_STEP: f64 = 1e-5;

/// The cubic transition map `f(x) = 0.01x³ − 0.2x² + 0.2x` of the GP-SSM benchmark.
pub fn ssm_transition(x: f64) -> f64 {
    0.01 * x * x * x - 0.2 * x * x + 0.2 * x
}

/// Training pairs `(x_i, z_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

impl TrainingData {
    /// `x_i ~ U[-5, 5]` and `z_i = f(x_i) + ε_i` with `ε_i ~ N(0, noise_sd²)`.
    pub fn generate(m: usize, noise_sd: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, noise_sd).expect("noise sd must be finite and nonnegative");
        let mut x = Vec::with_capacity(m);
        let mut z = Vec::with_capacity(m);
        for _ in 0..m {
            let xi = rng.random_range(-5.0..=5.0);
            x.push(xi);
            z.push(ssm_transition(xi) + noise.sample(&mut rng));
        }
        Self { x, z }
    }

    /// Reads a two-column CSV `x,z`; a header row is optional.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut data = TrainingData {
            x: Vec::new(),
            z: Vec::new(),
        };
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::Parse(format!(
                    "training data row {}: expected 2 columns, found {}",
                    line + 1,
                    record.len()
                )));
            }
            match (record[0].parse::<f64>(), record[1].parse::<f64>()) {
                (Ok(x), Ok(z)) => {
                    data.x.push(x);
                    data.z.push(z);
                }
                // header row
                _ if line == 0 => continue,
                _ => {
                    return Err(Error::Parse(format!(
                        "training data row {}: non-numeric value",
                        line + 1
                    )))
                }
            }
        }
        Ok(data)
    }
}

/// A GP with squared-exponential covariance
/// `c(x, x') = σ_f² exp(-(x - x')² / (2ℓ²))` and unit observation noise.
#[derive(Debug, Clone)]
pub struct GpModel {
    train_x: Vec<f64>,
    train_z: Vec<f64>,
    length_scale_sq: f64,
    signal_var: f64,
    /// `(C + I)^{-1}`, row-major `m × m`.
    precision: Vec<f64>,
    /// `(C + I)^{-1} z`.
    weights: Vec<f64>,
}

/// Fits the GP by Cholesky-factorizing `C + I`.
pub fn gp_fit(
    train_x: &[f64],
    train_z: &[f64],
    length_scale_sq: f64,
    signal_var: f64,
) -> Result<GpModel> {
    if train_x.len() != train_z.len() {
        return Err(Error::invalid(format!(
            "training inputs ({}) and targets ({}) differ in length",
            train_x.len(),
            train_z.len()
        )));
    }
    if !(length_scale_sq > 0.0 && signal_var > 0.0) {
        return Err(Error::invalid(
            "length scale and signal variance must be positive",
        ));
    }
    let m = train_x.len();
    let mut model = GpModel {
        train_x: train_x.to_vec(),
        train_z: train_z.to_vec(),
        length_scale_sq,
        signal_var,
        precision: Vec::new(),
        weights: Vec::new(),
    };
    if m == 0 {
        return Ok(model);
    }

    let gram = DMatrix::from_fn(m, m, |i, j| {
        model.covariance(train_x[i], train_x[j]) + if i == j { 1.0 } else { 0.0 }
    });
    let chol = gram.cholesky().ok_or(Error::CholeskyFailed)?;
    let weights = chol.solve(&DVector::from_column_slice(train_z));
    let precision = chol.inverse();
    model.precision = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| precision[(i, j)])
        .collect();
    model.weights = weights.iter().copied().collect();
    Ok(model)
}

/// Predictive moments at one input with their derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Predictive {
    pub mean: f64,
    pub dmean: f64,
    /// Raw (unclamped) variance.
    pub var: f64,
    pub dvar: f64,
}

impl GpModel {
    pub fn len(&self) -> usize {
        self.train_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_x.is_empty()
    }

    pub fn train_x(&self) -> &[f64] {
        &self.train_x
    }

    pub fn train_z(&self) -> &[f64] {
        &self.train_z
    }

    pub fn length_scale_sq(&self) -> f64 {
        self.length_scale_sq
    }

    pub fn signal_var(&self) -> f64 {
        self.signal_var
    }

    pub fn covariance(&self, a: f64, b: f64) -> f64 {
        let r = a - b;
        self.signal_var * (-0.5 * r * r / self.length_scale_sq).exp()
    }

    /// `μ(y) = c(y, x)ᵀ (C + I)^{-1} z` and
    /// `σ²(y) = c(y, y) − c(y, x)ᵀ (C + I)^{-1} c(y, x)`, plus `d/dy` of both.
    pub fn predictive(&self, y: f64) -> Predictive {
        let m = self.len();
        let mut cross = Vec::with_capacity(m);
        let mut dcross = Vec::with_capacity(m);
        for &xi in &self.train_x {
            let c = self.covariance(y, xi);
            cross.push(c);
            dcross.push(-(y - xi) / self.length_scale_sq * c);
        }

        let mut mean = 0.0;
        let mut dmean = 0.0;
        for i in 0..m {
            mean += cross[i] * self.weights[i];
            dmean += dcross[i] * self.weights[i];
        }

        let mut quad = 0.0;
        let mut dquad = 0.0;
        for i in 0..m {
            let row = &self.precision[i * m..(i + 1) * m];
            let pc: f64 = row.iter().zip(&cross).map(|(p, c)| p * c).sum();
            quad += cross[i] * pc;
            dquad += dcross[i] * pc;
        }

        Predictive {
            mean,
            dmean,
            var: self.signal_var - quad,
            dvar: -2.0 * dquad,
        }
    }
}

/// How the predictive kernel computes its gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    #[default]
    Analytic,
    FiniteDifference,
}

/// `k(x, y) = N(x; μ(y), σ²(y))`: the GP one-step predictive density of the
/// next state `x` given the current state `y`.
#[derive(Debug)]
pub struct PredictiveKernel {
    model: Arc<GpModel>,
    mode: GradientMode,
    clamped: AtomicU64,
}

pub fn gp_predictive_kernel(model: Arc<GpModel>, mode: GradientMode) -> PredictiveKernel {
    PredictiveKernel {
        model,
        mode,
        clamped: AtomicU64::new(0),
    }
}

impl PredictiveKernel {
    pub fn model(&self) -> &GpModel {
        &self.model
    }

    /// Number of predictive variances clamped to [`VARIANCE_FLOOR`] so far.
    pub fn clamp_count(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }

    /// Mean and (clamped) variance of the transition out of `y`.
    pub fn moments(&self, y: f64) -> (f64, f64) {
        let p = self.model.predictive(y);
        (p.mean, self.clamp(p.var))
    }

    fn clamp(&self, var: f64) -> f64 {
        if var < VARIANCE_FLOOR {
            self.clamped.fetch_add(1, Ordering::Relaxed);
            VARIANCE_FLOOR
        } else {
            var
        }
    }

    fn density(&self, x: f64, y: f64) -> f64 {
        let (mean, var) = self.moments(y);
        normal_pdf(x, mean, var)
    }
}

impl Kernel for PredictiveKernel {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.density(x[0], y[0])
    }

    fn grad1(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match self.mode {
            GradientMode::Analytic => {
                let (mean, var) = self.moments(y[0]);
                let r = x[0] - mean;
                out[0] = -r / var * normal_pdf(x[0], mean, var);
            }
            GradientMode::FiniteDifference => {
                central_difference(|p| self.density(p[0], y[0]), x, FD_STEP, out)
            }
        }
    }

    fn grad2(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match self.mode {
            GradientMode::Analytic => {
                let p = self.model.predictive(y[0]);
                let var = self.clamp(p.var);
                // The clamped branch is flat in y.
                let dvar = if p.var < VARIANCE_FLOOR { 0.0 } else { p.dvar };
                let r = x[0] - p.mean;
                let k = normal_pdf(x[0], p.mean, var);
                let dk_dmean = k * r / var;
                let dk_dvar = k * (r * r / (2.0 * var * var) - 0.5 / var);
                out[0] = dk_dmean * p.dmean + dk_dvar * dvar;
            }
            GradientMode::FiniteDifference => {
                central_difference(|p| self.density(x[0], p[0]), y, FD_STEP, out)
            }
        }
    }

    fn describe(&self) -> String {
        format!(
            "gp-predictive(m={}, l2={}, sf2={})",
            self.model.len(),
            self.model.length_scale_sq,
            self.model.signal_var
        )
    }
}
