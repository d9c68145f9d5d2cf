//! Gaussian-process regression on the unit cube.
//!
//! Exact inference with a Matérn 5/2 ARD kernel. Targets are standardized
//! before fitting (mean-centred, and divided by their standard deviation once
//! there are at least two points); posteriors are reported in the original
//! target units.

mod fit;
mod kernel;
mod model;

pub use fit::{fit_hyperparams, log_marginal_likelihood, lml_gradient, FitOutcome};
pub use kernel::matern52;
pub use model::{GpDump, GpModel, Posterior};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum noise variance, also the first rung of the jitter ladder.
pub const JITTER_FLOOR: f64 = 1e-8;
/// Extra diagonal jitter tried after the noise floor, in order.
pub const JITTER_ESCALATION: [f64; 2] = [1e-6, 1e-4];

pub const LENGTHSCALE_BOUNDS: (f64, f64) = (0.01, 10.0);
pub const SIGNAL_VARIANCE_BOUNDS: (f64, f64) = (1e-4, 1e4);
pub const NOISE_VARIANCE_BOUNDS: (f64, f64) = (JITTER_FLOOR, 1.0);

pub const DEFAULT_LENGTHSCALE: f64 = 0.5;
pub const DEFAULT_SIGNAL_VARIANCE: f64 = 1.0;
pub const DEFAULT_NOISE_VARIANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("inputs ({inputs}) and targets ({targets}) differ in length")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("input {index} lies outside the unit cube")]
    OutsideUnitCube { index: usize },
    #[error("non-finite target at index {0}")]
    NonFiniteTarget(usize),
    #[error("dataset is empty")]
    Empty,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("kernel matrix not positive definite after jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl GpHyperparams {
    /// Prior defaults used before any fitting.
    pub fn default_for(dim: usize) -> Self {
        Self {
            lengthscales: vec![DEFAULT_LENGTHSCALE; dim],
            signal_variance: DEFAULT_SIGNAL_VARIANCE,
            noise_variance: DEFAULT_NOISE_VARIANCE,
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// `[log ℓ_1, …, log ℓ_d, log σ_f², log σ_n²]`
    pub fn to_log(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        v.push(self.signal_variance.ln());
        v.push(self.noise_variance.ln());
        v
    }

    pub fn from_log(v: &[f64]) -> Self {
        let d = v.len() - 2;
        Self {
            lengthscales: v[..d].iter().map(|x| x.exp()).collect(),
            signal_variance: v[d].exp(),
            noise_variance: v[d + 1].exp(),
        }
    }

    /// Log-space box constraints matching [`to_log`](Self::to_log).
    pub fn log_bounds(dim: usize) -> Vec<(f64, f64)> {
        let ln = |(a, b): (f64, f64)| (a.ln(), b.ln());
        let mut b = vec![ln(LENGTHSCALE_BOUNDS); dim];
        b.push(ln(SIGNAL_VARIANCE_BOUNDS));
        b.push(ln(NOISE_VARIANCE_BOUNDS));
        b
    }

    pub fn validate(&self, dim: usize) -> Result<(), GpError> {
        if self.lengthscales.len() != dim {
            return Err(GpError::DimensionMismatch {
                expected: dim,
                got: self.lengthscales.len(),
            });
        }
        if self.lengthscales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(GpError::InvalidHyperparams(
                "lengthscales must be positive".into(),
            ));
        }
        if !(self.signal_variance.is_finite() && self.signal_variance > 0.0) {
            return Err(GpError::InvalidHyperparams(
                "signal variance must be positive".into(),
            ));
        }
        // relative slack for values that went through exp(ln(..))
        if !(self.noise_variance.is_finite() && self.noise_variance >= JITTER_FLOOR * (1.0 - 1e-9))
        {
            return Err(GpError::InvalidHyperparams(format!(
                "noise variance {} below jitter floor",
                self.noise_variance
            )));
        }
        Ok(())
    }
}

/// Training data for one GP: points in `[0,1]^d` and scalar targets.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GpData {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl GpData {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Self {
        Self { inputs, targets }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn validate(&self, dim: usize) -> Result<(), GpError> {
        if self.inputs.len() != self.targets.len() {
            return Err(GpError::LengthMismatch {
                inputs: self.inputs.len(),
                targets: self.targets.len(),
            });
        }
        for (i, x) in self.inputs.iter().enumerate() {
            check_point(x, dim).map_err(|e| match e {
                GpError::OutsideUnitCube { .. } => GpError::OutsideUnitCube { index: i },
                other => other,
            })?;
        }
        if let Some(i) = self.targets.iter().position(|y| !y.is_finite()) {
            return Err(GpError::NonFiniteTarget(i));
        }
        Ok(())
    }
}

pub(crate) fn check_point(x: &[f64], dim: usize) -> Result<(), GpError> {
    if x.len() != dim {
        return Err(GpError::DimensionMismatch {
            expected: dim,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(GpError::OutsideUnitCube { index: 0 });
    }
    Ok(())
}

/// Mean-centred targets, scaled by the population standard deviation when
/// `n >= 2` and the spread is non-degenerate.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Standardized {
    pub y: Vec<f64>,
    pub mean: f64,
    pub scale: f64,
}

pub(crate) fn standardize(targets: &[f64]) -> Standardized {
    let n = targets.len();
    if n == 0 {
        return Standardized {
            y: Vec::new(),
            mean: 0.0,
            scale: 1.0,
        };
    }
    let mean = targets.iter().sum::<f64>() / n as f64;
    let mut scale = 1.0;
    if n >= 2 {
        let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if sd > 1e-12 * (1.0 + mean.abs()) {
            scale = sd;
        }
    }
    Standardized {
        y: targets.iter().map(|y| (y - mean) / scale).collect(),
        mean,
        scale,
    }
}
