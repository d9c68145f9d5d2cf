use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kernel::matern52_unchecked;
use super::{
    check_point, standardize, GpData, GpError, GpHyperparams, Standardized, JITTER_ESCALATION,
};

/// Variances below this (in standardized units) count as a numerical clamp.
const NEGATIVE_VARIANCE_TOLERANCE: f64 = -1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn ucb(&self, beta: f64) -> f64 {
        self.mean + beta * self.std_dev()
    }
}

/// Debug snapshot of a model: data, hyperparameters and standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpDump {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub hyperparams: GpHyperparams,
    pub target_mean: f64,
    pub target_scale: f64,
    pub extra_jitter: f64,
}

/// Exact GP posterior with a cached Cholesky factor.
///
/// `chol` is the lower factor of `K + (σ_n² + extra_jitter) I` over the
/// standardized problem and `alpha` solves it against the standardized
/// targets.
#[derive(Debug)]
pub struct GpModel {
    dim: usize,
    data: GpData,
    hp: GpHyperparams,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    y_std: Vec<f64>,
    target_mean: f64,
    target_scale: f64,
    extra_jitter: f64,
    clamps: AtomicUsize,
}

impl Clone for GpModel {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            data: self.data.clone(),
            hp: self.hp.clone(),
            chol: self.chol.clone(),
            alpha: self.alpha.clone(),
            y_std: self.y_std.clone(),
            target_mean: self.target_mean,
            target_scale: self.target_scale,
            extra_jitter: self.extra_jitter,
            clamps: AtomicUsize::new(self.clamps.load(Ordering::Relaxed)),
        }
    }
}

pub(crate) fn signal_gram(inputs: &[Vec<f64>], hp: &GpHyperparams) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = hp.signal_variance;
        for j in 0..i {
            let v = matern52_unchecked(&inputs[i], &inputs[j], hp);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky of `gram + (noise + extra) I`, escalating `extra` until it succeeds.
pub(crate) fn cholesky_with_jitter(
    gram: &DMatrix<f64>,
    noise: f64,
) -> Result<(nalgebra::Cholesky<f64, nalgebra::Dyn>, f64), GpError> {
    let n = gram.nrows();
    let mut last = 0.0;
    for extra in std::iter::once(0.0).chain(JITTER_ESCALATION) {
        let mut m = gram.clone();
        for i in 0..n {
            m[(i, i)] += noise + extra;
        }
        if let Some(c) = m.cholesky() {
            return Ok((c, extra));
        }
        last = extra;
    }
    Err(GpError::NotPositiveDefinite {
        jitter: noise + last,
    })
}

impl GpModel {
    /// Model without data, using the default prior hyperparameters.
    pub fn new(dim: usize) -> Self {
        Self::empty(dim, GpHyperparams::default_for(dim))
    }

    pub fn empty(dim: usize, hp: GpHyperparams) -> Self {
        Self {
            dim,
            data: GpData::default(),
            hp,
            chol: DMatrix::zeros(0, 0),
            alpha: DVector::zeros(0),
            y_std: Vec::new(),
            target_mean: 0.0,
            target_scale: 1.0,
            extra_jitter: 0.0,
            clamps: AtomicUsize::new(0),
        }
    }

    /// Conditions on `data` with fixed hyperparameters, standardizing the
    /// targets afresh.
    pub fn fit(data: GpData, hp: GpHyperparams) -> Result<Self, GpError> {
        let st = standardize(&data.targets);
        Self::fit_standardized(data, hp, st.mean, st.scale)
    }

    /// Conditions on `data` using the given target shift and scale.
    pub(crate) fn fit_standardized(
        data: GpData,
        hp: GpHyperparams,
        mean: f64,
        scale: f64,
    ) -> Result<Self, GpError> {
        let dim = hp.dim();
        hp.validate(dim)?;
        data.validate(dim)?;
        if data.is_empty() {
            return Ok(Self::empty(dim, hp));
        }
        let st = Standardized {
            y: data.targets.iter().map(|y| (y - mean) / scale).collect(),
            mean,
            scale,
        };
        let gram = signal_gram(&data.inputs, &hp);
        let (chol, extra) = cholesky_with_jitter(&gram, hp.noise_variance)?;
        let y = DVector::from_column_slice(&st.y);
        let alpha = chol.solve(&y);
        Ok(Self {
            dim,
            data,
            hp,
            chol: chol.unpack(),
            alpha,
            y_std: st.y,
            target_mean: st.mean,
            target_scale: st.scale,
            extra_jitter: extra,
            clamps: AtomicUsize::new(0),
        })
    }

    /// Same data, new hyperparameters; standardization is recomputed.
    pub fn with_hyperparams(&self, hp: GpHyperparams) -> Result<Self, GpError> {
        Self::fit(self.data.clone(), hp)
    }

    /// Returns a model with `(x, y)` appended. Hyperparameters and the target
    /// standardization are kept (a non-empty model only restandardizes in
    /// [`fit`](Self::fit) / [`with_hyperparams`](Self::with_hyperparams)), so
    /// this is plain GP conditioning. The Cholesky factor is extended by one
    /// row when that is numerically safe and recomputed otherwise.
    pub fn add_point(&self, x: &[f64], y: f64) -> Result<Self, GpError> {
        check_point(x, self.dim)?;
        if !y.is_finite() {
            return Err(GpError::NonFiniteTarget(self.len()));
        }
        let mut data = self.data.clone();
        data.inputs.push(x.to_vec());
        data.targets.push(y);
        if self.is_empty() {
            return Self::fit(data, self.hp.clone());
        }

        let n = self.len();
        let diag = self.hp.signal_variance + self.hp.noise_variance + self.extra_jitter;
        let mut w = DVector::from_iterator(
            n,
            self.data
                .inputs
                .iter()
                .map(|xi| matern52_unchecked(xi, x, &self.hp)),
        );
        let refactor = |data| {
            Self::fit_standardized(data, self.hp.clone(), self.target_mean, self.target_scale)
        };
        if !self.chol.solve_lower_triangular_mut(&mut w) {
            return refactor(data);
        }
        let d2 = diag - w.norm_squared();
        if !(d2 > 0.5 * (self.hp.noise_variance + self.extra_jitter)) {
            return refactor(data);
        }
        let mut chol = self.chol.clone().resize(n + 1, n + 1, 0.0);
        for j in 0..n {
            chol[(n, j)] = w[j];
        }
        chol[(n, n)] = d2.sqrt();

        let mut y_std = self.y_std.clone();
        y_std.push((y - self.target_mean) / self.target_scale);
        let mut alpha = DVector::from_column_slice(&y_std);
        chol.solve_lower_triangular_mut(&mut alpha);
        chol.tr_solve_lower_triangular_mut(&mut alpha);
        Ok(Self {
            dim: self.dim,
            data,
            hp: self.hp.clone(),
            chol,
            alpha,
            y_std,
            target_mean: self.target_mean,
            target_scale: self.target_scale,
            extra_jitter: self.extra_jitter,
            clamps: AtomicUsize::new(self.clamps.load(Ordering::Relaxed)),
        })
    }

    /// Posterior mean and latent-function variance at `x`, in target units.
    ///
    /// Panics if `x` has the wrong dimension.
    pub fn posterior(&self, x: &[f64]) -> Posterior {
        assert_eq!(x.len(), self.dim, "query dimension");
        let sf2 = self.hp.signal_variance;
        let n = self.len();
        if n == 0 {
            return Posterior {
                mean: self.target_mean,
                variance: self.target_scale * self.target_scale * sf2,
            };
        }
        let mut v = DVector::from_iterator(
            n,
            self.data
                .inputs
                .iter()
                .map(|xi| matern52_unchecked(xi, x, &self.hp)),
        );
        let mean_std = v.dot(&self.alpha);
        self.chol.solve_lower_triangular_mut(&mut v);
        let mut var_std = sf2 - v.norm_squared();
        if var_std < 0.0 {
            if var_std < NEGATIVE_VARIANCE_TOLERANCE {
                self.clamps.fetch_add(1, Ordering::Relaxed);
            }
            var_std = 0.0;
        }
        Posterior {
            mean: self.target_mean + self.target_scale * mean_std,
            variance: self.target_scale * self.target_scale * var_std,
        }
    }

    pub fn ucb(&self, x: &[f64], beta: f64) -> f64 {
        self.posterior(x).ucb(beta)
    }

    /// Log marginal likelihood of the standardized targets under the cached
    /// factorization.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        let fit: f64 = self
            .y_std
            .iter()
            .zip(self.alpha.iter())
            .map(|(y, a)| y * a)
            .sum();
        let logdet: f64 = (0..n).map(|i| self.chol[(i, i)].ln()).sum();
        -0.5 * fit - logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &GpData {
        &self.data
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hp
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn target_scale(&self) -> f64 {
        self.target_scale
    }

    pub fn extra_jitter(&self) -> f64 {
        self.extra_jitter
    }

    /// Prior variance of the latent function in target units.
    pub fn prior_variance(&self) -> f64 {
        self.target_scale * self.target_scale * self.hp.signal_variance
    }

    /// Number of posterior queries whose variance came out below `-1e-10`
    /// (standardized units) and was clamped to zero.
    pub fn negative_variance_clamps(&self) -> usize {
        self.clamps.load(Ordering::Relaxed)
    }

    pub fn dump(&self) -> GpDump {
        GpDump {
            inputs: self.data.inputs.clone(),
            targets: self.data.targets.clone(),
            hyperparams: self.hp.clone(),
            target_mean: self.target_mean,
            target_scale: self.target_scale,
            extra_jitter: self.extra_jitter,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.dump()).expect("dump serializes")
    }
}
