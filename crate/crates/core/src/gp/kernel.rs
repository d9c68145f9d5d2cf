//! Matérn 5/2 kernel with per-dimension (ARD) lengthscales.

use super::{GpError, GpHyperparams};

pub(crate) const SQRT5: f64 = 2.236_067_977_499_79;

/// Squared distance with each coordinate divided by its lengthscale.
#[inline]
pub(crate) fn scaled_sqdist(x1: &[f64], x2: &[f64], lengthscales: &[f64]) -> f64 {
    x1.iter()
        .zip(x2)
        .zip(lengthscales)
        .map(|((a, b), l)| {
            let t = (a - b) / l;
            t * t
        })
        .sum()
}

/// Unit-variance Matérn 5/2 as a function of the scaled distance `r`.
#[inline]
pub(crate) fn matern52_unit(r: f64) -> f64 {
    let s = SQRT5 * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// `-(1/r) d/dr` of the unit Matérn 5/2, i.e. `(5/3)(1 + √5 r) e^{-√5 r}`.
///
/// Multiplying by `(Δ_j/ℓ_j)^2` gives the derivative of the kernel with
/// respect to `log ℓ_j`, which is finite at `r = 0`.
#[inline]
pub(crate) fn matern52_dlog_factor(r: f64) -> f64 {
    let s = SQRT5 * r;
    (5.0 / 3.0) * (1.0 + s) * (-s).exp()
}

#[inline]
pub(crate) fn matern52_unchecked(x1: &[f64], x2: &[f64], hp: &GpHyperparams) -> f64 {
    let r = scaled_sqdist(x1, x2, &hp.lengthscales).sqrt();
    hp.signal_variance * matern52_unit(r)
}

/// `σ_f² (1 + √5 r + 5r²/3) exp(-√5 r)` with `r² = Σ_j ((x1_j - x2_j)/ℓ_j)²`.
pub fn matern52(x1: &[f64], x2: &[f64], hp: &GpHyperparams) -> Result<f64, GpError> {
    let d = hp.lengthscales.len();
    for x in [x1, x2] {
        if x.len() != d {
            return Err(GpError::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
    }
    Ok(matern52_unchecked(x1, x2, hp))
}
