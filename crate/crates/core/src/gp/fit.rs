//! Log marginal likelihood, its gradient, and hyperparameter fitting.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernel::{matern52_dlog_factor, scaled_sqdist};
use super::model::{cholesky_with_jitter, signal_gram};
use super::{standardize, GpData, GpError, GpHyperparams};

/// Number of ascent starts: the prior default plus random log-uniform draws.
pub const FIT_STARTS: usize = 8;
const MAX_ASCENT_ITERS: usize = 100;
const MAX_BACKTRACKS: usize = 40;
const ARMIJO: f64 = 1e-4;
const GRAD_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitStatus {
    Fitted,
    /// Fewer than two points; prior defaults returned.
    TooFewPoints,
    /// Every start failed to factorize; prior defaults returned.
    AllStartsFailed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    pub hyperparams: GpHyperparams,
    /// Log marginal likelihood of the returned hyperparameters, when fitted.
    pub lml: Option<f64>,
    pub status: FitStatus,
}

fn prepare(data: &GpData, hp: &GpHyperparams) -> Result<(), GpError> {
    let d = hp.dim();
    hp.validate(d)?;
    data.validate(d)?;
    if data.is_empty() {
        return Err(GpError::Empty);
    }
    Ok(())
}

/// Log marginal likelihood of the standardized targets.
pub fn log_marginal_likelihood(data: &GpData, hp: &GpHyperparams) -> Result<f64, GpError> {
    prepare(data, hp)?;
    lml_and_grad(data, hp, false).map(|(f, _)| f)
}

/// Gradient of [`log_marginal_likelihood`] with respect to
/// `[log ℓ_1, …, log ℓ_d, log σ_f², log σ_n²]`.
pub fn lml_gradient(data: &GpData, hp: &GpHyperparams) -> Result<Vec<f64>, GpError> {
    prepare(data, hp)?;
    lml_and_grad(data, hp, true).map(|(_, g)| g.expect("gradient requested"))
}

fn lml_and_grad(
    data: &GpData,
    hp: &GpHyperparams,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>), GpError> {
    let n = data.len();
    let d = hp.dim();
    let st = standardize(&data.targets);
    let gram = signal_gram(&data.inputs, hp);
    let (chol, _) = cholesky_with_jitter(&gram, hp.noise_variance)?;
    let y = DVector::from_column_slice(&st.y);
    let alpha = chol.solve(&y);
    let l = chol.l_dirty();
    let logdet: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
    let lml = -0.5 * y.dot(&alpha) - logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    if !want_grad {
        return Ok((lml, None));
    }

    // W = α αᵀ − K⁻¹; each log-parameter gradient is ½ tr(W ∂K/∂η).
    let kinv: DMatrix<f64> = chol.inverse();
    let w = &alpha * alpha.transpose() - kinv;
    let mut grad = vec![0.0; d + 2];
    for i in 0..n {
        for j in 0..i {
            let wij = w[(i, j)];
            let xi = &data.inputs[i];
            let xj = &data.inputs[j];
            let r = scaled_sqdist(xi, xj, &hp.lengthscales).sqrt();
            let f = hp.signal_variance * matern52_dlog_factor(r);
            for (k, g) in grad.iter_mut().take(d).enumerate() {
                let t = (xi[k] - xj[k]) / hp.lengthscales[k];
                // off-diagonal pair counted twice, times the ½
                *g += wij * f * t * t;
            }
        }
    }
    grad[d] = 0.5 * w.component_mul(&gram).sum();
    grad[d + 1] = 0.5 * hp.noise_variance * w.trace();
    Ok((lml, Some(grad)))
}

fn clamp_to(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

fn projected_norm(x: &[f64], g: &[f64], bounds: &[(f64, f64)]) -> f64 {
    x.iter()
        .zip(g)
        .zip(bounds)
        .map(|((&xi, &gi), &(lo, hi))| {
            if (xi <= lo && gi < 0.0) || (xi >= hi && gi > 0.0) {
                0.0
            } else {
                gi * gi
            }
        })
        .sum::<f64>()
        .sqrt()
}

/// Projected gradient ascent in log space with Barzilai–Borwein steps and
/// Armijo backtracking. Returns `(log_params, lml)`.
fn ascend(data: &GpData, start: Vec<f64>, bounds: &[(f64, f64)]) -> Option<(Vec<f64>, f64)> {
    let eval = |x: &[f64]| {
        lml_and_grad(data, &GpHyperparams::from_log(x), true)
            .ok()
            .filter(|(f, _)| f.is_finite())
            .map(|(f, g)| (f, g.expect("gradient requested")))
    };
    let mut x = start;
    clamp_to(&mut x, bounds);
    let (mut f, mut g) = eval(&x)?;
    let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut step = if gnorm > 1.0 { 1.0 / gnorm } else { 1.0 };

    for _ in 0..MAX_ASCENT_ITERS {
        if projected_norm(&x, &g, bounds) < GRAD_TOL {
            break;
        }
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + step * gi).collect();
            clamp_to(&mut cand, bounds);
            let moved: f64 = cand.iter().zip(&x).zip(&g).map(|((c, xi), gi)| gi * (c - xi)).sum();
            if moved <= 0.0 {
                break;
            }
            if let Some((fc, gc)) = eval(&cand) {
                if fc >= f + ARMIJO * moved {
                    accepted = Some((cand, fc, gc));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        // ascent on f is descent on -f, whose gradient difference is -(gn - g)
        let yk: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| b - a).collect();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        let sy: f64 = s.iter().zip(&yk).map(|(a, b)| a * b).sum();
        step = if sy > 0.0 { ss / sy } else { step * 2.0 };
        step = step.clamp(1e-10, 1e3);
        let converged = (fnew - f).abs() <= 1e-12 * (1.0 + f.abs()) && ss.sqrt() < 1e-9;
        x = xn;
        f = fnew;
        g = gn;
        if converged {
            break;
        }
    }
    Some((x, f))
}

/// Maximizes the log marginal likelihood from the prior default and
/// `FIT_STARTS - 1` log-uniform random starts; deterministic given `seed`.
pub fn fit_hyperparams(data: &GpData, dim: usize, seed: u64) -> FitOutcome {
    let default = GpHyperparams::default_for(dim);
    if data.len() < 2 || data.validate(dim).is_err() {
        return FitOutcome {
            hyperparams: default,
            lml: None,
            status: FitStatus::TooFewPoints,
        };
    }
    let bounds = GpHyperparams::log_bounds(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![default.to_log()];
    for _ in 1..FIT_STARTS {
        starts.push(bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect());
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in starts {
        if let Some((x, f)) = ascend(data, start, &bounds) {
            if best.as_ref().is_none_or(|(_, bf)| f > *bf) {
                best = Some((x, f));
            }
        }
    }
    match best {
        Some((x, f)) => FitOutcome {
            hyperparams: GpHyperparams::from_log(&x),
            lml: Some(f),
            status: FitStatus::Fitted,
        },
        None => {
            log::warn!("hyperparameter fit failed from every start; using prior defaults");
            FitOutcome {
                hyperparams: default,
                lml: None,
                status: FitStatus::AllStartsFailed,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{matern52, GpModel, JITTER_FLOOR};
    use rand_distr::{Distribution, StandardNormal};

    fn random_data(seed: u64, n: usize, d: usize) -> GpData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random()).collect())
            .collect();
        let targets = inputs
            .iter()
            .map(|x| (4.0 * x[0]).cos() + x.iter().sum::<f64>() + 0.05 * rng.random::<f64>())
            .collect();
        GpData::new(inputs, targets)
    }

    fn random_hp(seed: u64, d: usize) -> GpHyperparams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GpHyperparams {
            lengthscales: (0..d).map(|_| rng.random_range(0.1..1.5)).collect(),
            signal_variance: rng.random_range(0.3..3.0),
            noise_variance: rng.random_range(1e-4..1e-1),
        }
    }

    /// Dense oracle using an explicit inverse and determinant.
    fn dense_lml(data: &GpData, hp: &GpHyperparams) -> f64 {
        let st = standardize(&data.targets);
        let n = data.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = matern52(&data.inputs[i], &data.inputs[j], hp).unwrap();
            }
            k[(i, i)] += hp.noise_variance;
        }
        let y = DVector::from_column_slice(&st.y);
        let quad = (y.transpose() * k.clone().try_inverse().unwrap() * &y)[0];
        -0.5 * quad - 0.5 * k.determinant().ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    #[test]
    fn single_point_closed_form() {
        let data = GpData::new(vec![vec![0.4, 0.2]], vec![3.7]);
        let hp = GpHyperparams {
            lengthscales: vec![0.3, 0.6],
            signal_variance: 1.7,
            noise_variance: 0.2,
        };
        let got = log_marginal_likelihood(&data, &hp).unwrap();
        let want = -0.5 * (1.7f64 + 0.2).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn matches_dense_oracle() {
        for seed in 0..5 {
            let data = random_data(seed, 5, 3);
            let hp = random_hp(100 + seed, 3);
            let got = log_marginal_likelihood(&data, &hp).unwrap();
            let want = dense_lml(&data, &hp);
            assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "{got} vs {want}");
            let model = GpModel::fit(data, hp).unwrap();
            assert!((model.log_marginal_likelihood() - got).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_points_survive_via_jitter() {
        let mut data = random_data(3, 6, 2);
        data.inputs.push(data.inputs[0].clone());
        data.targets.push(data.targets[0]);
        let hp = GpHyperparams {
            lengthscales: vec![0.5, 0.5],
            signal_variance: 1.0,
            noise_variance: JITTER_FLOOR,
        };
        assert!(log_marginal_likelihood(&data, &hp).unwrap().is_finite());
    }

    fn fd_gradient(data: &GpData, hp: &GpHyperparams, h: f64) -> Vec<f64> {
        let x = hp.to_log();
        (0..x.len())
            .map(|i| {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fp = log_marginal_likelihood(data, &GpHyperparams::from_log(&xp)).unwrap();
                let fm = log_marginal_likelihood(data, &GpHyperparams::from_log(&xm)).unwrap();
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let data = random_data(seed + 20, 12, 3);
            let hp = random_hp(seed + 40, 3);
            let g = lml_gradient(&data, &hp).unwrap();
            let fd = fd_gradient(&data, &hp, 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
                assert!(rel < 1e-4, "analytic {a} vs fd {b}");
            }
        }
    }

    #[test]
    fn one_point_noise_gradient() {
        // n = 1, y = 0: lml = -½ log(σ_f² + σ_n²) - ½ log 2π
        let data = GpData::new(vec![vec![0.5]], vec![1.0]);
        let hp = GpHyperparams {
            lengthscales: vec![0.7],
            signal_variance: 0.8,
            noise_variance: 0.3,
        };
        let g = lml_gradient(&data, &hp).unwrap();
        let want = -0.5 * 0.3 / (0.8 + 0.3);
        assert!((g[2] - want).abs() < 1e-14);
        assert!((g[1] - (-0.5 * 0.8 / 1.1)).abs() < 1e-14);
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn fit_is_deterministic_and_beats_default() {
        let data = random_data(7, 20, 2);
        let a = fit_hyperparams(&data, 2, 42);
        let b = fit_hyperparams(&data, 2, 42);
        assert_eq!(a, b);
        assert_eq!(a.status, FitStatus::Fitted);
        let default_lml = log_marginal_likelihood(&data, &GpHyperparams::default_for(2)).unwrap();
        assert!(a.lml.unwrap() >= default_lml);
    }

    #[test]
    fn fit_reaches_stationary_point() {
        let data = random_data(8, 25, 2);
        let out = fit_hyperparams(&data, 2, 1);
        let x = out.hyperparams.to_log();
        let g = lml_gradient(&data, &out.hyperparams).unwrap();
        let pn = projected_norm(&x, &g, &GpHyperparams::log_bounds(2));
        assert!(pn < 1e-3, "projected gradient norm {pn}");
    }

    #[test]
    fn too_few_points_returns_defaults() {
        let data = GpData::new(vec![vec![0.1]], vec![1.0]);
        let out = fit_hyperparams(&data, 1, 0);
        assert_eq!(out.status, FitStatus::TooFewPoints);
        assert_eq!(out.hyperparams, GpHyperparams::default_for(1));
    }

    #[test]
    fn constant_targets_collapse_to_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inputs: Vec<Vec<f64>> = (0..10).map(|_| vec![rng.random(), rng.random()]).collect();
        let data = GpData::new(inputs, vec![2.5; 10]);
        let out = fit_hyperparams(&data, 2, 0);
        let hp = out.hyperparams;
        assert!(hp.noise_variance < 1e-7, "noise {}", hp.noise_variance);
        assert!(hp.signal_variance < 1e-3, "signal {}", hp.signal_variance);
    }

    #[test]
    fn recovers_lengthscales_of_sampled_gp() {
        let truth = GpHyperparams {
            lengthscales: vec![0.3, 0.3],
            signal_variance: 1.0,
            noise_variance: 1e-6,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let inputs: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random(), rng.random()]).collect();
        let mut k = signal_gram(&inputs, &truth);
        for i in 0..40 {
            k[(i, i)] += truth.noise_variance;
        }
        let l = k.cholesky().unwrap().unpack();
        let z = DVector::from_iterator(40, (0..40).map(|_| StandardNormal.sample(&mut rng)));
        let f = l * z;
        let data = GpData::new(inputs, f.iter().copied().collect());
        let out = fit_hyperparams(&data, 2, 9);
        for &ls in &out.hyperparams.lengthscales {
            assert!((0.15..=0.6).contains(&ls), "lengthscale {ls}");
        }
    }
}
