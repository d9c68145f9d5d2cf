use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::gp::GpModel;

/// Central-difference step in the unit cube.
pub const FD_STEP: f64 = 1e-4;
/// First trial step of each line search, halved on failure.
pub const INITIAL_STEP: f64 = 0.1;
const MAX_HALVINGS: usize = 10;

/// An acquisition surface over the unit cube of the full parameter space.
pub trait Surface {
    fn total_dims(&self) -> usize;
    /// Sorted flat indices the surface depends on.
    fn active_dims(&self) -> &[usize];
    /// UCB value at a full unit-cube point.
    fn acquisition(&self, u: &[f64]) -> f64;
    /// Posterior mean of the modelled total reward.
    fn mean(&self, u: &[f64]) -> f64;
    fn has_data(&self) -> bool;
    /// Points already proposed and evaluated, in order.
    fn evaluated(&self) -> &[Vec<f64>];
}

/// `μ(x) + β σ(x)` for a GP over the full parameter vector.
pub fn acquisition_naive_ucb(model: &GpModel, x: &[f64], beta: f64) -> f64 {
    model.ucb(x, beta)
}

pub(crate) fn uniform_point<S: Surface + ?Sized>(s: &S, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut u = vec![0.5; s.total_dims()];
    for &j in s.active_dims() {
        u[j] = rng.random();
    }
    u
}

/// Evaluated point with the highest posterior mean.
fn incumbent<S: Surface + ?Sized>(s: &S) -> Option<&Vec<f64>> {
    let mut best: Option<(&Vec<f64>, f64)> = None;
    for u in s.evaluated() {
        let m = s.mean(u);
        if best.is_none_or(|(_, bm)| m > bm) {
            best = Some((u, m));
        }
    }
    best.map(|(u, _)| u)
}

/// Projected finite-difference ascent from `x`; returns the end point and
/// its acquisition value.
fn ascend<S: Surface + ?Sized>(s: &S, mut x: Vec<f64>, steps: usize) -> (Vec<f64>, f64) {
    let active = s.active_dims();
    let mut f = s.acquisition(&x);
    let mut g = vec![0.0; active.len()];
    for _ in 0..steps {
        for (gi, &j) in g.iter_mut().zip(active) {
            let xj = x[j];
            // one-sided at the faces of the cube
            let hi = (xj + FD_STEP).min(1.0);
            let lo = (xj - FD_STEP).max(0.0);
            x[j] = hi;
            let fp = s.acquisition(&x);
            x[j] = lo;
            let fm = s.acquisition(&x);
            x[j] = xj;
            *gi = (fp - fm) / (hi - lo);
        }
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            break;
        }
        let mut step = INITIAL_STEP;
        let mut moved = false;
        for _ in 0..MAX_HALVINGS {
            let mut cand = x.clone();
            for (gi, &j) in g.iter().zip(active) {
                cand[j] = (x[j] + step * gi / norm).clamp(0.0, 1.0);
            }
            let fc = s.acquisition(&cand);
            if fc > f {
                x = cand;
                f = fc;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (x, f)
}

/// Maximizes the acquisition from the incumbent plus uniform random starts,
/// `multistart_count` starts in total, each refined by `ascent_steps`
/// projected ascent steps. With no data at all, returns a uniform sample.
/// Inactive dimensions are left at 0.5.
pub fn propose_next<S: Surface + ?Sized>(
    s: &S,
    multistart_count: usize,
    ascent_steps: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    if !s.has_data() {
        return uniform_point(s, rng);
    }
    let mut starts = Vec::with_capacity(multistart_count.max(1));
    if let Some(u) = incumbent(s) {
        starts.push(u.clone());
    }
    while starts.len() < multistart_count.max(1) {
        starts.push(uniform_point(s, rng));
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in starts {
        let (x, f) = ascend(s, start, ascent_steps);
        let better = match &best {
            None => true,
            Some((_, bf)) => f > *bf || (bf.is_nan() && !f.is_nan()),
        };
        if better {
            best = Some((x, f));
        }
    }
    best.expect("at least one start").0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{GpData, GpHyperparams, JITTER_FLOOR};
    use crate::optimizer::SumGpState;
    use crate::param_space::{ObjectSpec, ParameterSpace, SubsetIndex};
    use rand::SeedableRng;

    /// A bare GP over a `d`-dimensional space with every dimension active.
    struct Plain {
        model: GpModel,
        beta: f64,
        dims: Vec<usize>,
        evaluated: Vec<Vec<f64>>,
    }

    impl Plain {
        fn new(data: GpData, hp: GpHyperparams, beta: f64) -> Self {
            let d = hp.dim();
            Self {
                evaluated: data.inputs.clone(),
                model: GpModel::fit(data, hp).unwrap(),
                beta,
                dims: (0..d).collect(),
            }
        }
    }

    impl Surface for Plain {
        fn total_dims(&self) -> usize {
            self.dims.len()
        }
        fn active_dims(&self) -> &[usize] {
            &self.dims
        }
        fn acquisition(&self, u: &[f64]) -> f64 {
            acquisition_naive_ucb(&self.model, u, self.beta)
        }
        fn mean(&self, u: &[f64]) -> f64 {
            self.model.posterior(u).mean
        }
        fn has_data(&self) -> bool {
            !self.model.is_empty()
        }
        fn evaluated(&self) -> &[Vec<f64>] {
            &self.evaluated
        }
    }

    fn hp(d: usize, l: f64) -> GpHyperparams {
        GpHyperparams {
            lengthscales: vec![l; d],
            signal_variance: 1.0,
            noise_variance: JITTER_FLOOR,
        }
    }

    #[test]
    fn naive_ucb_basics() {
        let data = GpData::new(vec![vec![0.2, 0.4], vec![0.8, 0.1]], vec![-1.0, -3.0]);
        let m = GpModel::fit(data, hp(2, 0.3)).unwrap();
        let x = [0.5, 0.5];
        assert_eq!(acquisition_naive_ucb(&m, &x, 0.0), m.posterior(&x).mean);
        let mut last = f64::NEG_INFINITY;
        for b in [0.0, 0.5, 1.0, 2.0, 5.0] {
            let a = acquisition_naive_ucb(&m, &x, b);
            assert!(a >= last);
            last = a;
        }
        let at_train = acquisition_naive_ucb(&m, &[0.2, 0.4], 2.0);
        assert!((at_train - (-1.0)).abs() < 1e-3, "{at_train}");
    }

    #[test]
    fn single_point_mean_peaks_at_the_point() {
        // prior mean 0 and one target above it: with β = 0 the posterior mean
        // is a kernel bump whose maximum is the training input
        let x0 = vec![0.37, 0.62, 0.21];
        let data = GpData::new(vec![x0.clone()], vec![1.0]);
        let model = GpModel::fit_standardized(data, hp(3, 0.3), 0.0, 1.0).unwrap();
        let s = Plain {
            model,
            beta: 0.0,
            dims: vec![0, 1, 2],
            evaluated: Vec::new(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let got = propose_next(&s, 16, 50, &mut rng);
        let dist = got
            .iter()
            .zip(&x0)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(dist < 0.05, "proposal {got:?} is {dist} from the peak");
    }

    #[test]
    fn deterministic_and_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inputs: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.random(), rng.random()]).collect();
        let targets = inputs.iter().map(|x| (5.0 * x[0]).sin() + x[1]).collect();
        let s = Plain::new(GpData::new(inputs, targets), hp(2, 0.2), 2.0);
        let a = propose_next(&s, 8, 30, &mut ChaCha8Rng::seed_from_u64(9));
        let b = propose_next(&s, 8, 30, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn empty_surface_returns_uniform_sample_with_inactive_midpoints() {
        let space = ParameterSpace::new(vec![
            ObjectSpec::rigid(0, "a"),
            ObjectSpec::rigid(1, "b"),
            ObjectSpec::deformable(2, "c"),
        ])
        .unwrap();
        let mut st = SumGpState::new(space);
        st.push_entry(0, SubsetIndex::new(vec![0, 2]).unwrap(), 2.0).unwrap();
        let u = propose_next(&st, 16, 50, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(u.len(), 4);
        assert_eq!(u[1], 0.5);
        assert!(u.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn greedy_proposal_is_never_below_best_evaluated() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs: Vec<Vec<f64>> = (0..10).map(|_| vec![rng.random(), rng.random()]).collect();
            let targets: Vec<f64> = inputs
                .iter()
                .map(|x| -(x[0] - 0.6).powi(2) - 2.0 * (x[1] - 0.3).powi(2))
                .collect();
            let best = targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s = Plain::new(GpData::new(inputs, targets), hp(2, 0.4), 0.0);
            let u = propose_next(&s, 16, 50, &mut rng);
            assert!(s.acquisition(&u) >= best - 1e-6);
        }
    }
}
