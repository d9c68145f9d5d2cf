use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::acquisition::Surface;
use crate::gp::{fit_hyperparams, GpError, GpModel, Posterior};
use crate::param_space::{ParamError, ParameterSpace, ParameterVector, SubsetIndex};

/// Hyperparameters are refit on each of the first 10 points and then on
/// every fifth.
pub fn should_refit(n: usize) -> bool {
    n <= 10 || n % 5 == 0
}

fn refit(model: &GpModel, rng: &mut ChaCha8Rng) -> Result<GpModel, GpError> {
    let seed: u64 = rng.random();
    let out = fit_hyperparams(model.data(), model.dim(), seed);
    model.with_hyperparams(out.hyperparams)
}

fn gather(dims: &[usize], u: &[f64]) -> Vec<f64> {
    dims.iter().map(|&j| u[j]).collect()
}

/// Merges `more` into the sorted index list `into`.
fn union_into(into: &mut Vec<usize>, more: &[usize]) {
    into.extend_from_slice(more);
    into.sort_unstable();
    into.dedup();
}

/// One observation's GP over the parameters of the objects in its scene.
#[derive(Clone, Debug)]
pub struct GpEntry {
    /// Index of the observation in the dataset.
    pub obs_index: usize,
    pub k: SubsetIndex,
    /// Flat parameter indices of `k`'s blocks, in `k`'s order.
    pub dims: Vec<usize>,
    pub beta: f64,
    pub model: GpModel,
}

impl GpEntry {
    /// Posterior at the subspace slice of a full unit-cube point.
    pub fn posterior_at(&self, u: &[f64]) -> Posterior {
        self.model.posterior(&gather(&self.dims, u))
    }

    pub fn ucb_at(&self, u: &[f64]) -> f64 {
        self.posterior_at(u).ucb(self.beta)
    }
}

/// Per-observation GPs whose UCB terms add up to the acquisition.
#[derive(Clone, Debug)]
pub struct SumGpState {
    space: ParameterSpace,
    entries: Vec<GpEntry>,
    active_dims: Vec<usize>,
    evaluated: Vec<Vec<f64>>,
    sim_count: usize,
}

impl SumGpState {
    pub fn new(space: ParameterSpace) -> Self {
        Self {
            space,
            entries: Vec::new(),
            active_dims: Vec::new(),
            evaluated: Vec::new(),
            sim_count: 0,
        }
    }

    /// Appends an empty GP for an observation over objects `k`; returns its
    /// entry index. Existing entries are untouched.
    pub fn push_entry(&mut self, obs_index: usize, k: SubsetIndex, beta: f64) -> Result<usize, ParamError> {
        let dims = self.space.subset_indices(&k)?;
        union_into(&mut self.active_dims, &dims);
        self.entries.push(GpEntry {
            obs_index,
            model: GpModel::new(dims.len()),
            k,
            dims,
            beta,
        });
        Ok(self.entries.len() - 1)
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn entries(&self) -> &[GpEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sim_count(&self) -> usize {
        self.sim_count
    }

    /// Conditions entry `i` on `(u_K, y)`; refits its hyperparameters when the
    /// schedule says so and `rng` is given.
    pub fn add_data(
        &mut self,
        i: usize,
        u: &[f64],
        y: f64,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(), GpError> {
        let e = &mut self.entries[i];
        let mut model = e.model.add_point(&gather(&e.dims, u), y)?;
        if let Some(rng) = rng {
            if should_refit(model.len()) {
                model = refit(&model, rng)?;
            }
        }
        e.model = model;
        self.sim_count += 1;
        Ok(())
    }

    /// Refits entry `i` unconditionally.
    pub fn refit_entry(&mut self, i: usize, rng: &mut ChaCha8Rng) -> Result<(), GpError> {
        let model = refit(&self.entries[i].model, rng)?;
        self.entries[i].model = model;
        Ok(())
    }

    pub(crate) fn record_evaluated(&mut self, u: Vec<f64>) {
        self.evaluated.push(u);
    }

    /// `Σ μ_i + β_i σ_i` at a physical parameter vector.
    pub fn acquisition_sum_ucb(&self, theta: &ParameterVector) -> Result<f64, ParamError> {
        Ok(self.acquisition(&self.space.normalize(theta)?))
    }

    /// Index of the entry with the largest posterior standard deviation at
    /// `u`; ties go to the entry with fewer points, then the lower index.
    pub fn select_observation(&self, u: &[f64]) -> usize {
        assert!(!self.entries.is_empty(), "no observations to select from");
        let mut best = 0;
        let mut best_sd = f64::NEG_INFINITY;
        for (i, e) in self.entries.iter().enumerate() {
            let sd = e.posterior_at(u).std_dev();
            let better = sd > best_sd
                || (sd == best_sd && e.model.len() < self.entries[best].model.len());
            if better {
                best = i;
                best_sd = sd;
            }
        }
        best
    }
}

impl Surface for SumGpState {
    fn total_dims(&self) -> usize {
        self.space.total_dims()
    }

    fn active_dims(&self) -> &[usize] {
        &self.active_dims
    }

    fn acquisition(&self, u: &[f64]) -> f64 {
        self.entries.iter().map(|e| e.ucb_at(u)).sum()
    }

    fn mean(&self, u: &[f64]) -> f64 {
        self.entries.iter().map(|e| e.posterior_at(u).mean).sum()
    }

    fn has_data(&self) -> bool {
        self.entries.iter().any(|e| !e.model.is_empty())
    }

    fn evaluated(&self) -> &[Vec<f64>] {
        &self.evaluated
    }
}

/// A single GP over every active dimension, fitted to the total reward.
#[derive(Clone, Debug)]
pub struct NaiveState {
    space: ParameterSpace,
    obs: Vec<usize>,
    dims: Vec<usize>,
    beta: f64,
    model: GpModel,
    evaluated: Vec<Vec<f64>>,
    sim_count: usize,
}

impl NaiveState {
    /// `subsets` are the object sets of the modelled observations.
    pub fn new(
        space: ParameterSpace,
        obs: Vec<usize>,
        subsets: &[SubsetIndex],
        beta: f64,
    ) -> Result<Self, ParamError> {
        let mut dims = Vec::new();
        for k in subsets {
            union_into(&mut dims, &space.subset_indices(k)?);
        }
        Ok(Self {
            model: GpModel::new(dims.len()),
            space,
            obs,
            dims,
            beta,
            evaluated: Vec::new(),
            sim_count: 0,
        })
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    /// Dataset indices of the observations whose rewards are summed.
    pub fn observations(&self) -> &[usize] {
        &self.obs
    }

    pub fn model(&self) -> &GpModel {
        &self.model
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sim_count(&self) -> usize {
        self.sim_count
    }

    /// Adds `(u, Σ r)` after `sims` simulations.
    pub fn add_data(
        &mut self,
        u: &[f64],
        total_reward: f64,
        sims: usize,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(), GpError> {
        let mut model = self.model.add_point(&gather(&self.dims, u), total_reward)?;
        if let Some(rng) = rng {
            if should_refit(model.len()) {
                model = refit(&model, rng)?;
            }
        }
        self.model = model;
        self.sim_count += sims;
        Ok(())
    }

    pub fn refit(&mut self, rng: &mut ChaCha8Rng) -> Result<(), GpError> {
        self.model = refit(&self.model, rng)?;
        Ok(())
    }

    pub(crate) fn record_evaluated(&mut self, u: Vec<f64>) {
        self.evaluated.push(u);
    }

    /// GP input for a full unit-cube point.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        gather(&self.dims, u)
    }
}

impl Surface for NaiveState {
    fn total_dims(&self) -> usize {
        self.space.total_dims()
    }

    fn active_dims(&self) -> &[usize] {
        &self.dims
    }

    fn acquisition(&self, u: &[f64]) -> f64 {
        self.model.ucb(&self.project(u), self.beta)
    }

    fn mean(&self, u: &[f64]) -> f64 {
        self.model.posterior(&self.project(u)).mean
    }

    fn has_data(&self) -> bool {
        !self.model.is_empty()
    }

    fn evaluated(&self) -> &[Vec<f64>] {
        &self.evaluated
    }
}
