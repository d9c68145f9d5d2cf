use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::acquisition::{propose_next, uniform_point, Surface};
use super::state::{NaiveState, SumGpState};
use super::trace::{BoTrace, Selected, TraceRecord};
use super::{BoConfig, Mode, OptError, Schedule};
use crate::param_space::{ParameterSpace, ParameterVector};
use crate::sim::{reward, Observation, SimError, Simulator};

/// Reward of one observation at full-space parameters `theta`.
pub fn evaluate_observation(
    space: &ParameterSpace,
    sim: &dyn Simulator,
    obs: &Observation,
    theta: &ParameterVector,
) -> Result<f64, SimError> {
    let theta_k = space.slice_params(theta, &obs.k)?;
    let predicted = sim.simulate(&obs.scene, theta_k.as_slice())?;
    reward(&obs.observed, &predicted)
}

#[derive(Clone, Debug)]
enum Model {
    Sum(SumGpState),
    Naive(NaiveState),
}

impl Model {
    fn surface(&self) -> &dyn Surface {
        match self {
            Model::Sum(s) => s,
            Model::Naive(s) => s,
        }
    }
}

/// Run loop state. Most callers want [`run`]; the step-level methods exist
/// for driving a run by hand.
pub struct Optimizer<'a> {
    config: BoConfig,
    dataset: &'a [Observation],
    sim: &'a dyn Simulator,
    rng: ChaCha8Rng,
    model: Model,
    /// Dataset indices of active observations; entry `i` of a sum state
    /// models `active[i]`.
    active: Vec<usize>,
    trace: BoTrace,
    best_error: f64,
}

impl<'a> Optimizer<'a> {
    pub fn new(
        config: BoConfig,
        space: &ParameterSpace,
        dataset: &'a [Observation],
        sim: &'a dyn Simulator,
        initial: &[usize],
    ) -> Result<Self, OptError> {
        config.validate()?;
        if initial.is_empty() {
            return Err(OptError::Config("no active observations".into()));
        }
        let mut seen = vec![false; dataset.len()];
        for &o in initial {
            if o >= dataset.len() || std::mem::replace(&mut seen[o], true) {
                return Err(OptError::Config(format!(
                    "observation {o} is out of range or listed twice"
                )));
            }
        }
        let model = match config.mode {
            Mode::NaiveFull => {
                let subsets: Vec<_> = initial.iter().map(|&o| dataset[o].k.clone()).collect();
                Model::Naive(NaiveState::new(
                    space.clone(),
                    initial.to_vec(),
                    &subsets,
                    config.beta.for_observation(0)?,
                )?)
            }
            Mode::SumFull | Mode::SumPartial => {
                let mut st = SumGpState::new(space.clone());
                for &o in initial {
                    st.push_entry(o, dataset[o].k.clone(), config.beta.for_observation(o)?)?;
                }
                Model::Sum(st)
            }
        };
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            trace: BoTrace::new(config.mode, config.seed, space.dim_names()),
            config,
            dataset,
            sim,
            model,
            active: initial.to_vec(),
            best_error: f64::INFINITY,
        })
    }

    pub fn config(&self) -> &BoConfig {
        &self.config
    }

    pub fn trace(&self) -> &BoTrace {
        &self.trace
    }

    pub fn into_trace(self) -> BoTrace {
        self.trace
    }

    pub fn active_observations(&self) -> &[usize] {
        &self.active
    }

    pub fn sum_state(&self) -> Option<&SumGpState> {
        match &self.model {
            Model::Sum(s) => Some(s),
            Model::Naive(_) => None,
        }
    }

    pub fn naive_state(&self) -> Option<&NaiveState> {
        match &self.model {
            Model::Naive(s) => Some(s),
            Model::Sum(_) => None,
        }
    }

    /// Simulations charged so far.
    pub fn sim_count(&self) -> usize {
        match &self.model {
            Model::Sum(s) => s.sim_count(),
            Model::Naive(s) => s.sim_count(),
        }
    }

    fn space(&self) -> &ParameterSpace {
        match &self.model {
            Model::Sum(s) => s.space(),
            Model::Naive(s) => s.space(),
        }
    }


    /// Rewards of the active observations at `theta`, in active order;
    /// `skip` entries are reported as 0 and not simulated.
    fn evaluate_active(&self, theta: &ParameterVector, skip: Option<usize>) -> Result<Vec<f64>, OptError> {
        let space = self.space();
        self.active
            .par_iter()
            .enumerate()
            .map(|(i, &o)| {
                if Some(i) == skip {
                    return Ok(0.0);
                }
                evaluate_observation(space, self.sim, &self.dataset[o], theta)
                    .map_err(|source| OptError::Sim { obs: o, source })
            })
            .collect()
    }

    /// Evaluates `n_init` uniform points on every active observation and
    /// fits every model once.
    pub fn seed(&mut self) -> Result<(), OptError> {
        let points: Vec<Vec<f64>> = (0..self.config.n_init)
            .map(|_| uniform_point(self.model.surface(), &mut self.rng))
            .collect();
        for u in points {
            let theta = self.space().denormalize(&u)?;
            let rewards = self.evaluate_active(&theta, None)?;
            let total: f64 = rewards.iter().sum();
            match &mut self.model {
                Model::Sum(st) => {
                    for (i, &r) in rewards.iter().enumerate() {
                        st.add_data(i, &u, r, None)?;
                    }
                    st.record_evaluated(u);
                }
                Model::Naive(nv) => {
                    nv.add_data(&u, total, rewards.len(), None)?;
                    nv.record_evaluated(u);
                }
            }
            self.trace.seed_errors.push(-total);
            self.best_error = self.best_error.min(-total);
        }
        if self.config.n_init > 0 {
            match &mut self.model {
                Model::Sum(st) => {
                    for i in 0..st.len() {
                        st.refit_entry(i, &mut self.rng)?;
                    }
                }
                Model::Naive(nv) => nv.refit(&mut self.rng)?,
            }
        }
        Ok(())
    }

    fn push_record(&mut self, theta: ParameterVector, selected: Selected, partial: f64, total_error: f64) -> &TraceRecord {
        self.best_error = self.best_error.min(total_error);
        let rec = TraceRecord {
            iter: self.trace.records.len(),
            theta: theta.0,
            selected,
            partial_reward: partial,
            sim_count: self.sim_count(),
            total_error,
            best_error: self.best_error,
        };
        self.trace.records.push(rec);
        self.trace.records.last().expect("just pushed")
    }

    /// One iteration in the configured mode.
    pub fn step(&mut self) -> Result<&TraceRecord, OptError> {
        match self.config.mode {
            Mode::SumPartial => self.step_partial(),
            Mode::SumFull | Mode::NaiveFull => self.step_full(),
        }
    }

    /// Proposes θ′, simulates only the observation with the most uncertain
    /// GP there, and reports the full total error out of budget.
    pub fn step_partial(&mut self) -> Result<&TraceRecord, OptError> {
        let Model::Sum(st) = &self.model else {
            return Err(OptError::Config("partial steps need per-observation GPs".into()));
        };
        let u = propose_next(st, self.config.multistart_count, self.config.ascent_steps, &mut self.rng);
        let i = st.select_observation(&u);
        let theta = st.space().denormalize(&u)?;
        let obs = self.active[i];
        let r = evaluate_observation(st.space(), self.sim, &self.dataset[obs], &theta)
            .map_err(|source| OptError::Sim { obs, source })?;
        let mut rewards = self.evaluate_active(&theta, Some(i))?;
        rewards[i] = r;
        self.trace.report_sims += rewards.len() - 1;
        let Model::Sum(st) = &mut self.model else {
            unreachable!()
        };
        st.add_data(i, &u, r, Some(&mut self.rng))?;
        st.record_evaluated(u);
        let total: f64 = rewards.iter().sum();
        Ok(self.push_record(theta, Selected::Observation(obs), r, -total))
    }

    /// Proposes θ′ and simulates every active observation there.
    pub fn step_full(&mut self) -> Result<&TraceRecord, OptError> {
        let u = propose_next(
            self.model.surface(),
            self.config.multistart_count,
            self.config.ascent_steps,
            &mut self.rng,
        );
        let theta = self.space().denormalize(&u)?;
        let rewards = self.evaluate_active(&theta, None)?;
        let total: f64 = rewards.iter().sum();
        match &mut self.model {
            Model::Sum(st) => {
                for (i, &r) in rewards.iter().enumerate() {
                    st.add_data(i, &u, r, Some(&mut self.rng))?;
                }
                st.record_evaluated(u);
            }
            Model::Naive(nv) => {
                nv.add_data(&u, total, rewards.len(), Some(&mut self.rng))?;
                nv.record_evaluated(u);
            }
        }
        Ok(self.push_record(theta, Selected::All, total, -total))
    }

    /// Activates dataset observation `obs` with a fresh GP, optionally seeded
    /// with `n_init_new` uniform points simulated on it alone. The best-error
    /// tracker restarts because the total error now covers more terms.
    pub fn add_observation(&mut self, obs: usize, n_init_new: usize) -> Result<(), OptError> {
        if obs >= self.dataset.len() || self.active.contains(&obs) {
            return Err(OptError::Config(format!(
                "observation {obs} is out of range or already active"
            )));
        }
        let beta = self.config.beta.for_observation(obs)?;
        let Model::Sum(st) = &mut self.model else {
            return Err(OptError::Config(
                "naive mode cannot add observations mid-run".into(),
            ));
        };
        let i = st.push_entry(obs, self.dataset[obs].k.clone(), beta)?;
        self.active.push(obs);
        for _ in 0..n_init_new {
            let u = uniform_point(&*st, &mut self.rng);
            let theta = st.space().denormalize(&u)?;
            let r = evaluate_observation(st.space(), self.sim, &self.dataset[obs], &theta)
                .map_err(|source| OptError::Sim { obs, source })?;
            st.add_data(i, &u, r, None)?;
        }
        if n_init_new > 0 {
            st.refit_entry(i, &mut self.rng)?;
        }
        self.best_error = f64::INFINITY;
        Ok(())
    }
}

/// A run that stopped early, with every record completed before the error.
#[derive(Debug)]
pub struct RunFailure {
    pub trace: BoTrace,
    pub error: OptError,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run failed after {} iterations: {}", self.trace.len(), self.error)
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Seeds, then runs `config.iterations` steps, injecting observations as
/// `schedule` dictates before the step of the given iteration.
pub fn run(
    config: &BoConfig,
    dataset: &[Observation],
    space: &ParameterSpace,
    sim: &dyn Simulator,
    schedule: &Schedule,
) -> Result<BoTrace, Box<RunFailure>> {
    let empty = || BoTrace::new(config.mode, config.seed, space.dim_names());
    let early = |error| Box::new(RunFailure { trace: empty(), error });
    schedule
        .validate(dataset.len(), config.iterations)
        .map_err(early)?;
    if config.mode == Mode::NaiveFull && schedule.injections().next().is_some() {
        return Err(early(OptError::Config(
            "naive mode models a fixed observation set; schedules are not supported".into(),
        )));
    }
    let mut opt = Optimizer::new(config.clone(), space, dataset, sim, &schedule.initial(dataset.len()))
        .map_err(early)?;
    let result = (|| {
        opt.seed()?;
        for t in 0..config.iterations {
            if let Some(obs) = schedule.at(t) {
                for &o in obs {
                    opt.add_observation(o, config.n_init_new)?;
                }
            }
            opt.step()?;
        }
        Ok(())
    })();
    match result {
        Ok(()) => Ok(opt.into_trace()),
        Err(error) => Err(Box::new(RunFailure {
            trace: opt.into_trace(),
            error,
        })),
    }
}
