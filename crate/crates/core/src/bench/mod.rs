//! Experiment presets, seeded multi-trial runs, and learning-curve summaries.

mod curves;
mod preset;

use std::path::PathBuf;

use rayon::prelude::*;
use thiserror::Error;

use crate::optimizer::{run, BoConfig, BoTrace, Mode, RunFailure};
use crate::param_space::ParamError;
use crate::sim::{Observation, SimError};

pub use curves::{
    aggregate_file_name, aggregate_to_csv, compare, export, import, median, parse_trial_file_name,
    quantile, trial_file_name, AggregateRow, Comparison, CurvePoint, LearningCurve, TrialCurve,
};
pub use preset::{build_preset, ExperimentPreset, DEFAULT_ITERATIONS, DEFAULT_TRIALS, PRESET_NAMES};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown preset {0:?} (expected one of exp1, exp2, exp3, exp4)")]
    UnknownPreset(String),
    #[error("invalid preset or curve: {0}")]
    Schema(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("budget {budget} is outside the recorded range (max {max} simulations)")]
    BudgetOutOfRange { budget: f64, max: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{mode} trial with seed {seed}: {failure}")]
    Run {
        mode: Mode,
        seed: u64,
        failure: Box<RunFailure>,
    },
}

/// Every trial of one mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeTrials {
    pub mode: Mode,
    pub traces: Vec<BoTrace>,
}

impl ModeTrials {
    pub fn curve(&self) -> LearningCurve {
        LearningCurve::from_traces(self.mode, &self.traces)
    }
}

/// Runs each mode once per seed on the same dataset. `base` supplies every
/// setting except mode and seed. Trials run in parallel; results are in seed
/// order.
pub fn run_trials_on(
    preset: &ExperimentPreset,
    dataset: &[Observation],
    modes: &[Mode],
    seeds: &[u64],
    base: &BoConfig,
) -> Result<Vec<ModeTrials>, BenchError> {
    let sim = preset.simulator();
    modes
        .iter()
        .map(|&mode| {
            let traces = seeds
                .par_iter()
                .map(|&seed| {
                    let cfg = BoConfig {
                        mode,
                        seed,
                        ..base.clone()
                    };
                    run(&cfg, dataset, &preset.space, &sim, &preset.schedule)
                        .map_err(|failure| BenchError::Run { mode, seed, failure })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ModeTrials { mode, traces })
        })
        .collect()
}

/// [`run_trials_on`] with the preset's own noise-free dataset, seeds
/// `0..n_trials`, and default settings at the preset's iteration count.
pub fn run_trials(preset: &ExperimentPreset, modes: &[Mode], n_trials: u64) -> Result<Vec<ModeTrials>, BenchError> {
    if n_trials == 0 {
        return Err(BenchError::Schema("n_trials must be at least 1".into()));
    }
    let dataset = preset.dataset()?;
    let seeds: Vec<u64> = (0..n_trials).collect();
    let base = preset.config(Mode::SumPartial);
    run_trials_on(preset, &dataset, modes, &seeds, &base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trials_are_deterministic_with_expected_budgets() {
        let mut preset = build_preset("exp1").unwrap();
        preset.iterations = 4;
        let dataset = preset.dataset().unwrap();
        let base = BoConfig {
            iterations: 4,
            multistart_count: 3,
            ascent_steps: 5,
            ..BoConfig::default()
        };
        let modes = [Mode::NaiveFull, Mode::SumPartial];
        let a = run_trials_on(&preset, &dataset, &modes, &[0, 1, 2], &base).unwrap();
        let b = run_trials_on(&preset, &dataset, &modes, &[0, 1, 2], &base).unwrap();
        assert_eq!(a, b);
        let n = dataset.len();
        for mt in &a {
            let curve = mt.curve();
            assert_eq!(curve.trials.len(), 3);
            for t in &curve.trials {
                assert_eq!(t.points.len(), 4);
                for (i, p) in t.points.iter().enumerate() {
                    let want = match mt.mode {
                        Mode::SumPartial => base.n_init * n + i + 1,
                        _ => n * (base.n_init + i + 1),
                    };
                    assert_eq!(p.sim_count, want);
                }
            }
            assert_eq!(curve.aggregate().len(), 4);
        }
    }

    #[test]
    fn zero_trials_rejected() {
        let preset = build_preset("exp1").unwrap();
        assert!(run_trials(&preset, &[Mode::SumPartial], 0).is_err());
    }
}
