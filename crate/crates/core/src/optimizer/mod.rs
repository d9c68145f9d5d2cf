//! GP-UCB over a set of scene observations.
//!
//! Three modes share one run loop:
//!
//! * `NaiveFull`: a single GP over the whole parameter vector models the total
//!   reward; every observation is simulated at each proposal.
//! * `SumFull`: one GP per observation over the parameters of the objects in
//!   that scene; the acquisition is the sum of the per-GP UCB terms. Every
//!   observation is still simulated at each proposal.
//! * `SumPartial`: as `SumFull`, but each proposal is simulated on the single
//!   observation whose GP is most uncertain there.
//!
//! All GP inputs live in the unit cube of the full parameter space. Dimensions
//! that belong to no active observation are pinned at 0.5.

mod acquisition;
mod run;
mod state;
mod trace;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::GpError;
use crate::param_space::ParamError;
use crate::sim::SimError;

pub use acquisition::{acquisition_naive_ucb, propose_next, Surface, FD_STEP, INITIAL_STEP};
pub use run::{evaluate_observation, run, Optimizer, RunFailure};
pub use state::{should_refit, GpEntry, NaiveState, SumGpState};
pub use trace::{BoTrace, Selected, TraceRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "naive")]
    NaiveFull,
    #[serde(rename = "sum-full")]
    SumFull,
    #[serde(rename = "sum-partial")]
    SumPartial,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::NaiveFull, Mode::SumFull, Mode::SumPartial];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::NaiveFull => "naive",
            Mode::SumFull => "sum-full",
            Mode::SumPartial => "sum-partial",
        }
    }

    /// Whether every active observation is simulated at each proposal.
    pub fn is_full(self) -> bool {
        !matches!(self, Mode::SumPartial)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive" | "naive-full" => Ok(Mode::NaiveFull),
            "sum-full" => Ok(Mode::SumFull),
            "sum-partial" | "sum" => Ok(Mode::SumPartial),
            _ => Err(format!(
                "unknown mode {s:?} (expected naive, sum-full or sum-partial)"
            )),
        }
    }
}

/// Exploration weight: one value for every observation, or one per
/// observation in dataset order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Beta {
    Scalar(f64),
    PerObservation(Vec<f64>),
}

impl Default for Beta {
    fn default() -> Self {
        Beta::Scalar(DEFAULT_BETA)
    }
}

pub const DEFAULT_BETA: f64 = 2.0;

impl Beta {
    pub fn for_observation(&self, index: usize) -> Result<f64, OptError> {
        match self {
            Beta::Scalar(b) => Ok(*b),
            Beta::PerObservation(v) => v.get(index).copied().ok_or_else(|| {
                OptError::Config(format!(
                    "beta has {} entries but observation {index} needs one",
                    v.len()
                ))
            }),
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            Beta::Scalar(b) => vec![*b],
            Beta::PerObservation(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoConfig {
    pub mode: Mode,
    pub beta: Beta,
    /// Uniform seed points evaluated on every active observation before the
    /// first step.
    pub n_init: usize,
    /// Seed points evaluated on an observation injected mid-run.
    pub n_init_new: usize,
    pub iterations: usize,
    pub multistart_count: usize,
    pub ascent_steps: usize,
    pub seed: u64,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            mode: Mode::SumPartial,
            beta: Beta::default(),
            n_init: 5,
            n_init_new: 0,
            iterations: 200,
            multistart_count: 16,
            ascent_steps: 50,
            seed: 0,
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<(), OptError> {
        if self.iterations == 0 {
            return Err(OptError::Config("iterations must be at least 1".into()));
        }
        if self.multistart_count == 0 {
            return Err(OptError::Config("multistart_count must be at least 1".into()));
        }
        if let Some(b) = self.beta.values().iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(OptError::Config(format!("beta {b} must be finite and >= 0")));
        }
        if let Beta::PerObservation(v) = &self.beta {
            if v.is_empty() {
                return Err(OptError::Config("beta list is empty".into()));
            }
            if self.mode == Mode::NaiveFull {
                return Err(OptError::Config(
                    "naive mode models the total reward and takes a scalar beta".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Which dataset observations are active from the start and which are
/// injected later, keyed by iteration. An empty schedule activates everything
/// at iteration 0.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule(pub BTreeMap<usize, Vec<usize>>);

impl Schedule {
    pub fn all_at_start() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Observations active before the first step.
    pub fn initial(&self, n_obs: usize) -> Vec<usize> {
        if self.0.is_empty() {
            (0..n_obs).collect()
        } else {
            self.0.get(&0).cloned().unwrap_or_default()
        }
    }

    /// `(iteration, observations)` injected after the start, in order.
    pub fn injections(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.0
            .iter()
            .filter(|(t, _)| **t > 0)
            .map(|(t, v)| (*t, v.as_slice()))
    }

    pub fn at(&self, iteration: usize) -> Option<&[usize]> {
        if iteration == 0 {
            return None;
        }
        self.0.get(&iteration).map(Vec::as_slice)
    }

    pub fn validate(&self, n_obs: usize, iterations: usize) -> Result<(), OptError> {
        if self.0.is_empty() {
            return Ok(());
        }
        if self.initial(n_obs).is_empty() {
            return Err(OptError::Config(
                "schedule must activate at least one observation at iteration 0".into(),
            ));
        }
        let mut seen = vec![false; n_obs];
        for (&t, obs) in &self.0 {
            if t > 0 && t >= iterations {
                return Err(OptError::Config(format!(
                    "schedule injects at iteration {t} but the run has {iterations} iterations"
                )));
            }
            for &o in obs {
                if o >= n_obs {
                    return Err(OptError::Config(format!(
                        "schedule names observation {o} but the dataset has {n_obs}"
                    )));
                }
                if std::mem::replace(&mut seen[o], true) {
                    return Err(OptError::Config(format!(
                        "observation {o} is scheduled more than once"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum OptError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error("simulating observation {obs} failed: {source}")]
    Sim {
        obs: usize,
        #[source]
        source: SimError,
    },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{m}\""));
        }
        assert!("greedy".parse::<Mode>().is_err());
    }

    #[test]
    fn config_json_defaults_and_beta_forms() {
        let c: BoConfig = serde_json::from_str(r#"{"mode":"naive","beta":1.5}"#).unwrap();
        assert_eq!(c.mode, Mode::NaiveFull);
        assert_eq!(c.beta.for_observation(7).unwrap(), 1.5);
        assert_eq!(c.n_init, 5);
        assert_eq!(c.multistart_count, 16);
        let c: BoConfig = serde_json::from_str(r#"{"beta":[1.0,3.0]}"#).unwrap();
        assert_eq!(c.beta.for_observation(1).unwrap(), 3.0);
        assert!(c.beta.for_observation(2).is_err());
        assert!(serde_json::from_str::<BoConfig>(r#"{"betta":1}"#).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(BoConfig::default().validate().is_ok());
        let bad = [
            BoConfig { iterations: 0, ..Default::default() },
            BoConfig { multistart_count: 0, ..Default::default() },
            BoConfig { beta: Beta::Scalar(-1.0), ..Default::default() },
            BoConfig { beta: Beta::PerObservation(vec![]), ..Default::default() },
            BoConfig {
                mode: Mode::NaiveFull,
                beta: Beta::PerObservation(vec![1.0]),
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn schedule_parsing_and_checks() {
        let s: Schedule = serde_json::from_str(r#"{"0":[0,1,2],"50":[3,4,5],"100":[6,7]}"#).unwrap();
        assert_eq!(s.initial(8), vec![0, 1, 2]);
        let inj: Vec<_> = s.injections().map(|(t, o)| (t, o.to_vec())).collect();
        assert_eq!(inj, vec![(50, vec![3, 4, 5]), (100, vec![6, 7])]);
        assert!(s.validate(8, 200).is_ok());
        assert!(s.validate(8, 100).is_err());
        assert!(s.validate(7, 200).is_err());
        let dup: Schedule = serde_json::from_str(r#"{"0":[0],"5":[0]}"#).unwrap();
        assert!(dup.validate(2, 10).is_err());
        let no_start: Schedule = serde_json::from_str(r#"{"5":[0]}"#).unwrap();
        assert!(no_start.validate(2, 10).is_err());
        assert_eq!(Schedule::all_at_start().initial(3), vec![0, 1, 2]);
    }
}
