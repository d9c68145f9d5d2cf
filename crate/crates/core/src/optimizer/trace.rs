use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Mode;

/// Which observation a step simulated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selected {
    /// Dataset index of the single observation simulated.
    Observation(usize),
    All,
}

impl fmt::Display for Selected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selected::Observation(i) => write!(f, "{i}"),
            Selected::All => f.write_str("all"),
        }
    }
}

impl FromStr for Selected {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(Selected::All);
        }
        s.parse()
            .map(Selected::Observation)
            .map_err(|_| format!("bad selected_obs {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// Proposed parameters, physical units, full space.
    pub theta: Vec<f64>,
    pub selected: Selected,
    /// Reward of the simulated observation, or the sum over all of them.
    pub partial_reward: f64,
    /// Simulations charged to the optimizer so far, seeding included.
    pub sim_count: usize,
    /// `-Σ r_i(θ′)` over the active observations.
    pub total_error: f64,
    /// Lowest total error since the active observation set last changed.
    pub best_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoTrace {
    pub mode: Mode,
    pub seed: u64,
    pub dim_names: Vec<String>,
    /// Total error of each seed point.
    pub seed_errors: Vec<f64>,
    pub records: Vec<TraceRecord>,
    /// Simulations spent only on reporting total error; not charged.
    pub report_sims: usize,
}

impl BoTrace {
    pub fn new(mode: Mode, seed: u64, dim_names: Vec<String>) -> Self {
        Self {
            mode,
            seed,
            dim_names,
            seed_errors: Vec::new(),
            records: Vec::new(),
            report_sims: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["iter".to_string()];
        h.extend(self.dim_names.iter().cloned());
        h.extend(
            ["selected_obs", "partial_reward", "sim_count", "total_error", "best_error"]
                .map(String::from),
        );
        h
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.csv_header()).expect("in-memory write");
        for r in &self.records {
            let mut row = vec![r.iter.to_string()];
            row.extend(r.theta.iter().map(f64::to_string));
            row.push(r.selected.to_string());
            row.push(r.partial_reward.to_string());
            row.push(r.sim_count.to_string());
            row.push(r.total_error.to_string());
            row.push(r.best_error.to_string());
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
    }

    /// Parses [`to_csv`](Self::to_csv) output. Seed errors and report counts
    /// are not part of the CSV and come back empty.
    pub fn from_csv(text: &str, mode: Mode, seed: u64) -> Result<Self, String> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = rd
            .headers()
            .map_err(|e| e.to_string())?
            .iter()
            .map(String::from)
            .collect();
        let tail = ["selected_obs", "partial_reward", "sim_count", "total_error", "best_error"];
        if header.len() < 1 + tail.len()
            || header[0] != "iter"
            || header[header.len() - tail.len()..] != tail
        {
            return Err(format!("unexpected trace header {header:?}"));
        }
        let n_theta = header.len() - 1 - tail.len();
        let mut trace = Self::new(mode, seed, header[1..1 + n_theta].to_vec());
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let f = |i: usize| -> Result<f64, String> {
                rec[i]
                    .parse()
                    .map_err(|_| format!("row {line}: bad number {:?}", &rec[i]))
            };
            let u = |i: usize| -> Result<usize, String> {
                rec[i]
                    .parse()
                    .map_err(|_| format!("row {line}: bad integer {:?}", &rec[i]))
            };
            let theta = (1..=n_theta).map(f).collect::<Result<Vec<_>, _>>()?;
            let b = 1 + n_theta;
            trace.records.push(TraceRecord {
                iter: u(0)?,
                theta,
                selected: rec[b].parse()?,
                partial_reward: f(b + 1)?,
                sim_count: u(b + 2)?,
                total_error: f(b + 3)?,
                best_error: f(b + 4)?,
            });
        }
        Ok(trace)
    }
}
