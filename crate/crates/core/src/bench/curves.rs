use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::optimizer::{BoTrace, Mode, Selected};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iter: usize,
    pub sim_count: usize,
    pub selected_obs: Selected,
    pub total_error: f64,
    pub best_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialCurve {
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

impl TrialCurve {
    pub fn from_trace(trace: &BoTrace) -> Self {
        Self {
            seed: trace.seed,
            points: trace
                .records
                .iter()
                .map(|r| CurvePoint {
                    iter: r.iter,
                    sim_count: r.sim_count,
                    selected_obs: r.selected,
                    total_error: r.total_error,
                    best_error: r.best_error,
                })
                .collect(),
        }
    }

    /// Total error at a cumulative simulation count, linearly interpolated
    /// between recorded steps. Budgets before the first step take the first
    /// step's value; budgets past the last step are an error.
    pub fn error_at_budget(&self, budget: f64) -> Result<f64, BenchError> {
        let (first, last) = match (self.points.first(), self.points.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(BenchError::Schema("empty curve".into())),
        };
        if !(budget >= 0.0 && budget <= last.sim_count as f64) {
            return Err(BenchError::BudgetOutOfRange {
                budget,
                max: last.sim_count,
            });
        }
        if budget <= first.sim_count as f64 {
            return Ok(first.total_error);
        }
        let j = self
            .points
            .partition_point(|p| (p.sim_count as f64) < budget);
        let b = &self.points[j];
        let a = &self.points[j - 1];
        let t = (budget - a.sim_count as f64) / (b.sim_count - a.sim_count) as f64;
        Ok(a.total_error + t * (b.total_error - a.total_error))
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["iter", "sim_count", "selected_obs", "total_error", "best_error"])
            .expect("in-memory write");
        for p in &self.points {
            w.write_record([
                p.iter.to_string(),
                p.sim_count.to_string(),
                p.selected_obs.to_string(),
                p.total_error.to_string(),
                p.best_error.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
    }

    pub fn from_csv(text: &str, seed: u64) -> Result<Self, BenchError> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let header = rd.headers().map_err(csv_err)?.clone();
        if header.iter().collect::<Vec<_>>()
            != ["iter", "sim_count", "selected_obs", "total_error", "best_error"]
        {
            return Err(BenchError::Schema(format!("unexpected trial header {header:?}")));
        }
        let mut points = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            let bad = |i: usize| BenchError::Schema(format!("bad value {:?}", &rec[i]));
            points.push(CurvePoint {
                iter: rec[0].parse().map_err(|_| bad(0))?,
                sim_count: rec[1].parse().map_err(|_| bad(1))?,
                selected_obs: rec[2].parse().map_err(|_| bad(2))?,
                total_error: rec[3].parse().map_err(|_| bad(3))?,
                best_error: rec[4].parse().map_err(|_| bad(4))?,
            });
        }
        Ok(Self { seed, points })
    }
}

fn csv_err(e: csv::Error) -> BenchError {
    BenchError::Schema(e.to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub iter: usize,
    pub sim_count_median: f64,
    pub err_p25: f64,
    pub err_p50: f64,
    pub err_p75: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// Learning curves of one mode across trial seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub mode: Mode,
    pub trials: Vec<TrialCurve>,
}

impl LearningCurve {
    pub fn from_traces(mode: Mode, traces: &[BoTrace]) -> Self {
        Self {
            mode,
            trials: traces.iter().map(TrialCurve::from_trace).collect(),
        }
    }

    /// Median sim count and total-error quartiles per iteration, over the
    /// iterations every trial reached.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let len = self.trials.iter().map(|t| t.points.len()).min().unwrap_or(0);
        (0..len)
            .map(|i| {
                let sims: Vec<f64> = self.trials.iter().map(|t| t.points[i].sim_count as f64).collect();
                let mut errs: Vec<f64> = self.trials.iter().map(|t| t.points[i].total_error).collect();
                errs.sort_by(f64::total_cmp);
                AggregateRow {
                    iter: self.trials[0].points[i].iter,
                    sim_count_median: median(&sims),
                    err_p25: quantile(&errs, 0.25),
                    err_p50: quantile(&errs, 0.5),
                    err_p75: quantile(&errs, 0.75),
                }
            })
            .collect()
    }

    /// Median over trials of the interpolated total error at `budget`.
    pub fn median_error_at(&self, budget: f64) -> Result<f64, BenchError> {
        if self.trials.is_empty() {
            return Err(BenchError::Schema("no trials".into()));
        }
        let errs = self
            .trials
            .iter()
            .map(|t| t.error_at_budget(budget))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(median(&errs))
    }
}

pub fn aggregate_to_csv(rows: &[AggregateRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iter", "sim_count_median", "err_p25", "err_p50", "err_p75"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            r.sim_count_median.to_string(),
            r.err_p25.to_string(),
            r.err_p50.to_string(),
            r.err_p75.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub budget: f64,
    pub err_a: f64,
    pub err_b: f64,
    /// `err_a / err_b`
    pub ratio: f64,
}

/// Median total errors of two methods at the same simulation budget.
pub fn compare(a: &LearningCurve, b: &LearningCurve, budget: f64) -> Result<Comparison, BenchError> {
    let err_a = a.median_error_at(budget)?;
    let err_b = b.median_error_at(budget)?;
    Ok(Comparison {
        budget,
        err_a,
        err_b,
        ratio: err_a / err_b,
    })
}

pub fn trial_file_name(mode: Mode, seed: u64) -> String {
    format!("{mode}_trial{seed}.csv")
}

pub fn aggregate_file_name(mode: Mode) -> String {
    format!("{mode}_aggregate.csv")
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<(), BenchError> {
    fs::write(path, text).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes one CSV per trial and one aggregate CSV per mode into `dir`,
/// creating it if needed. Returns the paths written.
pub fn export(curves: &[LearningCurve], dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    fs::create_dir_all(dir).map_err(|source| BenchError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    for c in curves {
        for t in &c.trials {
            let path = dir.join(trial_file_name(c.mode, t.seed));
            write_file(&path, &t.to_csv())?;
            written.push(path);
        }
        let path = dir.join(aggregate_file_name(c.mode));
        write_file(&path, &aggregate_to_csv(&c.aggregate()))?;
        written.push(path);
    }
    Ok(written)
}

/// Splits `<mode>_trial<seed>.csv` into its mode and seed.
pub fn parse_trial_file_name(name: &str) -> Option<(Mode, u64)> {
    let stem = name.strip_suffix(".csv")?;
    let (mode, seed) = stem.rsplit_once("_trial")?;
    Some((mode.parse().ok()?, seed.parse().ok()?))
}

/// Reads trial CSVs named by [`trial_file_name`] back into one curve; every
/// file must belong to the same mode.
pub fn import(paths: &[PathBuf]) -> Result<LearningCurve, BenchError> {
    let mut mode = None;
    let mut trials = Vec::new();
    for path in paths {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let (m, seed) = parse_trial_file_name(name)
            .ok_or_else(|| BenchError::Schema(format!("{} is not a trial file", path.display())))?;
        if mode.is_some_and(|prev| prev != m) {
            return Err(BenchError::Schema(format!(
                "{} mixes modes {} and {m}",
                path.display(),
                mode.expect("checked")
            )));
        }
        mode = Some(m);
        let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.clone(),
            source,
        })?;
        trials.push(TrialCurve::from_csv(&text, seed)?);
    }
    let mode = mode.ok_or_else(|| BenchError::Schema("no trial files".into()))?;
    trials.sort_by_key(|t| t.seed);
    Ok(LearningCurve { mode, trials })
}
