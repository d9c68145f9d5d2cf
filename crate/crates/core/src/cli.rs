//! Command-line front end: dataset generation, runs, comparisons, reports.
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 I/O, 4 refused to
//! overwrite existing output, 5 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bench::{
    aggregate_file_name, aggregate_to_csv, build_preset, compare, import, median, parse_trial_file_name,
    trial_file_name, BenchError, ExperimentPreset, LearningCurve, TrialCurve,
};
use crate::optimizer::{run, Beta, BoConfig, BoTrace, Mode, Schedule};
use crate::param_space::SubsetIndex;
use crate::sim::{Heightmap, NoiseSpec, Observation, SceneSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_EXISTS: i32 = 4;
pub const EXIT_RUNTIME: i32 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: msg.into() }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        let code = match &e {
            BenchError::Io { .. } => EXIT_IO,
            BenchError::Run { .. } | BenchError::Sim(_) => EXIT_RUNTIME,
            _ => EXIT_USAGE,
        };
        Self { code, message: e.to_string() }
    }
}

#[derive(Parser, Debug)]
#[command(name = "sumgp", version, about = "Material parameter identification with per-observation GP-UCB")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate observations (JSON plus HMAP heightmaps) for a preset.
    GenData(GenDataArgs),
    /// Run the optimizer on a generated dataset and write learning curves.
    Run(RunArgs),
    /// Compare two sets of trial curves at a simulation budget.
    Compare(CompareArgs),
    /// Re-aggregate the trial curves of a run directory and summarize them.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Built-in preset name (exp1..exp4) or path to a preset JSON file.
    #[arg(long)]
    pub preset: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Uniform per-cell noise amplitude in meters added to ground truth.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Run configuration JSON; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Mode to run; repeat for several. Overrides the config's list.
    #[arg(long = "mode")]
    pub modes: Vec<Mode>,
    /// Run a single trial with this seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Trial CSVs of the first method, or a directory holding only them.
    #[arg(long, num_args = 1.., required = true)]
    pub a: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    pub b: Vec<PathBuf>,
    /// Cumulative simulation count to compare at.
    #[arg(long)]
    pub budget: f64,
    /// Also write the JSON summary here.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Run directory.
    #[arg(long)]
    pub dir: PathBuf,
    /// Budgets at which to report median total error.
    #[arg(long = "budget")]
    pub budgets: Vec<f64>,
    #[arg(long)]
    pub force: bool,
}

/// Run configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
    /// Falls back to the dataset's preset when absent.
    pub iterations: Option<usize>,
    pub beta: Beta,
    pub n_init: usize,
    pub n_init_new: usize,
    pub multistart_count: usize,
    pub ascent_steps: usize,
    /// Falls back to the dataset's preset when absent.
    pub schedule: Option<Schedule>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = BoConfig::default();
        Self {
            modes: vec![Mode::NaiveFull, Mode::SumPartial],
            seeds: (0..crate::bench::DEFAULT_TRIALS).collect(),
            iterations: None,
            beta: d.beta,
            n_init: d.n_init,
            n_init_new: d.n_init_new,
            multistart_count: d.multistart_count,
            ascent_steps: d.ascent_steps,
            schedule: None,
        }
    }
}

/// What a `run` invocation did, written next to its outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_path: Option<PathBuf>,
    pub preset: String,
    pub modes: Vec<Mode>,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub iterations: usize,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// On-disk form of one observation; the heightmap sits in a sibling file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationFile {
    pub scene: SceneSpec,
    pub k: SubsetIndex,
    pub heightmap: String,
}

pub const PRESET_FILE: &str = "preset.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";

pub fn observation_file_name(i: usize) -> String {
    format!("obs{i}.json")
}

pub fn heightmap_file_name(i: usize) -> String {
    format!("obs{i}.hmap")
}

pub fn trace_file_name(mode: Mode, seed: u64) -> String {
    format!("{mode}_trace{seed}.csv")
}

/// Parses arguments and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::GenData(a) => gen_data(&a),
        Command::Run(a) => run_cmd(&a),
        Command::Compare(a) => compare_cmd(&a),
        Command::Report(a) => report(&a),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Refuses to proceed if any of `paths` exists, unless `force`.
fn guard(paths: &[PathBuf], force: bool) -> Result<(), CliError> {
    if force {
        return Ok(());
    }
    if let Some(p) = paths.iter().find(|p| p.exists()) {
        return Err(CliError {
            code: EXIT_EXISTS,
            message: format!("{} already exists (use --force to overwrite)", p.display()),
        });
    }
    Ok(())
}

fn load_preset(spec: &str) -> Result<ExperimentPreset, CliError> {
    if let Ok(p) = build_preset(spec) {
        return Ok(p);
    }
    let path = Path::new(spec);
    if !path.is_file() {
        return Err(CliError::usage(format!(
            "unknown preset {spec:?}: not a built-in name (exp1..exp4) or a preset file"
        )));
    }
    Ok(ExperimentPreset::from_json(&read(path)?)?)
}

fn gen_data(a: &GenDataArgs) -> Result<(), CliError> {
    let preset = load_preset(&a.preset)?;
    let noise = match a.noise {
        Some(amp) if !(amp.is_finite() && amp >= 0.0) => {
            return Err(CliError::usage(format!("noise amplitude {amp} must be >= 0")))
        }
        Some(amp) => Some(NoiseSpec { amplitude: amp, seed: a.noise_seed }),
        None => None,
    };
    let observations = crate::sim::make_dataset(
        &preset.scenes,
        &preset.space,
        &preset.simulator(),
        &preset.theta_star,
        noise,
    )
    .map_err(|e| CliError { code: EXIT_RUNTIME, message: e.to_string() })?;

    let mut targets = vec![a.out.join(PRESET_FILE)];
    for i in 0..observations.len() {
        targets.push(a.out.join(observation_file_name(i)));
        targets.push(a.out.join(heightmap_file_name(i)));
    }
    guard(&targets, a.force)?;
    ensure_dir(&a.out)?;
    write(&a.out.join(PRESET_FILE), &preset.to_json())?;
    for (i, obs) in observations.iter().enumerate() {
        let file = ObservationFile {
            scene: obs.scene.clone(),
            k: obs.k.clone(),
            heightmap: heightmap_file_name(i),
        };
        write(
            &a.out.join(observation_file_name(i)),
            &serde_json::to_string_pretty(&file).expect("observation serializes"),
        )?;
        write(&a.out.join(heightmap_file_name(i)), &obs.observed.to_text())?;
    }
    println!(
        "{}: wrote {} observations to {}",
        preset.name,
        observations.len(),
        a.out.display()
    );
    Ok(())
}

/// Reads a directory written by `gen-data`.
pub fn load_dataset(dir: &Path) -> Result<(ExperimentPreset, Vec<Observation>), CliError> {
    if !dir.is_dir() {
        return Err(CliError::usage(format!("data directory {} does not exist", dir.display())));
    }
    let preset_path = dir.join(PRESET_FILE);
    if !preset_path.is_file() {
        return Err(CliError::usage(format!("{} is missing", preset_path.display())));
    }
    let preset = ExperimentPreset::from_json(&read(&preset_path)?)?;
    let mut observations = Vec::with_capacity(preset.scenes.len());
    for i in 0..preset.scenes.len() {
        let path = dir.join(observation_file_name(i));
        let file: ObservationFile = serde_json::from_str(&read(&path)?)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let hpath = dir.join(&file.heightmap);
        let observed = Heightmap::from_text(&read(&hpath)?)
            .map_err(|e| CliError::usage(format!("{}: {e}", hpath.display())))?;
        let obs = Observation::new(file.scene, observed)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if obs.k != file.k {
            return Err(CliError::usage(format!(
                "{}: object ids do not match the scene",
                path.display()
            )));
        }
        observations.push(obs);
    }
    Ok((preset, observations))
}

fn run_cmd(a: &RunArgs) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(path) => {
            if !path.is_file() {
                return Err(CliError::usage(format!("config {} does not exist", path.display())));
            }
            serde_json::from_str::<RunConfig>(&read(path)?)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    let (preset, dataset) = load_dataset(&a.data)?;
    if !a.modes.is_empty() {
        cfg.modes = a.modes.clone();
    }
    if let Some(s) = a.seed {
        cfg.seeds = vec![s];
    }
    if let Some(b) = a.beta {
        cfg.beta = Beta::Scalar(b);
    }
    if a.iterations.is_some() {
        cfg.iterations = a.iterations;
    }
    if cfg.modes.is_empty() || cfg.seeds.is_empty() {
        return Err(CliError::usage("config lists no modes or no seeds"));
    }
    let iterations = cfg.iterations.unwrap_or(preset.iterations);
    let schedule = cfg.schedule.clone().unwrap_or_else(|| preset.schedule.clone());
    let base = BoConfig {
        mode: cfg.modes[0],
        beta: cfg.beta.clone(),
        n_init: cfg.n_init,
        n_init_new: cfg.n_init_new,
        iterations,
        multistart_count: cfg.multistart_count,
        ascent_steps: cfg.ascent_steps,
        seed: 0,
    };
    for &mode in &cfg.modes {
        BoConfig { mode, ..base.clone() }
            .validate()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    schedule
        .validate(dataset.len(), iterations)
        .map_err(|e| CliError::usage(e.to_string()))?;
    if cfg.modes.contains(&Mode::NaiveFull) && schedule.injections().next().is_some() {
        return Err(CliError::usage(
            "naive mode cannot follow a schedule that injects observations",
        ));
    }

    let mut targets = vec![a.out.join(MANIFEST_FILE)];
    for &mode in &cfg.modes {
        targets.push(a.out.join(aggregate_file_name(mode)));
        for &seed in &cfg.seeds {
            targets.push(a.out.join(trial_file_name(mode, seed)));
            targets.push(a.out.join(trace_file_name(mode, seed)));
        }
    }
    guard(&targets, a.force)?;
    ensure_dir(&a.out)?;

    let sim = preset.simulator();
    let mut failure: Option<CliError> = None;
    for &mode in &cfg.modes {
        let mut traces: Vec<BoTrace> = Vec::new();
        for &seed in &cfg.seeds {
            let c = BoConfig { mode, seed, ..base.clone() };
            let (trace, err) = match run(&c, &dataset, &preset.space, &sim, &schedule) {
                Ok(t) => (t, None),
                Err(f) => {
                    let msg = f.to_string();
                    (f.trace, Some(msg))
                }
            };
            write(&a.out.join(trace_file_name(mode, seed)), &trace.to_csv())?;
            write(
                &a.out.join(trial_file_name(mode, seed)),
                &TrialCurve::from_trace(&trace).to_csv(),
            )?;
            match (&err, trace.records.last(), trace.records.first()) {
                (None, Some(last), Some(first)) => println!(
                    "{mode} seed {seed}: {} iterations, {} sims, best error {:.6e} (first step {:.6e})",
                    trace.len(),
                    last.sim_count,
                    last.best_error,
                    first.best_error
                ),
                (Some(msg), ..) => println!("{mode} seed {seed}: FAILED after {} iterations: {msg}", trace.len()),
                _ => println!("{mode} seed {seed}: no iterations recorded"),
            }
            if let Some(msg) = err {
                failure.get_or_insert(CliError { code: EXIT_RUNTIME, message: msg });
            }
            traces.push(trace);
        }
        let curve = LearningCurve::from_traces(mode, &traces);
        write(&a.out.join(aggregate_file_name(mode)), &aggregate_to_csv(&curve.aggregate()))?;
    }
    let manifest = RunManifest {
        config_path: a.config.clone(),
        preset: preset.name.clone(),
        modes: cfg.modes.clone(),
        output_dir: a.out.clone(),
        seeds: cfg.seeds.clone(),
        iterations,
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    write(
        &a.out.join(MANIFEST_FILE),
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Expands directories into the trial CSVs they contain.
fn trial_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let entries = fs::read_dir(p).map_err(|e| CliError::io(p, e))?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| parse_trial_file_name(n).is_some())
                })
                .collect();
            found.sort();
            out.extend(found);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            return Err(CliError::usage(format!("{} does not exist", p.display())));
        }
    }
    Ok(out)
}

fn load_curve(inputs: &[PathBuf]) -> Result<LearningCurve, CliError> {
    let paths = trial_paths(inputs)?;
    Ok(import(&paths)?)
}

fn compare_cmd(a: &CompareArgs) -> Result<(), CliError> {
    let ca = load_curve(&a.a)?;
    let cb = load_curve(&a.b)?;
    let cmp = compare(&ca, &cb, a.budget)?;
    let json = serde_json::to_string(&cmp).expect("comparison serializes");
    if let Some(path) = &a.json {
        guard(std::slice::from_ref(path), a.force)?;
        write(path, &json)?;
    }
    eprintln!(
        "at {} sims: {} median error {:.6e}, {} median error {:.6e}, ratio {:.4}",
        a.budget, ca.mode, cmp.err_a, cb.mode, cmp.err_b, cmp.ratio
    );
    println!("{json}");
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: Mode,
    pub trials: usize,
    pub iterations: usize,
    pub final_sim_count: f64,
    pub median_final_best_error: f64,
    /// `(budget, median total error)` pairs.
    pub at_budget: Vec<(f64, f64)>,
}

fn report(a: &ReportArgs) -> Result<(), CliError> {
    if !a.dir.is_dir() {
        return Err(CliError::usage(format!("{} is not a directory", a.dir.display())));
    }
    let paths = trial_paths(std::slice::from_ref(&a.dir))?;
    if paths.is_empty() {
        return Err(CliError::usage(format!("no trial CSVs in {}", a.dir.display())));
    }
    let mut by_mode: Vec<(Mode, Vec<PathBuf>)> = Vec::new();
    for p in paths {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let (mode, _) = parse_trial_file_name(name).expect("filtered");
        match by_mode.iter_mut().find(|(m, _)| *m == mode) {
            Some((_, v)) => v.push(p),
            None => by_mode.push((mode, vec![p])),
        }
    }
    by_mode.sort_by_key(|(m, _)| *m);
    let report_path = a.dir.join(REPORT_FILE);
    // aggregates are derived from the trial files and always refreshed
    guard(std::slice::from_ref(&report_path), a.force)?;

    let mut reports = Vec::new();
    for (mode, files) in &by_mode {
        let curve = import(files)?;
        write(&a.dir.join(aggregate_file_name(*mode)), &aggregate_to_csv(&curve.aggregate()))?;
        let iterations = curve.trials.iter().map(|t| t.points.len()).min().unwrap_or(0);
        let finals: Vec<f64> = curve
            .trials
            .iter()
            .filter_map(|t| t.points.last().map(|p| p.best_error))
            .collect();
        let sims: Vec<f64> = curve
            .trials
            .iter()
            .filter_map(|t| t.points.last().map(|p| p.sim_count as f64))
            .collect();
        let mut at_budget = Vec::new();
        for &b in &a.budgets {
            at_budget.push((b, curve.median_error_at(b)?));
        }
        let r = ModeReport {
            mode: *mode,
            trials: curve.trials.len(),
            iterations,
            final_sim_count: median(&sims),
            median_final_best_error: median(&finals),
            at_budget,
        };
        print!(
            "{:<12} trials {:>3}  iterations {:>4}  sims {:>6}  best error {:.6e}",
            r.mode.as_str(),
            r.trials,
            r.iterations,
            r.final_sim_count,
            r.median_final_best_error
        );
        for (b, e) in &r.at_budget {
            print!("  @{b}: {e:.6e}");
        }
        println!();
        reports.push(r);
    }
    write(
        &report_path,
        &serde_json::to_string_pretty(&reports).expect("report serializes"),
    )?;
    Ok(())
}
