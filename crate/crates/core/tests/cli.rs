use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sumgp::cli::load_dataset;
use sumgp::sim::reward;

fn sumgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sumgp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, preset: &str) {
    let o = sumgp(&["gen-data", "--preset", preset, "--out", s(dir)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn count_with(dir: &Path, suffix: &str) -> usize {
    fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(suffix))
        .count()
}

#[test]
fn gen_data_writes_observations_and_guards_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data, "exp1");
    assert_eq!(count_with(&data, ".hmap"), 3);
    assert!(data.join("obs0.json").is_file() && data.join("obs2.json").is_file());
    assert!(!data.join("obs3.json").exists());

    let (preset, obs) = load_dataset(&data).unwrap();
    assert_eq!(preset.name, "exp1");
    let truth = preset.dataset().unwrap();
    for (o, t) in obs.iter().zip(&truth) {
        assert_eq!((&o.scene, &o.k), (&t.scene, &t.k));
        assert_eq!(reward(&o.observed, &o.observed).unwrap(), 0.0);
        // heightmap text keeps 9 significant digits
        assert!(reward(&o.observed, &t.observed).unwrap().abs() < 1e-9);
    }

    let again = sumgp(&["gen-data", "--preset", "exp1", "--out", s(&data)]);
    assert_eq!(code(&again), 4);
    let forced = sumgp(&["gen-data", "--preset", "exp1", "--out", s(&data), "--force"]);
    assert_eq!(code(&forced), 0);
}

#[test]
fn gen_data_rejects_unknown_preset() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sumgp(&["gen-data", "--preset", "exp9", "--out", s(tmp.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gen_data_accepts_preset_file() {
    let tmp = tempfile::tempdir().unwrap();
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets/exp2.json");
    let data = tmp.path().join("d");
    gen(&data, s(&file));
    assert_eq!(count_with(&data, ".hmap"), 6);
}

#[test]
fn run_reports_missing_data_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere");
    let o = sumgp(&["run", "--data", s(&missing), "--out", s(&tmp.path().join("out"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains(s(&missing)));
}

#[test]
fn run_rejects_bad_config() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data, "exp1");
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"modes":["sum-partial"],"iterations":0}"#).unwrap();
    let out = tmp.path().join("out");
    let o = sumgp(&["run", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    fs::write(&cfg, r#"{"modez":[]}"#).unwrap();
    let o = sumgp(&["run", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn exp1_sum_partial_200_iterations_makes_progress() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    gen(&data, "exp1");
    let o = sumgp(&[
        "run", "--data", s(&data), "--out", s(&out), "--mode", "sum-partial", "--seed", "0", "--iterations", "200",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 1);
    let text = fs::read_to_string(out.join("sum-partial_trial0.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 200);
    let best = |row: &str| row.rsplit(',').next().unwrap().parse::<f64>().unwrap();
    assert!(best(rows[199]) < best(rows[0]));
    assert!(out.join("sum-partial_trace0.csv").is_file());
    assert!(out.join("sum-partial_aggregate.csv").is_file());
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn two_modes_two_trace_sets_deterministic_under_force() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    gen(&data, "exp1");
    let args = [
        "run", "--data", s(&data), "--out", s(&out), "--mode", "naive", "--mode", "sum-partial", "--seed", "4",
        "--iterations", "6",
    ];
    assert_eq!(code(&sumgp(&args)), 0);
    for f in ["naive_trial4.csv", "sum-partial_trial4.csv", "naive_trace4.csv", "sum-partial_trace4.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let first = fs::read_to_string(out.join("sum-partial_trace4.csv")).unwrap();
    assert_eq!(code(&sumgp(&args)), 4);
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(code(&sumgp(&forced)), 0);
    assert_eq!(fs::read_to_string(out.join("sum-partial_trace4.csv")).unwrap(), first);
}

#[test]
fn compare_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    gen(&data, "exp1");
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"modes":["naive","sum-partial"],"seeds":[0,1,2],"iterations":6,"multistart_count":4,"ascent_steps":10}"#,
    )
    .unwrap();
    let o = sumgp(&["run", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 6);

    let sum_files: Vec<String> = (0..3)
        .map(|i| s(&out.join(format!("sum-partial_trial{i}.csv"))).to_string())
        .collect();
    let mut args = vec!["compare", "--budget", "20", "--a"];
    args.extend(sum_files.iter().map(String::as_str));
    args.push("--b");
    args.extend(sum_files.iter().map(String::as_str));
    let o = sumgp(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["ratio"].as_f64(), Some(1.0));
    assert!(v["err_a"].is_f64() && v["err_b"].is_f64());

    // naive records sit at 18, 21, ..., 33 sims; sum-partial at 16..=21
    let naive = sumgp(&[
        "compare", "--a", s(&out.join("naive_trial0.csv")), "--b", &sum_files[0], "--budget", "20",
    ]);
    assert_eq!(code(&naive), 0);
    let beyond = sumgp(&["compare", "--a", &sum_files[0], "--b", &sum_files[1], "--budget", "1000"]);
    assert_eq!(code(&beyond), 2);
    let mixed = sumgp(&["compare", "--a", s(&out), "--b", &sum_files[0], "--budget", "20"]);
    assert_eq!(code(&mixed), 2);

    let rep = sumgp(&["report", "--dir", s(&out), "--budget", "20"]);
    assert_eq!(code(&rep), 0, "{}", String::from_utf8_lossy(&rep.stderr));
    assert_eq!(String::from_utf8_lossy(&rep.stdout).lines().count(), 2);
    assert!(out.join("report.json").is_file());
    assert_eq!(code(&sumgp(&["report", "--dir", s(&out)])), 4);
    assert_eq!(code(&sumgp(&["report", "--dir", s(&out), "--force"])), 0);
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(code(&sumgp(&["frobnicate"])), 2);
    assert_eq!(code(&sumgp(&["--help"])), 0);
}
