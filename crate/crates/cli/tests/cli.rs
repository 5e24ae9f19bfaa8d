use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use myodyn::config::ToolConfig;
use myodyn::eval::ComparisonTable;
use myodyn::train::{TrainMode, TrainReport};
use tempfile::TempDir;

fn myodyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_myodyn"))
        .args(args)
        .env_remove("MYODYN_SEED")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = myodyn(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

/// Small network, short trial and few epochs, written to `dir/config.toml`.
fn small_config(dir: &Path, epochs: usize) -> std::path::PathBuf {
    let mut cfg = ToolConfig::default();
    cfg.network.hidden_widths = vec![16, 16];
    cfg.data.profile.duration = 2.0;
    cfg.training.epochs = epochs;
    let path = dir.join("config.toml");
    cfg.save(&path).unwrap();
    path
}

#[test]
fn simulate_writes_three_files_deterministically() {
    let tmp = TempDir::new().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    ok(&["simulate", "--out", s(&a), "--seed", "3"]);
    ok(&["simulate", "--out", s(&b), "--seed", "3"]);
    ok(&["simulate", "--out", s(&c), "--seed", "3", "--speed", "0.8"]);
    assert_eq!(header(&a.join("trial.csv")), "t,e_FCR,e_FCU,e_ECRL,e_ECRB,e_ECU,q");
    assert_eq!(header(&a.join("forces.csv")), "t,F_FCR,F_FCU,F_ECRL,F_ECRB,F_ECU");
    assert!(fs::read_to_string(a.join("manifest.toml")).unwrap().contains("seed = 3"));
    for f in ["trial.csv", "forces.csv", "manifest.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("manifest.toml")).unwrap(), fs::read(c.join("manifest.toml")).unwrap());
}

#[test]
fn seed_defaults_to_the_environment() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = Command::new(env!("CARGO_BIN_EXE_myodyn"))
        .args(["simulate", "--out", s(&a)])
        .env("MYODYN_SEED", "11")
        .output()
        .unwrap();
    assert!(out.status.success());
    ok(&["simulate", "--out", s(&b), "--seed", "11"]);
    assert_eq!(fs::read(a.join("trial.csv")).unwrap(), fs::read(b.join("trial.csv")).unwrap());
}

#[test]
fn invalid_config_fails_with_a_message() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.toml");
    let text = ToolConfig::default().to_toml().unwrap().replace("mass = 0.45", "mass = 0.45\nmas = 1.0");
    fs::write(&path, text).unwrap();
    let out = myodyn(&["simulate", "--config", s(&path), "--out", s(&tmp.path().join("x"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mas"));
}

#[test]
fn dump_config_round_trips() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("dumped.toml");
    fs::write(&path, ok(&["--dump-config"])).unwrap();
    assert_eq!(ToolConfig::load(&path).unwrap(), ToolConfig::default());
    let small = small_config(tmp.path(), 2);
    let echoed = ok(&["train", "--config", s(&small), "--data", "unused", "--out", "unused", "--dump-config"]);
    fs::write(&path, echoed).unwrap();
    assert_eq!(ToolConfig::load(&path).unwrap(), ToolConfig::load(&small).unwrap());
}

/// The first `n` data rows of each trial file in `from`, copied to `to`.
fn truncate_trial(from: &Path, to: &Path, n: usize) {
    fs::create_dir_all(to).unwrap();
    for f in ["trial.csv", "forces.csv"] {
        let text = fs::read_to_string(from.join(f)).unwrap();
        let kept: Vec<&str> = text.lines().take(n + 1).collect();
        fs::write(to.join(f), kept.join("\n") + "\n").unwrap();
    }
}

#[test]
fn toy_training_and_evaluation() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), 5);
    let full = tmp.path().join("full");
    let toy = tmp.path().join("toy");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&full)]);
    truncate_trial(&full, &toy, 3);

    let run = tmp.path().join("run");
    ok(&["train", "--config", s(&cfg), "--data", s(&toy), "--out", s(&run)]);
    let report = TrainReport::load(&run.join("report.toml")).unwrap();
    assert_eq!(report.epochs.len(), 5);
    assert_eq!(report.mode, TrainMode::Pinn);
    assert!(run.join("checkpoint.toml").exists());
    assert_eq!(header(&run.join("params.csv")), "parameter,initial,estimate,variation_pct");

    let base = tmp.path().join("base");
    ok(&["train", "--config", s(&cfg), "--data", s(&toy), "--out", s(&base), "--w1", "0", "--w2", "0"]);
    assert_eq!(TrainReport::load(&base.join("report.toml")).unwrap().mode, TrainMode::Baseline);

    let thresholds = tmp.path().join("th.toml");
    fs::write(&thresholds, "angle_r2 = 0.96\nforce_r2 = 0.93\n").unwrap();
    let ev = tmp.path().join("ev");
    let out = myodyn(&["evaluate", "--checkpoint", s(&run), "--data", s(&full), "--out", s(&ev), "--thresholds", s(&thresholds)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold violated"));

    let printed = ok(&["evaluate", "--checkpoint", s(&run.join("checkpoint.toml")), "--data", s(&full), "--out", s(&ev)]);
    let table = ComparisonTable::load_csv(&ev.join("comparison.csv")).unwrap();
    assert_eq!(table.render(), printed);
    assert_eq!(table.rows[0].method, "PINN");
    let overlay = fs::read_to_string(ev.join("overlay_PINN.csv")).unwrap();
    assert_eq!(overlay.lines().count(), 2001 + 1);

    let missing = myodyn(&["evaluate", "--checkpoint", s(&tmp.path().join("nope")), "--data", s(&full), "--out", s(&ev)]);
    assert!(!missing.status.success());
}

#[test]
fn gradcheck_passes_by_default_and_fails_at_machine_precision() {
    let out = ok(&["gradcheck"]);
    for term in ["L_total", "L_q", "L_r1", "L_r2", "trainer"] {
        assert!(out.lines().any(|l| l.starts_with(term) && l.contains("max rel error")), "{out}");
    }
    let tight = myodyn(&["gradcheck", "--tol", "1e-12"]);
    assert_eq!(tight.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&tight.stdout).contains("FAIL"));
}

#[test]
fn sweeps_emit_one_row_per_value() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), 1);
    for (axis, values) in [("learning_rate", "0.01,0.001,0.0001"), ("batch_size", "1,16,32")] {
        let out = tmp.path().join(axis);
        ok(&["sweep", "--config", s(&cfg), "--axis", axis, "--values", values, "--out", s(&out), "--jobs", "2"]);
        let table = ComparisonTable::load_csv(&out.join("comparison.csv")).unwrap();
        assert_eq!(table.rows.len(), 3, "{axis}");
        let r2 = fs::read_to_string(out.join("sweep_r2.csv")).unwrap();
        assert_eq!(r2.lines().count(), 4);
        assert_eq!(header(&out.join("failures.csv")), "label,error");
        let losses = fs::read_to_string(out.join("loss_traces.csv")).unwrap();
        assert_eq!(losses.lines().count(), 1 + 3, "one epoch per job");
    }
    let bad = myodyn(&["sweep", "--config", s(&cfg), "--axis", "momentum", "--values", "0.9", "--out", s(tmp.path())]);
    assert!(!bad.status.success());
}

#[test]
fn default_run_fits_the_training_data_within_budget() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    ok(&["simulate", "--out", s(&data)]);
    ok(&["train", "--data", s(&data), "--out", s(&run)]);
    let report = TrainReport::load(&run.join("report.toml")).unwrap();
    assert_eq!(report.epochs.len(), 1000);
    assert!(report.wall_clock_s < 1200.0, "{} s", report.wall_clock_s);
    let thresholds = tmp.path().join("th.toml");
    fs::write(&thresholds, "angle_r2 = 0.96\n").unwrap();
    ok(&["evaluate", "--checkpoint", s(&run), "--data", s(&data), "--out", s(&tmp.path().join("ev")), "--thresholds", s(&thresholds)]);
}

#[test]
fn relu_dominates_sigmoid_on_every_channel() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sweep");
    ok(&["sweep", "--axis", "activation", "--values", "Sigmoid,Tanh,ReLU", "--out", s(&out), "--jobs", "1"]);
    let table = ComparisonTable::load_csv(&out.join("comparison.csv")).unwrap();
    assert_eq!(table.rows.len(), 3);
    let relu = table.row("activation=ReLU").unwrap();
    let sigmoid = table.row("activation=Sigmoid").unwrap();
    for (r, g) in relu.metrics.iter().zip(&sigmoid.metrics) {
        assert!(r.r2.unwrap() > g.r2.unwrap(), "{}: ReLU {:?} vs Sigmoid {:?}", r.channel, r.r2, g.r2);
    }
}
