use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use myodyn::config::ToolConfig;
use myodyn::data::{self, TrialMatrix};
use myodyn::eval::{self, ComparisonTable, Overlay, Predictions, Thresholds, Trace};
use myodyn::gradcheck;
use myodyn::neural::Network;
use myodyn::sweep::{self, SweepSpec};
use myodyn::train::{self, TrainMode, TrainReport};

const CHECKPOINT: &str = "checkpoint.toml";
const REPORT: &str = "report.toml";
const PARAMS: &str = "params.csv";
const SWEEP_R2: &str = "sweep_r2.csv";
const FAILURES: &str = "failures.csv";

/// Wrist musculoskeletal simulation and physics-informed surrogate training.
#[derive(Parser)]
#[command(name = "myodyn", version)]
struct Cli {
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    dump_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Clone)]
struct ConfigArg {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<ToolConfig> {
        match &self.config {
            Some(p) => ToolConfig::load(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(ToolConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a trial from the configured subject.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// Output directory for trial.csv, forces.csv and manifest.toml.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "MYODYN_SEED")]
        seed: Option<u64>,
        /// Cycle-frequency factor relative to the configured profile.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
    },
    /// Train the surrogate and identify muscle parameters.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        /// Trial directories written by `simulate`; repeat for several trials.
        #[arg(long, required = true)]
        data: Vec<PathBuf>,
        /// Output directory for checkpoint, report and traces.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "MYODYN_SEED")]
        seed: Option<u64>,
        /// Weight of the equation-of-motion residual; overrides training.w1.
        #[arg(long)]
        w1: Option<f64>,
        /// Weight of the force-consistency residual; overrides training.w2.
        #[arg(long)]
        w2: Option<f64>,
        /// Overrides training.epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a checkpoint on a trial.
    Evaluate {
        /// Checkpoint file, or a `train` output directory.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Trial directory to score.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for the comparison table and overlays.
        #[arg(long)]
        out: PathBuf,
        /// Pass/fail floors; exit code 1 when any is violated.
        #[arg(long)]
        thresholds: Option<PathBuf>,
        /// Row label; defaults to PINN or FNN from the training report.
        #[arg(long)]
        method: Option<String>,
        /// Extra prediction files to score, as `name=path`.
        #[arg(long = "external", value_name = "NAME=PATH")]
        external: Vec<String>,
    },
    /// Check the full training-loss gradient on a three-sample toy trial.
    Gradcheck {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, env = "MYODYN_SEED", default_value_t = 0)]
        seed: u64,
        /// Relative tolerance on every checked coordinate.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Train once per value of one hyperparameter and tabulate the scores.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        /// learning_rate, activation or batch_size.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        /// Output directory for the comparison table and sweep summaries.
        #[arg(long)]
        out: PathBuf,
        /// Training trial directory; synthesized from the config when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Test trial directory; synthesized from the config when omitted.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, env = "MYODYN_SEED")]
        seed: Option<u64>,
        /// Concurrent jobs; defaults to one per value.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let Some(command) = cli.command else {
        if cli.dump_config {
            print!("{}", ToolConfig::default().to_toml()?);
            return Ok(ExitCode::SUCCESS);
        }
        bail!("no command given; see --help");
    };
    if cli.dump_config {
        let cfg = match &command {
            Command::Simulate { config, .. }
            | Command::Train { config, .. }
            | Command::Gradcheck { config, .. }
            | Command::Sweep { config, .. } => config.load()?,
            Command::Evaluate { .. } => bail!("evaluate takes no configuration"),
        };
        print!("{}", cfg.to_toml()?);
        return Ok(ExitCode::SUCCESS);
    }
    match command {
        Command::Simulate { config, out, seed, speed } => simulate(&config.load()?, &out, seed, speed),
        Command::Train { config, data, out, seed, w1, w2, epochs } => {
            let mut cfg = config.load()?;
            let t = &mut cfg.training;
            t.seed = seed.unwrap_or(t.seed);
            t.w1 = w1.unwrap_or(t.w1);
            t.w2 = w2.unwrap_or(t.w2);
            t.epochs = epochs.unwrap_or(t.epochs);
            cfg.validate()?;
            train_cmd(&cfg, &data, &out)
        }
        Command::Evaluate { checkpoint, data, out, thresholds, method, external } => {
            evaluate(&checkpoint, &data, &out, thresholds.as_deref(), method, &external)
        }
        Command::Gradcheck { config, seed, tol } => {
            let r = gradcheck::toy_check(&config.load()?, seed, tol)?;
            print!("{}", r.render());
            Ok(if r.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Sweep { config, axis, values, out, data, test, seed, jobs } => {
            let mut cfg = config.load()?;
            if let Some(s) = seed {
                cfg.training.seed = s;
                cfg.data.seed = s;
            }
            let spec = SweepSpec::parse(&axis, &values)?;
            sweep_cmd(&cfg, &spec, &out, data.as_deref(), test.as_deref(), jobs)
        }
    }
}

fn create(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn simulate(cfg: &ToolConfig, out: &Path, seed: Option<u64>, speed: f64) -> Result<ExitCode> {
    let (trial, manifest) = cfg.synthesize(seed.unwrap_or(cfg.data.seed), speed)?;
    create(out)?;
    data::save_trial(&trial, &out.join(&cfg.data.trial_file))?;
    data::save_forces(&trial, &out.join(&cfg.data.forces_file))?;
    manifest.save(&out.join(&cfg.data.manifest_file))?;
    println!("{} samples, {:.2} s, written to {}", trial.len(), trial.duration(), out.display());
    Ok(ExitCode::SUCCESS)
}

/// A trial directory's trial file, with its force sidecar when present.
fn load_dir(dir: &Path, trial_file: &str, forces_file: &str) -> Result<TrialMatrix> {
    let path = if dir.is_file() { dir.to_path_buf() } else { dir.join(trial_file) };
    let mut trial = data::load_trial(&path)?;
    let forces = path.with_file_name(forces_file);
    if forces.exists() {
        data::load_forces(&mut trial, &forces)?;
    }
    Ok(trial)
}

fn train_cmd(cfg: &ToolConfig, dirs: &[PathBuf], out: &Path) -> Result<ExitCode> {
    let trials = dirs
        .iter()
        .map(|d| load_dir(d, &cfg.data.trial_file, &cfg.data.forces_file))
        .collect::<Result<Vec<_>>>()?;
    let names = cfg.names();
    for (t, d) in trials.iter().zip(dirs) {
        if t.names != names {
            bail!("{}: muscles {:?} differ from the configuration's {:?}", d.display(), t.names, names);
        }
    }
    let outcome = train::train(&trials, &cfg.model()?, cfg.trainable()?, &cfg.network_config(), &cfg.training)?;
    create(out)?;
    outcome.network.save(&out.join(CHECKPOINT))?;
    let report = &outcome.report;
    report.save(&out.join(REPORT))?;
    write_params(report, &out.join(PARAMS))?;
    let method = method_label(report.mode);
    let trace = Trace {
        method,
        labels: &report.param_labels,
        epochs: &report.epochs,
    };
    eval::emit_report(&ComparisonTable::new(), &[trace], &[], out)?;
    let mode = match report.mode {
        TrainMode::Pinn => "pinn",
        TrainMode::Baseline => "baseline",
    };
    println!(
        "mode {mode}, {} epochs, best epoch {} (val L_q {:.4e}), {:.1} s",
        report.epochs.len(),
        report.best_epoch,
        report.best_val_l_q,
        report.wall_clock_s
    );
    for v in &report.identified {
        let pct = v.percent.map_or("N/A".to_string(), |p| format!("{p:.2}%"));
        println!("{:<10} {:>12.6} ({pct} of initial)", v.name, v.estimate);
    }
    Ok(ExitCode::SUCCESS)
}

fn write_params(report: &TrainReport, path: &Path) -> Result<()> {
    let mut text = String::from("parameter,initial,estimate,variation_pct\n");
    for v in &report.identified {
        let pct = v.percent.map_or("NA".to_string(), |p| p.to_string());
        text += &format!("{},{},{},{pct}\n", v.name, v.initial, v.estimate);
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn method_label(mode: TrainMode) -> &'static str {
    match mode {
        TrainMode::Pinn => "PINN",
        TrainMode::Baseline => "FNN",
    }
}

fn evaluate(
    checkpoint: &Path,
    data_dir: &Path,
    out: &Path,
    thresholds: Option<&Path>,
    method: Option<String>,
    external: &[String],
) -> Result<ExitCode> {
    let (ckpt, report) = if checkpoint.is_dir() {
        (checkpoint.join(CHECKPOINT), checkpoint.join(REPORT))
    } else {
        (checkpoint.to_path_buf(), checkpoint.with_file_name(REPORT))
    };
    let net = Network::load(&ckpt)?;
    let report = if report.exists() { Some(TrainReport::load(&report)?) } else { None };
    let defaults = ToolConfig::default().data;
    let trial = load_dir(data_dir, &defaults.trial_file, &defaults.forces_file)?;
    if trial.forces.is_none() {
        eprintln!("warning: no force sidecar found; scoring the angle only");
    }
    let method = method
        .or_else(|| report.as_ref().map(|r| method_label(r.mode).to_string()))
        .unwrap_or_else(|| "model".into());

    let mut table = ComparisonTable::new();
    let pred = eval::predict(&net, &trial);
    table.push(eval::score(&method, &trial, &pred)?)?;
    let mut others = Vec::new();
    for spec in external {
        let (name, path) = spec
            .split_once('=')
            .with_context(|| format!("`{spec}`: expected NAME=PATH"))?;
        let p = Predictions::load(&trial.names, Path::new(path))?;
        table.push(eval::score(name, &trial, &p)?)?;
        others.push((name.to_string(), p));
    }

    let mut overlays = vec![Overlay {
        method: &method,
        trial: &trial,
        predictions: &pred,
    }];
    overlays.extend(others.iter().map(|(name, p)| Overlay {
        method: name,
        trial: &trial,
        predictions: p,
    }));
    let traces: Vec<Trace> = report
        .iter()
        .map(|r| Trace {
            method: &method,
            labels: &r.param_labels,
            epochs: &r.epochs,
        })
        .collect();
    eval::emit_report(&table, &traces, &overlays, out)?;
    print!("{}", table.render());

    if let Some(path) = thresholds {
        let violations = Thresholds::load(path)?.violations(&table);
        if !violations.is_empty() {
            for v in &violations {
                eprintln!("threshold violated: {v}");
            }
            return Ok(ExitCode::FAILURE);
        }
        println!("all thresholds met");
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep_cmd(
    cfg: &ToolConfig,
    spec: &SweepSpec,
    out: &Path,
    data_dir: Option<&Path>,
    test_dir: Option<&Path>,
    jobs: Option<usize>,
) -> Result<ExitCode> {
    cfg.validate()?;
    let (fa, fo) = (&cfg.data.trial_file, &cfg.data.forces_file);
    let trial = match data_dir {
        Some(d) => load_dir(d, fa, fo)?,
        None => cfg.synthesize(cfg.data.seed, 1.0)?.0,
    };
    let test = match test_dir {
        Some(d) => load_dir(d, fa, fo)?,
        None => cfg.synthesize(cfg.data.seed + 1, 1.0)?.0,
    };
    let configs = spec.jobs(cfg)?;
    let threads = jobs.unwrap_or(configs.len()).clamp(1, configs.len().max(1));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let runs: Vec<_> = pool.install(|| {
        configs
            .par_iter()
            .map(|(label, c)| (label.clone(), sweep::run_job(label, c, std::slice::from_ref(&trial), &test)))
            .collect()
    });
    let mut outcomes = Vec::new();
    let mut results = Vec::new();
    for (label, r) in runs {
        match r {
            Ok((outcome, row)) => {
                outcomes.push((label.clone(), outcome));
                results.push((label, Ok(row)));
            }
            Err(e) => results.push((label, Err(e))),
        }
    }
    let (table, failures) = sweep::aggregate(results)?;
    let traces: Vec<Trace> = outcomes
        .iter()
        .map(|(label, o)| Trace {
            method: label,
            labels: &o.report.param_labels,
            epochs: &o.report.epochs,
        })
        .collect();
    create(out)?;
    eval::emit_report(&table, &traces, &[], out)?;
    write_r2_table(&table, &out.join(SWEEP_R2))?;
    let mut text = String::from("label,error\n");
    for (label, err) in &failures {
        text += &format!("{label},\"{}\"\n", err.replace('"', "'"));
    }
    let path = out.join(FAILURES);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    print!("{}", table.render());
    for (label, err) in &failures {
        eprintln!("job {label} failed: {err}");
    }
    Ok(ExitCode::SUCCESS)
}

/// One row per sweep value, one R² column per channel; `NA` when undefined.
fn write_r2_table(table: &ComparisonTable, path: &Path) -> Result<()> {
    let mut text = format!("method,{}\n", table.channels.join(","));
    for row in &table.rows {
        let cells: Vec<String> = row
            .metrics
            .iter()
            .map(|m| m.r2.map_or("NA".to_string(), |v| v.to_string()))
            .collect();
        text += &format!("{},{}\n", row.method, cells.join(","));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
