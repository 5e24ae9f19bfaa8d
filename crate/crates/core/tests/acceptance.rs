//! Acceptance run: one pass/fail line per criterion, then a non-zero exit if
//! any failed. Criteria run one after another so the wall-clock budgets are
//! measured without contention.

use std::cell::OnceCell;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use myodyn::autodiff::Dual2;
use myodyn::config::ToolConfig;
use myodyn::data::TrialMatrix;
use myodyn::eval::{self, ComparisonRow};
use myodyn::gradcheck;
use myodyn::joint;
use myodyn::muscle::{self, MuscleConstants, MuscleParams};
use myodyn::neural::{Activation, Masks, Network, NetworkConfig};
use myodyn::train::{self, dynamics_residual_at, identify_report, Kinematics, Normalizers, TrainOutcome};

const RESIDUAL_TOL: f64 = 1e-6;
const RESIDUAL_BUDGET_S: f64 = 5.0;
const GRAD_TOL: f64 = 1e-4;
const GRAD_BUDGET_S: f64 = 30.0;
const RECOVERY_SEEDS: [u64; 3] = [0, 1, 2];
const F0M_TOL: f64 = 0.10;
const L0M_TOL: f64 = 0.02;
const RECOVERY_BUDGET_S: f64 = 600.0;
const ANGLE_R2_MIN: f64 = 0.96;
const FORCE_R2_MIN: f64 = 0.93;
const ACCURACY_BUDGET_S: f64 = 1200.0;
const SLOW_SPEED: f64 = 0.8;
const SLOW_ANGLE_R2_MIN: f64 = 0.90;
const ACTIVATION_GAP_MIN: f64 = 0.3;
const BASELINE_RMSE_RATIO_MAX: f64 = 1.25;
const RK4_RATIO: (f64, f64) = (12.0, 20.0);
const DUAL_FD_TOL: f64 = 1e-4;
const INFRA_BUDGET_S: f64 = 10.0;
const VARIATION_TOL_PCT: f64 = 0.1;

const TRAIN_SEED: u64 = 0;
const TEST_DATA_SEED: u64 = 2;
const SLOW_DATA_SEED: u64 = 3;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Trained models shared between criteria.
struct Runs {
    cfg: ToolConfig,
    pinn: TrainOutcome,
    test: TrialMatrix,
    slow: TrialMatrix,
}

impl Runs {
    fn new() -> Runs {
        let mut cfg = ToolConfig::default();
        cfg.training.seed = TRAIN_SEED;
        let (trial, _) = cfg.synthesize(cfg.data.seed, 1.0).unwrap();
        let (test, _) = cfg.synthesize(TEST_DATA_SEED, 1.0).unwrap();
        let (slow, _) = cfg.synthesize(SLOW_DATA_SEED, SLOW_SPEED).unwrap();
        let pinn = fit(&cfg, &trial);
        Runs { cfg, pinn, test, slow }
    }

    fn train_trial(&self) -> TrialMatrix {
        self.cfg.synthesize(self.cfg.data.seed, 1.0).unwrap().0
    }
}

fn fit(cfg: &ToolConfig, trial: &TrialMatrix) -> TrainOutcome {
    train::train(
        std::slice::from_ref(trial),
        &cfg.model().unwrap(),
        cfg.trainable().unwrap(),
        &cfg.network_config(),
        &cfg.training,
    )
    .unwrap()
}

fn angle_r2(row: &ComparisonRow) -> f64 {
    row.angle().and_then(|m| m.r2).unwrap_or(f64::NEG_INFINITY)
}

fn oracle_residual() -> Verdict {
    let started = Instant::now();
    let cfg = ToolConfig::default();
    let subject = cfg.subject().unwrap();
    let profile = &cfg.data.profile;
    let traj = joint::simulate(
        |t| profile.excitation(t, 0.3),
        &subject.model,
        &subject.params,
        &subject.shape,
        0.0,
        0.0,
        1.0 / profile.sample_rate,
        profile.warmup + profile.duration,
    )
    .unwrap();
    let norms = Normalizers::new(&subject.model, &cfg.trainable().unwrap());
    let mut worst = 0.0f64;
    for i in 0..traj.len() {
        let k = Kinematics {
            q: traj.states[i].q,
            q_dot: traj.states[i].qdot,
            q_ddot: traj.accelerations[i],
        };
        let (rho, _) = dynamics_residual_at(k, &traj.excitations[i], &subject.params, &subject.shape, &subject.model, &norms).unwrap();
        worst = worst.max(rho.abs());
    }
    let secs = started.elapsed().as_secs_f64();
    verdict(
        worst < RESIDUAL_TOL && secs < RESIDUAL_BUDGET_S,
        format!("max |rho| {worst:.2e} over {} points (< {RESIDUAL_TOL:e}), {secs:.2} s (< {RESIDUAL_BUDGET_S} s)", traj.len()),
    )
}

fn gradient_check() -> Verdict {
    let started = Instant::now();
    let r = gradcheck::toy_check(&ToolConfig::default(), 0, GRAD_TOL).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let worst = r.terms.iter().map(|t| t.max_rel_error).fold(r.step_rel_error, f64::max);
    verdict(
        r.passed() && secs < GRAD_BUDGET_S,
        format!(
            "{} coordinates, worst rel error {worst:.2e} (< {GRAD_TOL:e}), {secs:.1} s (< {GRAD_BUDGET_S} s)",
            r.coords.len()
        ),
    )
}

fn parameter_recovery() -> Verdict {
    let base = ToolConfig::default().select(&["FCR", "ECU"]).unwrap();
    let truth = base.subject().unwrap();
    let (trial, _) = base.synthesize(base.data.seed, 1.0).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for seed in RECOVERY_SEEDS {
        let mut cfg = base.clone();
        cfg.training.seed = seed;
        let out = fit(&cfg, &trial);
        let est = out.params.muscle_params();
        let mut worst_f = 0.0f64;
        let mut worst_l = 0.0f64;
        for (e, t) in est.iter().zip(&truth.params) {
            worst_f = worst_f.max(((e.f0m - t.f0m) / t.f0m).abs());
            worst_l = worst_l.max(((e.l0m - t.l0m) / t.l0m).abs());
        }
        let secs = out.report.wall_clock_s;
        pass &= worst_f <= F0M_TOL && worst_l <= L0M_TOL && secs < RECOVERY_BUDGET_S;
        parts.push(format!("seed {seed}: F0m {:.2}% l0m {:.2}% {secs:.0} s", 100.0 * worst_f, 100.0 * worst_l));
    }
    verdict(
        pass,
        format!(
            "{} (limits {}% / {}%, {RECOVERY_BUDGET_S} s)",
            parts.join("; "),
            100.0 * F0M_TOL,
            100.0 * L0M_TOL
        ),
    )
}

fn in_distribution(runs: &Runs) -> Verdict {
    let row = eval::evaluate("PINN", &runs.pinn.network, &runs.test).unwrap();
    let angle = angle_r2(&row);
    let mut pass = angle >= ANGLE_R2_MIN;
    let mut forces = Vec::new();
    for m in row.metrics.iter().filter(|m| m.channel != eval::ANGLE) {
        let r2 = m.r2.unwrap_or(f64::NEG_INFINITY);
        pass &= r2 >= FORCE_R2_MIN;
        forces.push(format!("{} {r2:.3}", m.channel));
    }
    let secs = runs.pinn.report.wall_clock_s;
    pass &= secs < ACCURACY_BUDGET_S;
    verdict(
        pass,
        format!(
            "angle R2 {angle:.4} (>= {ANGLE_R2_MIN}); force R2 {} (>= {FORCE_R2_MIN}); {secs:.0} s (< {ACCURACY_BUDGET_S} s)",
            forces.join(", ")
        ),
    )
}

fn intrasession(runs: &Runs) -> Verdict {
    let row = eval::run_intrasession("PINN", &runs.pinn.network, &runs.slow).unwrap();
    let r2 = angle_r2(&row);
    verdict(r2 >= SLOW_ANGLE_R2_MIN, format!("angle R2 at {SLOW_SPEED}x speed {r2:.4} (>= {SLOW_ANGLE_R2_MIN})"))
}

fn activation_ablation(runs: &Runs) -> Verdict {
    let mut cfg = runs.cfg.clone();
    cfg.network.activation = Activation::Sigmoid;
    let sigmoid = fit(&cfg, &runs.train_trial());
    let relu = angle_r2(&eval::evaluate("ReLU", &runs.pinn.network, &runs.test).unwrap());
    let sig = angle_r2(&eval::evaluate("Sigmoid", &sigmoid.network, &runs.test).unwrap());
    verdict(
        relu - sig >= ACTIVATION_GAP_MIN,
        format!("angle R2 ReLU {relu:.4} vs Sigmoid {sig:.4}, gap {:.4} (>= {ACTIVATION_GAP_MIN})", relu - sig),
    )
}

fn physics_non_degradation(runs: &Runs) -> Verdict {
    let mut cfg = runs.cfg.clone();
    cfg.training.w1 = 0.0;
    cfg.training.w2 = 0.0;
    let baseline = fit(&cfg, &runs.train_trial());
    let rmse = |net: &Network| eval::evaluate("m", net, &runs.test).unwrap().angle().unwrap().rmse;
    let (p, b) = (rmse(&runs.pinn.network), rmse(&baseline.network));
    verdict(
        p <= BASELINE_RMSE_RATIO_MAX * b,
        format!("angle RMSE PINN {p:.4} vs FNN {b:.4}, ratio {:.3} (<= {BASELINE_RMSE_RATIO_MAX})", p / b),
    )
}

/// Self-convergence ratio on a smooth run: tonic co-contraction with a slow
/// flexor ramp, started moving so that `q` and `q̇` stay positive. The passive
/// curve jumps at l̄ = 1 (q = 0) and force-velocity has a slope break at
/// v̄ = 0, so a run crossing either is not smooth. Returns the ratio and
/// whether the run stayed clear of both.
fn rk4_ratio() -> (f64, bool) {
    let cfg = ToolConfig::default();
    let s = cfg.subject().unwrap();
    let n = s.params.len();
    let excitation = |t: f64| {
        let ramp = 0.05 * (1.0 - (-2.0 * t).exp());
        (0..n).map(|i| if i < 2 { 0.05 + ramp } else { 0.05 }).collect::<Vec<f64>>()
    };
    let run = |dt: f64| joint::simulate(excitation, &s.model, &s.params, &s.shape, 0.1, 0.5, dt, 1.0).unwrap();
    let (a, b, c) = (run(1e-3), run(5e-4), run(2.5e-4));
    let smooth = c.states.iter().all(|st| st.q > 0.0 && st.qdot > 0.0);
    let end = |t: &joint::Trajectory| t.states.last().unwrap().q;
    ((end(&a) - end(&b)).abs() / (end(&b) - end(&c)).abs(), smooth)
}

fn dual_vs_fd() -> f64 {
    let cfg = NetworkConfig {
        hidden_widths: vec![16, 16],
        dropout_rate: 0.0,
        activation: Activation::Tanh,
        n_muscles: 2,
        smooth_angle_head: true,
    };
    let net = Network::init(&cfg, 2.0, vec![100.0, 100.0], 11).unwrap();
    let masks = Masks::identity();
    let e = |t: f64| [0.3 + 0.1 * (3.0 * t).sin(), 0.6 - 0.2 * t * t];
    let q = |t: f64| net.forward_pass(t, &e(t), None, &masks, false).output.q;
    let mut worst = 0.0f64;
    for t0 in [0.3, 0.8, 1.4] {
        let h = 1e-3;
        let d1 = (-q(t0 + 2.0 * h) + 8.0 * q(t0 + h) - 8.0 * q(t0 - h) + q(t0 - 2.0 * h)) / (12.0 * h);
        let d2 = (-q(t0 + 2.0 * h) + 16.0 * q(t0 + h) - 30.0 * q(t0) + 16.0 * q(t0 - h) - q(t0 - 2.0 * h)) / (12.0 * h * h);
        let de = [0.3 * (3.0 * t0).cos(), -0.4 * t0];
        let dde = [-0.9 * (3.0 * t0).sin(), -0.4];
        let out = net.forward_pass(t0, &e(t0), Some((&de, &dde)), &masks, true).output;
        worst = worst
            .max((out.q_dot.unwrap() - d1).abs() / d1.abs().max(1e-3))
            .max((out.q_ddot.unwrap() - d2).abs() / d2.abs().max(1e-3));
    }
    // Dual2 through the muscle model: d/dt of the active force-length factor
    // along a moving fibre length.
    let p = MuscleParams::with_default_velocity(0.062, 407.0, 0.24, 0.05).unwrap();
    let c = MuscleConstants::default();
    let lm = |t: f64| 0.06 + 0.004 * (2.0 * t).sin();
    let fa = |t: f64| muscle::force_length_active(lm(t), 0.5, &p, &c).unwrap();
    let t0 = 0.7;
    let h = 1e-3;
    let d1 = (-fa(t0 + 2.0 * h) + 8.0 * fa(t0 + h) - 8.0 * fa(t0 - h) + fa(t0 - 2.0 * h)) / (12.0 * h);
    let d2 = (-fa(t0 + 2.0 * h) + 16.0 * fa(t0 + h) - 30.0 * fa(t0) + 16.0 * fa(t0 - h) - fa(t0 - 2.0 * h)) / (12.0 * h * h);
    let x = Dual2::new(lm(t0), 0.008 * (2.0 * t0).cos(), -0.016 * (2.0 * t0).sin());
    let pd = p.lift(x);
    let y = muscle::force_length_active(x, Dual2::constant(0.5), &pd, &c).unwrap();
    worst.max((y.d1 - d1).abs() / d1.abs().max(1e-3)).max((y.d2 - d2).abs() / d2.abs().max(1e-3))
}

fn curve_identities() -> bool {
    let p = MuscleParams::with_default_velocity(0.062, 407.0, 0.24, 0.0).unwrap();
    let c = MuscleConstants::default();
    let mut ok = muscle::force_velocity(0.0).unwrap() == 1.0;
    ok &= muscle::force_length_active(p.l0m, 1.0, &p, &c).unwrap() == 1.0;
    for a in [-3.0, -1.5, 0.0, 0.01] {
        ok &= muscle::activation(0.0, a).unwrap() == 0.0;
        ok &= muscle::activation(1.0, a).unwrap() == 1.0;
    }
    for lbar in [0.5, 0.9, 1.0] {
        ok &= muscle::force_passive(lbar * p.l0m, &p).unwrap() == 0.0;
    }
    ok
}

fn numerical_infrastructure() -> Verdict {
    let started = Instant::now();
    let (ratio, smooth) = rk4_ratio();
    let dual = dual_vs_fd();
    let curves = curve_identities();
    let secs = started.elapsed().as_secs_f64();
    verdict(
        smooth && (RK4_RATIO.0..=RK4_RATIO.1).contains(&ratio) && dual < DUAL_FD_TOL && curves && secs < INFRA_BUDGET_S,
        format!(
            "RK4 ratio {ratio:.2} (in [{}, {}], smooth run {smooth}); Dual2 vs FD {dual:.2e} (< {DUAL_FD_TOL:e}); curve identities {}; {secs:.2} s",
            RK4_RATIO.0,
            RK4_RATIO.1,
            if curves { "exact" } else { "violated" }
        ),
    )
}

fn variation_table() -> Verdict {
    // Printed F0m estimates and variations for FCR, ECRB and ECRL, with the
    // generic-model initials. The FCU row is internally inconsistent and left out.
    let rows = [("FCR", 475.2, 407.0, 116.71), ("ECRB", 166.7, 252.0, 66.05), ("ECRL", 475.2, 337.0, 140.91)];
    let names: Vec<String> = rows.iter().map(|r| r.0.to_string()).collect();
    let est: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let init: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let table = identify_report(&names, &est, &init).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (v, r) in table.iter().zip(&rows) {
        let got = v.percent.unwrap();
        let diff = (got - r.3).abs();
        pass &= diff <= VARIATION_TOL_PCT;
        parts.push(format!("{} {got:.3}% vs {:.2}% (diff {diff:.3})", r.0, r.3));
    }
    verdict(pass, format!("{} (within {VARIATION_TOL_PCT} points)", parts.join("; ")))
}

fn main() -> ExitCode {
    let runs = OnceCell::new();
    let shared = |f: fn(&Runs) -> Verdict| f(runs.get_or_init(Runs::new));
    type Criterion<'a> = (u32, &'a str, Box<dyn FnMut() -> Verdict + 'a>);
    let mut failed = 0;
    let mut outcomes = Vec::new();
    {
        let list: Vec<Criterion> = vec![
            (1, "oracle residual equivalence", Box::new(oracle_residual)),
            (2, "gradient correctness", Box::new(gradient_check)),
            (3, "parameter recovery", Box::new(parameter_recovery)),
            (4, "in-distribution accuracy", Box::new(|| shared(in_distribution))),
            (5, "intrasession robustness", Box::new(|| shared(intrasession))),
            (6, "activation ablation", Box::new(|| shared(activation_ablation))),
            (7, "physics-loss non-degradation", Box::new(|| shared(physics_non_degradation))),
            (8, "numerical infrastructure", Box::new(numerical_infrastructure)),
            (9, "variation-table arithmetic", Box::new(variation_table)),
        ];
        for (id, name, mut run) in list {
            let started = Instant::now();
            let v = panic::catch_unwind(AssertUnwindSafe(|| run())).unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                verdict(false, format!("panicked: {msg}"))
            });
            let tag = if v.pass { "PASS" } else { "FAIL" };
            if !v.pass {
                failed += 1;
            }
            let line = format!("criterion {id} [{tag}] {name}: {} [{:.1} s]", v.detail, started.elapsed().as_secs_f64());
            println!("{line}");
            outcomes.push(line);
        }
    }
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
