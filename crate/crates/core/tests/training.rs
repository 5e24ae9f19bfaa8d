use myodyn::config::ToolConfig;
use myodyn::data::TrialMatrix;
use myodyn::eval;
use myodyn::sweep::{self, SweepSpec};
use myodyn::train::{self, Bounded, TrainMode};

fn small_config() -> ToolConfig {
    let mut cfg = ToolConfig::default();
    cfg.network.hidden_widths = vec![16, 16];
    cfg.network.dropout_rate = 0.2;
    cfg.data.profile.duration = 2.0;
    cfg.training.epochs = 3;
    cfg
}

fn trial(cfg: &ToolConfig) -> TrialMatrix {
    cfg.synthesize(cfg.data.seed, 1.0).unwrap().0
}

#[test]
fn zero_weights_reproduce_the_baseline_trainer_bitwise() {
    let mut cfg = small_config();
    cfg.training.w1 = 0.0;
    cfg.training.w2 = 0.0;
    let t = trial(&cfg);
    let params = cfg.trainable().unwrap();
    let scale: Vec<f64> = params.f0m.iter().map(Bounded::midpoint).collect();
    let out = train::train(std::slice::from_ref(&t), &cfg.model().unwrap(), params.clone(), &cfg.network_config(), &cfg.training).unwrap();
    let (net, records) = train::train_baseline(std::slice::from_ref(&t), &cfg.network_config(), scale, &cfg.training).unwrap();
    assert_eq!(out.report.mode, TrainMode::Baseline);
    assert_eq!(out.network.params, net.params);
    assert_eq!(out.params.values(), params.values());
    for (a, b) in out.report.epochs.iter().zip(&records) {
        assert_eq!(a.l_q.to_bits(), b.l_q.to_bits());
        assert_eq!(a.val_l_q.to_bits(), b.val_l_q.to_bits());
    }
}

#[test]
fn first_fifty_epochs_halve_the_loss_with_finite_bounded_traces() {
    let mut cfg = ToolConfig::default();
    cfg.training.epochs = 50;
    let t = trial(&cfg);
    let out = train::train(std::slice::from_ref(&t), &cfg.model().unwrap(), cfg.trainable().unwrap(), &cfg.network_config(), &cfg.training).unwrap();
    let e = &out.report.epochs;
    assert_eq!(e.len(), 50);
    assert!(e[49].l_total < 0.5 * e[0].l_total, "{} vs {}", e[49].l_total, e[0].l_total);
    let bounds = cfg.trainable().unwrap();
    let all: Vec<&Bounded> = bounds.f0m.iter().chain(&bounds.l0m).chain(&bounds.shape).collect();
    for r in e {
        for v in [r.l_q, r.l_r1, r.l_r2, r.l_total, r.val_l_q] {
            assert!(v.is_finite(), "epoch {}: {v}", r.epoch);
        }
        for (b, v) in all.iter().zip(&r.params) {
            assert!(b.lo < *v && *v < b.hi, "epoch {}: {} = {v}", r.epoch, b.name);
        }
    }
}

#[test]
fn three_sample_trial_trains_for_the_requested_epochs() {
    let mut cfg = small_config();
    cfg.training.epochs = 5;
    cfg.training.stride = 1;
    let t = trial(&cfg).slice(500..503);
    let out = train::train(&[t], &cfg.model().unwrap(), cfg.trainable().unwrap(), &cfg.network_config(), &cfg.training).unwrap();
    assert_eq!(out.report.epochs.len(), 5);
    assert!((1..=5).contains(&out.report.best_epoch));
    assert_eq!(out.report.identified.len(), 11);
}

#[test]
fn same_speed_intrasession_matches_evaluation_and_untrained_scores_poorly() {
    let cfg = small_config();
    let t = trial(&cfg);
    let params = cfg.trainable().unwrap();
    let scale = params.f0m.iter().map(Bounded::midpoint).collect();
    let net = myodyn::neural::Network::init(&cfg.network_config(), t.duration(), scale, 0).unwrap();
    let a = eval::evaluate("m", &net, &t).unwrap();
    let b = eval::run_intrasession("m", &net, &t).unwrap();
    assert_eq!(a, b);
    assert!(a.angle().unwrap().r2.unwrap() < 0.1);
}

#[test]
fn sweep_aggregate_equals_individual_jobs() {
    let cfg = small_config();
    let t = trial(&cfg);
    let test = cfg.synthesize(2, 1.0).unwrap().0;
    let spec = SweepSpec::parse("batch_size", "1,4").unwrap();
    let jobs = spec.jobs(&cfg).unwrap();
    let results: Vec<_> = jobs
        .iter()
        .map(|(label, c)| (label.clone(), sweep::run_job(label, c, std::slice::from_ref(&t), &test).map(|r| r.1)))
        .collect();
    let (table, failures) = sweep::aggregate(results).unwrap();
    assert!(failures.is_empty());
    assert_eq!(table.rows.len(), 2);
    for (label, c) in &jobs {
        let mut alone = c.clone();
        alone.validate().unwrap();
        alone.training.seed = cfg.training.seed;
        let (_, row) = sweep::run_job(label, &alone, std::slice::from_ref(&t), &test).unwrap();
        assert_eq!(table.row(label).unwrap(), &row);
    }
}

#[test]
fn failed_jobs_are_recorded_and_the_rest_kept() {
    let cfg = small_config();
    let t = trial(&cfg);
    let mut bad = cfg.clone();
    bad.network.n_muscles = 2;
    let results = vec![
        ("ok".to_string(), sweep::run_job("ok", &cfg, std::slice::from_ref(&t), &t).map(|r| r.1)),
        ("bad".to_string(), sweep::run_job("bad", &bad, std::slice::from_ref(&t), &t).map(|r| r.1)),
    ];
    let (table, failures) = sweep::aggregate(results).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0].0, "bad");
}
