//! Physics-informed training: angle loss plus equation-of-motion and
//! force-consistency residuals, optimised jointly over network weights and
//! bounded physiological parameters.

mod adam;
mod loss;
mod params;
mod report;

pub use adam::Adam;
pub use loss::{
    dynamics_residual_at, envelope_tangents, loss_q, physics_terms, residual_dynamics, residual_force,
    trial_losses, Kinematics, LossBreakdown, Normalizers,
};
pub use params::{identify_report, Bounded, BoundsConfig, TrainableParams, Variation};
pub use report::{EpochRecord, TrainMode, TrainReport};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Dual2, Scalar, Tape, Var};
use crate::data::TrialMatrix;
use crate::error::{Error, Result};
use crate::joint::JointModel;
use crate::neural::{Masks, Mode, Network, NetworkConfig, OutputAdjoint};

/// How the time derivatives of `q̂` treat the envelope inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeDerivative {
    /// Envelopes vary with time; `dq̂/dt` includes `∂q̂/∂e · ė`.
    Total,
    /// Envelopes held constant; only the explicit time input is differentiated.
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Learning rate of the raw physiological parameters; defaults to
    /// `learning_rate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_learning_rate: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub w1: f64,
    pub w2: f64,
    pub seed: u64,
    /// Tail fraction of each trial held out for model selection.
    pub validation_fraction: f64,
    /// Use every `stride`-th row of each trial. Envelopes are low-passed far
    /// below the sampling rate, so 1 kHz trials lose nothing at 10.
    pub stride: usize,
    pub time_derivative: TimeDerivative,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            param_learning_rate: None,
            epochs: 1000,
            batch_size: 1,
            w1: 1.0,
            w2: 1.0,
            seed: 0,
            validation_fraction: 0.2,
            stride: 10,
            time_derivative: TimeDerivative::Total,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let lr_ok = |v: f64| v > 0.0 && v.is_finite();
        if !lr_ok(self.learning_rate) || !self.param_learning_rate.map_or(true, lr_ok) {
            return Err(Error::Config("learning rates must be positive and finite".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.stride == 0 {
            return Err(Error::Config("epochs, batch_size and stride must be positive".into()));
        }
        if !(self.w1 >= 0.0 && self.w2 >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation_fraction {} not in [0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }

    pub fn mode(&self) -> TrainMode {
        if self.w1 == 0.0 && self.w2 == 0.0 {
            TrainMode::Baseline
        } else {
            TrainMode::Pinn
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub params: TrainableParams,
    pub report: TrainReport,
}

/// Training and validation rows of each trial.
pub(crate) struct Split {
    pub train: Vec<(usize, usize)>,
    pub val: Vec<(usize, usize)>,
}

pub(crate) fn split(trials: &[TrialMatrix], cfg: &TrainConfig) -> Result<Split> {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (k, t) in trials.iter().enumerate() {
        let n = t.len();
        let n_val = (n as f64 * cfg.validation_fraction).round() as usize;
        let cut = n - n_val;
        train.extend((0..cut).step_by(cfg.stride).map(|i| (k, i)));
        val.extend((cut..n).step_by(cfg.stride).map(|i| (k, i)));
    }
    if train.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    Ok(Split { train, val })
}

pub(crate) fn time_scale(trials: &[TrialMatrix]) -> f64 {
    trials.iter().map(TrialMatrix::duration).fold(0.0, f64::max).max(1e-3)
}

/// Eval-mode mean squared angle error over `rows`.
pub(crate) fn validation_loss(net: &Network, trials: &[TrialMatrix], rows: &[(usize, usize)]) -> f64 {
    let masks = Masks::identity();
    let sum: f64 = rows
        .iter()
        .map(|&(k, i)| {
            let t = &trials[k];
            let out = net.forward_pass(t.times[i], &t.envelopes[i], None, &masks, false).output;
            (out.q - t.angles[i]).powi(2)
        })
        .sum();
    sum / rows.len() as f64
}

fn check_trials(trials: &[TrialMatrix], model: &JointModel) -> Result<()> {
    if trials.is_empty() {
        return Err(Error::Config("at least one trial is required".into()));
    }
    for t in trials {
        t.validate()?;
        if t.n_muscles() != model.n_muscles() {
            return Err(Error::Config(format!(
                "trial has {} muscles, model has {}",
                t.n_muscles(),
                model.n_muscles()
            )));
        }
    }
    Ok(())
}

/// Trains the surrogate and identifies the physiological parameters.
///
/// Rows are visited in a fresh random order every epoch; the network and
/// parameters with the lowest validation angle loss are returned.
pub fn train(
    trials: &[TrialMatrix],
    model: &JointModel,
    init: TrainableParams,
    net_cfg: &NetworkConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(trials, model, init, net_cfg, cfg, &mut |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with(
    trials: &[TrialMatrix],
    model: &JointModel,
    init: TrainableParams,
    net_cfg: &NetworkConfig,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let started = Instant::now();
    cfg.validate()?;
    check_trials(trials, model)?;
    if init.base.len() != model.n_muscles() || net_cfg.n_muscles != model.n_muscles() {
        return Err(Error::Config("muscle count differs between model, parameters and network".into()));
    }
    let rows = split(trials, cfg)?;
    let force_scale: Vec<f64> = init.f0m.iter().map(Bounded::midpoint).collect();
    let mut net = Network::init(net_cfg, time_scale(trials), force_scale, cfg.seed)?;
    let mut params = init;
    let norms = Normalizers::new(model, &params);
    let physics = cfg.mode() == TrainMode::Pinn;
    let tangents: Vec<_> = match (physics, cfg.time_derivative) {
        (true, TimeDerivative::Total) => trials.iter().map(|t| Some(envelope_tangents(t))).collect(),
        _ => trials.iter().map(|_| None).collect(),
    };

    let n_net = net.n_params();
    let mut raws = params.raws();
    let mut adam = Adam::new(n_net + raws.len());
    let lr = cfg.learning_rate;
    let lr_param = cfg.param_learning_rate.unwrap_or(lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = rows.train.clone();
    let mut net_grad = vec![0.0; n_net];
    let mut raw_grad = vec![0.0; raws.len()];
    let mut report = TrainReport::new(cfg.mode(), params.labels(), cfg.clone());
    let mut best: Option<(f64, Vec<f64>, Vec<f64>, usize)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 3];
        let mut skipped = 0usize;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            net_grad.iter_mut().for_each(|g| *g = 0.0);
            raw_grad.iter_mut().for_each(|g| *g = 0.0);
            for (j, &(k, i)) in batch.iter().enumerate() {
                let sample = b * cfg.batch_size + j;
                let trial = &trials[k];
                let masks = net.sample_masks(Mode::Train, &mut rng);
                let et = tangents[k].as_ref().map(|(d1, d2)| (d1[i].as_slice(), d2[i].as_slice()));
                let pass = net.forward_pass(trial.times[i], &trial.envelopes[i], et, &masks, physics);
                let out = &pass.output;
                let err = out.q - trial.angles[i];
                let mut adj = OutputAdjoint::zero(model.n_muscles());
                adj.q = 2.0 * err;
                let lq = err * err;
                let (mut l1, mut l2) = (0.0, 0.0);
                if physics {
                    let k = Kinematics {
                        q: out.q,
                        q_dot: out.q_dot.expect("tangents tracked"),
                        q_ddot: out.q_ddot.expect("tangents tracked"),
                    };
                    match physics_gradient(k, &out.forces, &trial.envelopes[i], &params, &raws, model, &norms, cfg, &mut adj, &mut raw_grad) {
                        Ok(terms) => (l1, l2) = terms,
                        Err(e) if is_domain(&e) => skipped += 1,
                        Err(e) => {
                            return Err(Error::Training {
                                epoch,
                                sample,
                                source: Box::new(Error::Residual {
                                    step: i,
                                    source: Box::new(e),
                                }),
                            })
                        }
                    }
                }
                for (term, value) in [("L_q", lq), ("L_r1", l1), ("L_r2", l2)] {
                    if !value.is_finite() {
                        return Err(Error::NonFinite {
                            epoch,
                            sample,
                            term,
                            value,
                        });
                    }
                }
                sums[0] += lq;
                sums[1] += l1;
                sums[2] += l2;
                net.backward(&pass, &adj, &masks, &mut net_grad);
            }
            if batch.len() > 1 {
                let inv = 1.0 / batch.len() as f64;
                net_grad.iter_mut().chain(raw_grad.iter_mut()).for_each(|g| *g *= inv);
            }
            adam.begin();
            adam.update(0, &mut net.params, &net_grad, lr);
            if physics {
                adam.update(n_net, &mut raws, &raw_grad, lr_param);
                params.set_raws(&raws);
            }
        }
        let n = order.len() as f64;
        let n_phys = (order.len() - skipped).max(1) as f64;
        let (l_q, l_r1, l_r2) = (sums[0] / n, sums[1] / n_phys, sums[2] / n_phys);
        let val_rows = if rows.val.is_empty() { &rows.train } else { &rows.val };
        let val_l_q = validation_loss(&net, trials, val_rows);
        if !val_l_q.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                sample: order.len(),
                term: "validation L_q",
                value: val_l_q,
            });
        }
        let record = EpochRecord {
            epoch,
            l_q,
            l_r1: if physics { l_r1 } else { f64::NAN },
            l_r2: if physics { l_r2 } else { f64::NAN },
            l_total: l_q + cfg.w1 * l_r1 + cfg.w2 * l_r2,
            val_l_q,
            skipped,
            params: params.values(),
        };
        observer(&record);
        report.epochs.push(record);
        if best.as_ref().map_or(true, |b| val_l_q < b.0) {
            best = Some((val_l_q, net.params.clone(), raws.clone(), epoch));
        }
    }

    let (best_val, best_net, best_raws, best_epoch) = best.expect("at least one epoch");
    net.params = best_net;
    params.set_raws(&best_raws);
    report.finish(best_epoch, best_val, &params, started.elapsed().as_secs_f64())?;
    Ok(TrainOutcome {
        network: net,
        params,
        report,
    })
}

/// Predicted kinematics outside the model's domain (motion range, fibre
/// geometry, velocity limit). Such samples contribute only the angle loss.
fn is_domain(e: &Error) -> bool {
    match e {
        Error::Domain { .. } | Error::Range { .. } => true,
        Error::Muscle { source, .. } => is_domain(source),
        _ => false,
    }
}

/// Evaluates the weighted physics terms at one sample on a fresh tape and
/// accumulates their gradients into the output adjoints and `raw_grad`.
/// Returns `(L_r1, L_r2)` for the sample.
#[allow(clippy::too_many_arguments)]
fn physics_gradient(
    k: Kinematics<f64>,
    forces: &[f64],
    e: &[f64],
    params: &TrainableParams,
    raws: &[f64],
    model: &JointModel,
    norms: &Normalizers,
    cfg: &TrainConfig,
    adj: &mut OutputAdjoint,
    raw_grad: &mut [f64],
) -> Result<(f64, f64)> {
    let tape = Tape::new();
    let kv = Kinematics {
        q: tape.var(k.q),
        q_dot: tape.var(k.q_dot),
        q_ddot: tape.var(k.q_ddot),
    };
    let f_hat = tape.leaves(forces);
    let raw = tape.leaves(raws);
    let e_s: Vec<Var> = e.iter().map(|v| tape.constant(*v)).collect();
    let (muscles, shapes) = params.mapped(&raw);
    let (r1, r2) = physics_terms(kv, &f_hat, &e_s, &muscles, &shapes, model, norms)?;
    let loss = r1 * cfg.w1 + r2 * cfg.w2;
    let g = tape.gradient(loss)?;
    adj.q += g.get(kv.q);
    adj.q_dot += g.get(kv.q_dot);
    adj.q_ddot += g.get(kv.q_ddot);
    for (a, f) in adj.forces.iter_mut().zip(&f_hat) {
        *a += g.get(*f);
    }
    for (a, r) in raw_grad.iter_mut().zip(&raw) {
        *a += g.get(*r);
    }
    Ok((r1.value(), r2.value()))
}

/// Plain angle-regression training of the same network: no physics terms,
/// no parameter updates. Shares the data split, sampling order and dropout
/// stream with [`train`].
pub fn train_baseline(
    trials: &[TrialMatrix],
    net_cfg: &NetworkConfig,
    force_scale: Vec<f64>,
    cfg: &TrainConfig,
) -> Result<(Network, Vec<EpochRecord>)> {
    cfg.validate()?;
    let rows = split(trials, cfg)?;
    let mut net = Network::init(net_cfg, time_scale(trials), force_scale, cfg.seed)?;
    let mut adam = Adam::new(net.n_params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = rows.train.clone();
    let mut grad = vec![0.0; net.n_params()];
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, net.params.clone());
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &(k, i) in batch {
                let t = &trials[k];
                let masks = net.sample_masks(Mode::Train, &mut rng);
                let pass = net.forward_pass(t.times[i], &t.envelopes[i], None, &masks, false);
                let err = pass.output.q - t.angles[i];
                sum += err * err;
                let mut adj = OutputAdjoint::zero(net.config.n_muscles);
                adj.q = 2.0 * err;
                net.backward(&pass, &adj, &masks, &mut grad);
            }
            if batch.len() > 1 {
                let inv = 1.0 / batch.len() as f64;
                grad.iter_mut().for_each(|g| *g *= inv);
            }
            adam.step(&mut net.params, &grad, cfg.learning_rate);
        }
        let val_rows = if rows.val.is_empty() { &rows.train } else { &rows.val };
        let val_l_q = validation_loss(&net, trials, val_rows);
        let l_q = sum / order.len() as f64;
        records.push(EpochRecord {
            epoch,
            l_q,
            l_r1: f64::NAN,
            l_r2: f64::NAN,
            l_total: l_q,
            val_l_q,
            skipped: 0,
            params: Vec::new(),
        });
        if val_l_q < best.0 {
            best = (val_l_q, net.params.clone());
        }
    }
    net.params = best.1;
    Ok((net, records))
}

/// Full `L_total` on a handful of rows as a function of
/// `[network weights…, raw parameters…]` on the tape, with every weight as a
/// leaf. Used for gradient verification.
pub fn tape_loss<'t>(
    tape: &'t Tape,
    x: &[Var<'t>],
    net: &Network,
    params: &TrainableParams,
    trial: &TrialMatrix,
    rows: &[usize],
    model: &JointModel,
    cfg: &TrainConfig,
    masks: &[Masks],
) -> Result<(Var<'t>, Var<'t>, Var<'t>, Var<'t>)> {
    let n_net = net.n_params();
    let (w, raw) = x.split_at(n_net);
    let (muscles, shapes) = params.mapped(raw);
    let norms = Normalizers::new(model, params);
    let tangents = (cfg.time_derivative == TimeDerivative::Total).then(|| envelope_tangents(trial));
    let zero = tape.constant(0.0);
    let (mut lq, mut l1, mut l2) = (zero, zero, zero);
    for (j, &i) in rows.iter().enumerate() {
        let e: Vec<Dual2<Var>> = (0..trial.n_muscles())
            .map(|m| {
                let v = tape.constant(trial.envelopes[i][m]);
                match &tangents {
                    Some((d1, d2)) => Dual2::new(v, tape.constant(d1[i][m]), tape.constant(d2[i][m])),
                    None => Dual2::constant(v),
                }
            })
            .collect();
        let (q, f) = net.forward_generic(w, tape.constant(trial.times[i]), &e, &masks[j]);
        let k = Kinematics {
            q: q.v,
            q_dot: q.d1,
            q_ddot: q.d2,
        };
        let ev: Vec<Var> = e.iter().map(|d| d.v).collect();
        let (r1, r2) = physics_terms(k, &f, &ev, &muscles, &shapes, model, &norms)?;
        lq = lq + (q.v - trial.angles[i]).square();
        l1 = l1 + r1;
        l2 = l2 + r2;
    }
    let inv = 1.0 / rows.len() as f64;
    let (lq, l1, l2) = (lq * inv, l1 * inv, l2 * inv);
    Ok((lq + l1 * cfg.w1 + l2 * cfg.w2, lq, l1, l2))
}

/// Mean weighted loss over `rows` and its gradient with respect to
/// `[network weights…, raw parameters…]`, computed exactly as a training
/// step does (hand-written network backward pass plus a per-row physics
/// tape). `masks[j]` is the dropout mask for `rows[j]`.
#[allow(clippy::too_many_arguments)]
pub fn step_gradient(
    net: &Network,
    params: &TrainableParams,
    trial: &TrialMatrix,
    rows: &[usize],
    model: &JointModel,
    cfg: &TrainConfig,
    masks: &[Masks],
) -> Result<(f64, Vec<f64>)> {
    let physics = cfg.mode() == TrainMode::Pinn;
    let norms = Normalizers::new(model, params);
    let tangents = (physics && cfg.time_derivative == TimeDerivative::Total).then(|| envelope_tangents(trial));
    let raws = params.raws();
    let n_net = net.n_params();
    let mut net_grad = vec![0.0; n_net];
    let mut raw_grad = vec![0.0; raws.len()];
    let mut total = 0.0;
    for (j, &i) in rows.iter().enumerate() {
        let et = tangents.as_ref().map(|(d1, d2)| (d1[i].as_slice(), d2[i].as_slice()));
        let pass = net.forward_pass(trial.times[i], &trial.envelopes[i], et, &masks[j], physics);
        let out = &pass.output;
        let err = out.q - trial.angles[i];
        let mut adj = OutputAdjoint::zero(model.n_muscles());
        adj.q = 2.0 * err;
        total += err * err;
        if physics {
            let k = Kinematics {
                q: out.q,
                q_dot: out.q_dot.expect("tangents tracked"),
                q_ddot: out.q_ddot.expect("tangents tracked"),
            };
            let (l1, l2) = physics_gradient(k, &out.forces, &trial.envelopes[i], params, &raws, model, &norms, cfg, &mut adj, &mut raw_grad)?;
            total += cfg.w1 * l1 + cfg.w2 * l2;
        }
        net.backward(&pass, &adj, &masks[j], &mut net_grad);
    }
    let inv = 1.0 / rows.len() as f64;
    let grad = net_grad.into_iter().chain(raw_grad).map(|g| g * inv).collect();
    Ok((total * inv, grad))
}
