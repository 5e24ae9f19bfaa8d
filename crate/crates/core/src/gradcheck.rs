//! Verification of the full training-loss gradient on a toy trial: the tape
//! gradient of every loss term against central differences, and the
//! trainer's hand-written gradient against the tape.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{GradCheckReport, Scalar, Tape};
use crate::config::ToolConfig;
use crate::data::TrialMatrix;
use crate::error::{Error, Result};
use crate::joint::JointModel;
use crate::neural::{Masks, Mode, Network};
use crate::train::{step_gradient, tape_loss, Bounded, TrainConfig, TrainableParams};

pub const TERMS: [&str; 4] = ["L_total", "L_q", "L_r1", "L_r2"];

#[derive(Debug, Clone)]
pub struct LossGradientCheck {
    /// Checked coordinates of `[network weights…, raw parameters…]`.
    pub coords: Vec<usize>,
    pub labels: Vec<String>,
    /// Tape against central differences, one report per entry of [`TERMS`].
    pub terms: Vec<GradCheckReport>,
    /// Largest relative disagreement between the trainer's gradient and the
    /// tape gradient of `L_total`, over every coordinate.
    pub step_rel_error: f64,
    pub tol: f64,
}

impl LossGradientCheck {
    pub fn passed(&self) -> bool {
        self.terms.iter().all(|r| r.passed) && self.step_rel_error < self.tol
    }

    pub fn render(&self) -> String {
        let mut s = format!("{} coordinates, tol {:e}\n", self.coords.len(), self.tol);
        for (name, r) in TERMS.iter().zip(&self.terms) {
            let verdict = if r.passed { "pass" } else { "FAIL" };
            s += &format!("{name:<8} max rel error {:.3e}  {verdict}\n", r.max_rel_error);
        }
        let verdict = if self.step_rel_error < self.tol { "pass" } else { "FAIL" };
        s += &format!("trainer  max rel error {:.3e}  {verdict}\n", self.step_rel_error);
        s
    }
}

fn rel_errors(a: &[f64], b: &[f64]) -> Vec<f64> {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (scale * 1e-6).max(f64::MIN_POSITIVE);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .collect()
}

/// Every raw parameter plus `weight_fraction` of the network weights (at
/// least one), drawn without replacement.
pub fn sample_coords(n_weights: usize, n_raw: usize, weight_fraction: f64, seed: u64) -> Vec<usize> {
    let k = ((n_weights as f64 * weight_fraction).ceil() as usize).clamp(1, n_weights);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = sample(&mut rng, n_weights, k).into_vec();
    coords.sort_unstable();
    coords.extend(n_weights..n_weights + n_raw);
    coords
}

/// Checks the loss gradient over `rows` of `trial` on `coords`. Central
/// differences use step `h_weight` on network weights and `h_param` on raw
/// parameters; the activation ratio near `A = 0` cancels to about 1e-14, so
/// the parameter step must stay well above that.
#[allow(clippy::too_many_arguments)]
pub fn check_loss_gradient(
    net: &Network,
    params: &TrainableParams,
    trial: &TrialMatrix,
    rows: &[usize],
    model: &JointModel,
    cfg: &TrainConfig,
    masks: &[Masks],
    coords: &[usize],
    h_weight: f64,
    h_param: f64,
    tol: f64,
) -> Result<LossGradientCheck> {
    let n_net = net.n_params();
    let point: Vec<f64> = net.params.iter().copied().chain(params.raws()).collect();
    let eval = |x: &[f64]| -> Result<[f64; 4]> {
        let tape = Tape::new();
        let vars = tape.leaves(x);
        let (t, q, r1, r2) = tape_loss(&tape, &vars, net, params, trial, rows, model, cfg, masks)?;
        Ok([t.value(), q.value(), r1.value(), r2.value()])
    };

    let tape = Tape::new();
    let vars = tape.leaves(&point);
    let (t, q, r1, r2) = tape_loss(&tape, &vars, net, params, trial, rows, model, cfg, masks)?;
    let analytic: Vec<Vec<f64>> = [t, q, r1, r2]
        .iter()
        .map(|out| tape.gradient(*out).map(|g| vars.iter().map(|v| g.get(*v)).collect()))
        .collect::<Result<_>>()?;

    let mut numeric = vec![Vec::with_capacity(coords.len()); 4];
    let mut x = point.clone();
    for &c in coords {
        let h = if c < n_net { h_weight } else { h_param };
        x[c] = point[c] + h;
        let plus = eval(&x)?;
        x[c] = point[c] - h;
        let minus = eval(&x)?;
        x[c] = point[c];
        for k in 0..4 {
            numeric[k].push((plus[k] - minus[k]) / (2.0 * h));
        }
    }
    let terms = (0..4)
        .map(|k| {
            let a: Vec<f64> = coords.iter().map(|&c| analytic[k][c]).collect();
            let errs = rel_errors(&a, &numeric[k]);
            let entries: Vec<_> = coords
                .iter()
                .zip(&a)
                .zip(&numeric[k])
                .zip(&errs)
                .map(|(((&c, &a), &n), &e)| (c, a, n, e))
                .collect();
            GradCheckReport {
                max_rel_error: errs.iter().copied().fold(0.0, f64::max),
                passed: errs.iter().all(|e| *e < tol),
                entries,
                tol,
            }
        })
        .collect();

    let (_, manual) = step_gradient(net, params, trial, rows, model, cfg, masks)?;
    let step_rel_error = rel_errors(&manual, &analytic[0]).into_iter().fold(0.0, f64::max);

    let param_labels = params.labels();
    let labels = coords
        .iter()
        .map(|&c| if c < n_net { format!("weight[{c}]") } else { param_labels[c - n_net].clone() })
        .collect();
    Ok(LossGradientCheck {
        coords: coords.to_vec(),
        labels,
        terms,
        step_rel_error,
        tol,
    })
}

/// Three consecutive rows from the middle of a trial synthesised from `cfg`,
/// a freshly initialised network with training-mode dropout masks, all
/// trainable parameters and 1% of the weights.
pub fn toy_check(cfg: &ToolConfig, seed: u64, tol: f64) -> Result<LossGradientCheck> {
    cfg.validate()?;
    let (full, _) = cfg.synthesize(seed, 1.0)?;
    if full.len() < 3 {
        return Err(Error::Config("toy trial needs at least three samples".into()));
    }
    let mid = full.len() / 2;
    let trial = full.slice(mid - 1..mid + 2);
    let params = cfg.trainable()?;
    let force_scale = params.f0m.iter().map(Bounded::midpoint).collect();
    let net = Network::init(&cfg.network_config(), full.duration(), force_scale, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masks: Vec<Masks> = (0..3).map(|_| net.sample_masks(Mode::Train, &mut rng)).collect();
    let coords = sample_coords(net.n_params(), params.len(), 0.01, seed);
    check_loss_gradient(&net, &params, &trial, &[0, 1, 2], &cfg.model()?, &cfg.training, &masks, &coords, 1e-6, 1e-4, tol)
}
