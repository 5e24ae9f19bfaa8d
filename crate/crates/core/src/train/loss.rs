//! Angle loss and the two physics residuals.

use serde::{Deserialize, Serialize};

use super::params::TrainableParams;
use crate::autodiff::Scalar;
use crate::data::TrialMatrix;
use crate::error::{Error, Result};
use crate::joint::{self, JointModel, JointState};
use crate::muscle::MuscleParams;
use crate::neural::{Masks, Network};

/// Mean squared angle error.
pub fn loss_q(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Length(format!("{} predictions for {} samples", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::Length("empty series".into()));
    }
    Ok(pred.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_q: f64,
    pub l_r1: f64,
    pub l_r2: f64,
    pub l_total: f64,
}

/// Scales that make the residuals dimensionless.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizers {
    /// `m·g·L`, or 1 when that vanishes.
    pub torque: f64,
    /// Midpoint of each muscle's F0m bounds.
    pub force: Vec<f64>,
}

impl Normalizers {
    pub fn new(model: &JointModel, params: &TrainableParams) -> Self {
        let mgl = model.gravity_torque();
        Normalizers {
            torque: if mgl > 0.0 { mgl } else { 1.0 },
            force: params.f0m.iter().map(|b| b.midpoint()).collect(),
        }
    }
}

/// Predicted kinematics at one time step.
#[derive(Debug, Clone, Copy)]
pub struct Kinematics<S> {
    pub q: S,
    pub q_dot: S,
    pub q_ddot: S,
}

/// Normalised equation-of-motion residual
/// `(I·q̈ + C·q̇ + m·g·L·sin q − τ) / τ_scale` and the Hill-model forces at
/// the same kinematics.
pub fn dynamics_residual_at<S: Scalar>(
    k: Kinematics<S>,
    e: &[S],
    params: &[MuscleParams<S>],
    shapes: &[S],
    model: &JointModel,
    norms: &Normalizers,
) -> Result<(S, Vec<S>)> {
    let state = JointState { q: k.q, qdot: k.q_dot };
    let (tau, forces) = joint::joint_torque(e, state, params, shapes, model)?;
    let rho = joint::dynamics_residual(state, k.q_ddot, tau, model) / norms.torque;
    Ok((rho, forces))
}

/// `(ρ², mean_n ((F̂_n − F_n)/F_scale_n)²)` at one time step.
pub fn physics_terms<S: Scalar>(
    k: Kinematics<S>,
    f_hat: &[S],
    e: &[S],
    params: &[MuscleParams<S>],
    shapes: &[S],
    model: &JointModel,
    norms: &Normalizers,
) -> Result<(S, S)> {
    let (rho, forces) = dynamics_residual_at(k, e, params, shapes, model, norms)?;
    let n = forces.len();
    let mut r2 = rho.lift(0.0);
    for i in 0..n {
        r2 = r2 + ((f_hat[i] - forces[i]) / norms.force[i]).square();
    }
    Ok((rho.square(), r2 / n as f64))
}

/// Central-difference time derivatives of every envelope channel; one-sided
/// at the ends.
pub fn envelope_tangents(trial: &TrialMatrix) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = trial.len();
    let m = trial.n_muscles();
    let dt = trial.dt();
    let mut d1 = vec![vec![0.0; m]; n];
    let mut d2 = vec![vec![0.0; m]; n];
    if n < 3 {
        return (d1, d2);
    }
    let e = &trial.envelopes;
    for i in 0..n {
        let c = i.clamp(1, n - 2);
        for j in 0..m {
            d1[i][j] = match i {
                0 => (e[1][j] - e[0][j]) / dt,
                _ if i == n - 1 => (e[n - 1][j] - e[n - 2][j]) / dt,
                _ => (e[i + 1][j] - e[i - 1][j]) / (2.0 * dt),
            };
            d2[i][j] = (e[c + 1][j] - 2.0 * e[c][j] + e[c - 1][j]) / (dt * dt);
        }
    }
    (d1, d2)
}

/// Losses of `net` over every row of `trial` in eval mode. With
/// `total_derivative` the envelope time-derivatives enter the angle tangents.
pub fn trial_losses(
    net: &Network,
    params: &TrainableParams,
    trial: &TrialMatrix,
    model: &JointModel,
    weights: (f64, f64),
    total_derivative: bool,
) -> Result<LossBreakdown> {
    let norms = Normalizers::new(model, params);
    let (muscles, shapes) = params.mapped(&params.raws());
    let tangents = total_derivative.then(|| envelope_tangents(trial));
    let masks = Masks::identity();
    let (mut lq, mut l1, mut l2) = (0.0, 0.0, 0.0);
    for i in 0..trial.len() {
        let et = tangents.as_ref().map(|(a, b)| (a[i].as_slice(), b[i].as_slice()));
        let out = net.forward_pass(trial.times[i], &trial.envelopes[i], et, &masks, true).output;
        let k = Kinematics {
            q: out.q,
            q_dot: out.q_dot.expect("tangents requested"),
            q_ddot: out.q_ddot.expect("tangents requested"),
        };
        let (r1, r2) = physics_terms(k, &out.forces, &trial.envelopes[i], &muscles, &shapes, model, &norms)
            .map_err(|e| Error::Residual {
                step: i,
                source: Box::new(e),
            })?;
        lq += (out.q - trial.angles[i]).powi(2);
        l1 += r1;
        l2 += r2;
    }
    let n = trial.len() as f64;
    let (l_q, l_r1, l_r2) = (lq / n, l1 / n, l2 / n);
    Ok(LossBreakdown {
        l_q,
        l_r1,
        l_r2,
        l_total: l_q + weights.0 * l_r1 + weights.1 * l_r2,
    })
}

/// `L_r1` of `net` over `trial` (eval mode).
pub fn residual_dynamics(
    net: &Network,
    params: &TrainableParams,
    trial: &TrialMatrix,
    model: &JointModel,
    total_derivative: bool,
) -> Result<f64> {
    Ok(trial_losses(net, params, trial, model, (1.0, 1.0), total_derivative)?.l_r1)
}

/// `L_r2` of `net` over `trial` (eval mode).
pub fn residual_force(
    net: &Network,
    params: &TrainableParams,
    trial: &TrialMatrix,
    model: &JointModel,
    total_derivative: bool,
) -> Result<f64> {
    Ok(trial_losses(net, params, trial, model, (1.0, 1.0), total_derivative)?.l_r2)
}
