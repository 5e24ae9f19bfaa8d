//! Single-hinge wrist dynamics: muscle geometry, torque synthesis, the
//! equation of motion `I·q̈ = τ − m·g·L·sin(q) − C·q̇`, and a fixed-step RK4
//! forward simulator used as the ground-truth oracle.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::muscle::{self, MuscleConstants, MuscleKinematics, MuscleParams};

/// Admissible joint angles (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionRange {
    pub lo: f64,
    pub hi: f64,
}

impl Default for MotionRange {
    fn default() -> Self {
        MotionRange {
            lo: -FRAC_PI_2,
            hi: FRAC_PI_2,
        }
    }
}

impl MotionRange {
    pub fn check(&self, q: f64) -> Result<()> {
        if q >= self.lo && q <= self.hi {
            Ok(())
        } else {
            Err(Error::Range {
                q,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }
}

/// Moment-arm polynomial and reference length of one muscle path.
///
/// The sign convention is folded into the coefficients: flexors have
/// positive arms, extensors negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuscleGeometry {
    pub name: String,
    /// `r(q) = Σ cᵢ qⁱ` (m, q in rad).
    pub arm_coeffs: Vec<f64>,
    /// Muscle-tendon length at `q = 0` (m).
    pub lmt_ref: f64,
}

impl MuscleGeometry {
    /// Geometry whose reference length puts the fibre exactly at (never
    /// above) its optimal length at `q = 0`.
    pub fn at_optimal_length(name: &str, arm_coeffs: Vec<f64>, p: &MuscleParams) -> Self {
        let mut lmt_ref = p.lst + p.l0m * p.phi0.cos();
        // round-off may leave l̄ a hair above 1, which would switch on the
        // passive element at rest
        while muscle::fiber_length(lmt_ref, p).map(|k| k.lm > p.l0m).unwrap_or(false) {
            lmt_ref = f64::from_bits(lmt_ref.to_bits() - 1);
        }
        MuscleGeometry {
            name: name.to_string(),
            arm_coeffs,
            lmt_ref,
        }
    }
}

/// Rigid-body constants of the hand segment plus muscle geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointModel {
    /// Hand mass (kg).
    pub mass: f64,
    /// Rotation centre to hand centre of mass (m).
    pub com_distance: f64,
    /// Principal moment of inertia about the flexion axis (kg·m²).
    pub principal_inertia: f64,
    /// Viscous damping (N·m·s/rad).
    pub damping: f64,
    pub gravity: f64,
    pub range: MotionRange,
    pub muscles: Vec<MuscleGeometry>,
}

impl JointModel {
    /// `m·L² + I_p`.
    pub fn inertia(&self) -> f64 {
        self.mass * self.com_distance * self.com_distance + self.principal_inertia
    }

    /// `m·g·L`, the gravitational torque scale.
    pub fn gravity_torque(&self) -> f64 {
        self.mass * self.gravity * self.com_distance
    }

    pub fn n_muscles(&self) -> usize {
        self.muscles.len()
    }

    /// Checks the rigid-body constants and that every muscle keeps a positive
    /// fibre projection over the whole motion range.
    pub fn validate(&self, params: &[MuscleParams]) -> Result<()> {
        if self.mass < 0.0 || self.com_distance < 0.0 || self.principal_inertia < 0.0 {
            return Err(Error::Config("mass, com_distance and principal_inertia must be >= 0".into()));
        }
        if !(self.inertia() > 0.0) {
            return Err(Error::Config("moment of inertia m·L² + Ip must be positive".into()));
        }
        if self.damping < 0.0 {
            return Err(Error::Config("damping must be >= 0".into()));
        }
        if !(self.range.lo < self.range.hi) {
            return Err(Error::Config("motion range must satisfy lo < hi".into()));
        }
        if params.len() != self.muscles.len() {
            return Err(Error::Config(format!(
                "{} muscle geometries but {} parameter sets",
                self.muscles.len(),
                params.len()
            )));
        }
        const GRID: usize = 512;
        for (geo, p) in self.muscles.iter().zip(params) {
            p.validate()?;
            for i in 0..=GRID {
                let q = self.range.lo + (self.range.hi - self.range.lo) * i as f64 / GRID as f64;
                let lmt = musculotendon_length(q, geo, &self.range)?;
                if !(lmt > p.lst) {
                    return Err(Error::Config(format!(
                        "muscle {}: length {lmt} m at q = {q} rad does not exceed tendon slack {}",
                        geo.name, p.lst
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Joint angle and angular velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointState<S = f64> {
    pub q: S,
    pub qdot: S,
}

/// Output of [`simulate`], sampled on the integration grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<JointState>,
    pub accelerations: Vec<f64>,
    pub excitations: Vec<Vec<f64>>,
    pub forces: Vec<Vec<f64>>,
    pub torque: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.q).collect()
    }
}

/// `r(q) = Σ cᵢ qⁱ`.
pub fn moment_arm<S: Scalar>(q: S, geo: &MuscleGeometry, range: &MotionRange) -> Result<S> {
    range.check(q.value())?;
    Ok(horner(q, &geo.arm_coeffs))
}

fn horner<S: Scalar>(q: S, coeffs: &[f64]) -> S {
    let mut acc = q.lift(0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * q + c;
    }
    acc
}

/// `lmt(q) = lmt_ref − ∫₀^q r(u) du`, so that `d lmt / dq = −r(q)`.
pub fn musculotendon_length<S: Scalar>(q: S, geo: &MuscleGeometry, range: &MotionRange) -> Result<S> {
    range.check(q.value())?;
    let integral: Vec<f64> = std::iter::once(0.0)
        .chain(
            geo.arm_coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c / (i + 1) as f64),
        )
        .collect();
    Ok(-horner(q, &integral) + geo.lmt_ref)
}

/// Fibre length, pennation and fibre velocity at joint state `(q, qdot)`.
pub fn muscle_kinematics<S: Scalar>(
    state: JointState<S>,
    geo: &MuscleGeometry,
    p: &MuscleParams<S>,
    range: &MotionRange,
) -> Result<MuscleKinematics<S>> {
    let lmt = musculotendon_length(state.q, geo, range)?;
    let r = moment_arm(state.q, geo, range)?;
    let kin = muscle::fiber_length(lmt, p)?;
    // d lm / dt = (d lm / d lmt)(d lmt / dq) q̇ = ((lmt − lst) / lm)(−r) q̇
    let v = -((lmt - p.lst) / kin.lm * r * state.qdot);
    Ok(MuscleKinematics { v, ..kin })
}

/// Fibre velocity (m/s, shortening negative).
pub fn fiber_velocity<S: Scalar>(
    q: S,
    qdot: S,
    geo: &MuscleGeometry,
    p: &MuscleParams<S>,
    range: &MotionRange,
) -> Result<S> {
    Ok(muscle_kinematics(JointState { q, qdot }, geo, p, range)?.v)
}

/// Musculotendon force of muscle `n` for envelope `e`.
pub fn muscle_force<S: Scalar>(
    e: S,
    state: JointState<S>,
    geo: &MuscleGeometry,
    p: &MuscleParams<S>,
    shape: S,
    range: &MotionRange,
    c: &MuscleConstants,
) -> Result<S> {
    let a = muscle::activation(e, shape)?;
    let kin = muscle_kinematics(state, geo, p, range)?;
    muscle::muscle_tendon_force(a, &kin, p, c)
}

/// Joint torque `τ = Σ Fmtₙ·rₙ(q)` and the individual muscle forces.
///
/// `shapes` holds either one shared activation shape factor or one per muscle.
pub fn joint_torque<S: Scalar>(
    e: &[S],
    state: JointState<S>,
    params: &[MuscleParams<S>],
    shapes: &[S],
    model: &JointModel,
) -> Result<(S, Vec<S>)> {
    let n = model.muscles.len();
    if e.len() != n || params.len() != n || !(shapes.len() == 1 || shapes.len() == n) {
        return Err(Error::Length(format!(
            "joint_torque: {n} muscles, {} envelopes, {} parameter sets, {} shape factors",
            e.len(),
            params.len(),
            shapes.len()
        )));
    }
    let c = MuscleConstants::default();
    let mut forces = Vec::with_capacity(n);
    let mut tau = state.q.lift(0.0);
    for (i, geo) in model.muscles.iter().enumerate() {
        let shape = shapes[if shapes.len() == 1 { 0 } else { i }];
        let wrap = |source: Error| Error::Muscle {
            muscle: geo.name.clone(),
            source: Box::new(source),
        };
        let f = muscle_force(e[i], state, geo, &params[i], shape, &model.range, &c).map_err(wrap)?;
        let r = moment_arm(state.q, geo, &model.range).map_err(wrap)?;
        tau = tau + f * r;
        forces.push(f);
    }
    Ok((tau, forces))
}

/// `q̈ = (τ − m·g·L·sin(q) − C·q̇) / I`.
pub fn angular_acceleration<S: Scalar>(tau: S, state: JointState<S>, model: &JointModel) -> Result<S> {
    let inertia = model.inertia();
    if !(inertia > 0.0) {
        return Err(Error::Config(format!("moment of inertia {inertia} must be positive")));
    }
    Ok((tau - state.q.sin() * model.gravity_torque() - state.qdot * model.damping) / inertia)
}

/// Equation-of-motion residual `I·q̈ + C·q̇ + m·g·L·sin(q) − τ`.
pub fn dynamics_residual<S: Scalar>(state: JointState<S>, qddot: S, tau: S, model: &JointModel) -> S {
    qddot * model.inertia() + state.qdot * model.damping + state.q.sin() * model.gravity_torque() - tau
}

/// Integrates the forward dynamics with classical fixed-step RK4.
///
/// Excitations are sampled at the stage times. States, muscle forces, torque
/// and acceleration are recorded at every grid point `k·dt`, `k = 0..=n`.
#[allow(clippy::too_many_arguments)]
pub fn simulate<F>(
    excitation: F,
    model: &JointModel,
    params: &[MuscleParams],
    shapes: &[f64],
    q0: f64,
    qdot0: f64,
    dt: f64,
    t_end: f64,
) -> Result<Trajectory>
where
    F: Fn(f64) -> Vec<f64>,
{
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::Config(format!("simulate: dt = {dt}, t_end = {t_end}")));
    }
    model.validate(params)?;
    let steps = (t_end / dt).round() as usize;

    let eval = |t: f64, q: f64, qdot: f64| -> Result<(f64, f64, Vec<f64>, Vec<f64>)> {
        let e = excitation(t);
        let state = JointState { q, qdot };
        let (tau, forces) = joint_torque(&e, state, params, shapes, model)?;
        let qddot = angular_acceleration(tau, state, model)?;
        Ok((qddot, tau, forces, e))
    };
    let abort = |t: f64, err: Error| -> Error {
        let muscle = match &err {
            Error::Muscle { muscle, .. } => muscle.clone(),
            _ => "-".to_string(),
        };
        Error::Simulation {
            time: t,
            muscle,
            source: Box::new(err),
        }
    };
    let accel = |t: f64, q: f64, qdot: f64| eval(t, q, qdot).map(|r| r.0).map_err(|e| abort(t, e));

    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        accelerations: Vec::with_capacity(steps + 1),
        excitations: Vec::with_capacity(steps + 1),
        forces: Vec::with_capacity(steps + 1),
        torque: Vec::with_capacity(steps + 1),
    };
    let (mut q, mut qdot) = (q0, qdot0);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let (qddot, tau, forces, e) = eval(t, q, qdot).map_err(|err| abort(t, err))?;
        traj.times.push(t);
        traj.states.push(JointState { q, qdot });
        traj.accelerations.push(qddot);
        traj.excitations.push(e);
        traj.forces.push(forces);
        traj.torque.push(tau);
        if k == steps {
            break;
        }
        let h = dt;
        let (k1q, k1v) = (qdot, qddot);
        let (k2q, k2v) = {
            let (qm, vm) = (q + 0.5 * h * k1q, qdot + 0.5 * h * k1v);
            (vm, accel(t + 0.5 * h, qm, vm)?)
        };
        let (k3q, k3v) = {
            let (qm, vm) = (q + 0.5 * h * k2q, qdot + 0.5 * h * k2v);
            (vm, accel(t + 0.5 * h, qm, vm)?)
        };
        let (k4q, k4v) = {
            let (qe, ve) = (q + h * k3q, qdot + h * k3v);
            (ve, accel(t + h, qe, ve)?)
        };
        q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        qdot += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        if !q.is_finite() || !qdot.is_finite() {
            return Err(abort(t + h, Error::domain("simulate", "state became non-finite")));
        }
    }
    Ok(traj)
}
