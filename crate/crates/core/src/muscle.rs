//! Activation dynamics and the Hill-type muscle-tendon force model.
//!
//! Every function is generic over [`Scalar`], so the same code evaluates plain
//! forces, forward time tangents and reverse-mode gradients. Tendons are rigid:
//! the tendon length equals its slack length and fibre length follows from the
//! muscle-tendon length in closed form.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::{Error, Result};

/// Slop allowed on envelope bounds before rejecting.
pub const ENVELOPE_TOL: f64 = 1e-9;
/// Below this magnitude the activation shape factor uses the linear limit.
pub const LINEAR_SHAPE_EPS: f64 = 1e-6;
pub const SHAPE_MIN: f64 = -3.0;
pub const SHAPE_MAX: f64 = 0.01;

/// Physiological parameters of one muscle-tendon unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuscleParams<S = f64> {
    /// Optimal fibre length (m).
    pub l0m: S,
    /// Maximum contraction velocity (m/s).
    pub v0: S,
    /// Maximum isometric force (N).
    pub f0m: S,
    /// Tendon slack length (m).
    pub lst: S,
    /// Pennation angle at optimal fibre length (rad).
    pub phi0: S,
}

impl MuscleParams<f64> {
    pub fn new(l0m: f64, v0: f64, f0m: f64, lst: f64, phi0: f64) -> Result<Self> {
        let p = MuscleParams {
            l0m,
            v0,
            f0m,
            lst,
            phi0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with the conventional `v0 = 10·l0m` per second.
    pub fn with_default_velocity(l0m: f64, f0m: f64, lst: f64, phi0: f64) -> Result<Self> {
        Self::new(l0m, 10.0 * l0m, f0m, lst, phi0)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.l0m > 0.0
            && self.v0 > 0.0
            && self.f0m > 0.0
            && self.lst >= 0.0
            && (0.0..FRAC_PI_2).contains(&self.phi0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid muscle parameters {self:?}")))
        }
    }

    /// Embeds the parameters as constants in the context of `like`.
    pub fn lift<S: Scalar>(&self, like: S) -> MuscleParams<S> {
        MuscleParams {
            l0m: like.lift(self.l0m),
            v0: like.lift(self.v0),
            f0m: like.lift(self.f0m),
            lst: like.lift(self.lst),
            phi0: like.lift(self.phi0),
        }
    }
}

impl<S: Scalar> MuscleParams<S> {
    pub fn values(&self) -> MuscleParams<f64> {
        MuscleParams {
            l0m: self.l0m.value(),
            v0: self.v0.value(),
            f0m: self.f0m.value(),
            lst: self.lst.value(),
            phi0: self.phi0.value(),
        }
    }

    /// Constant fibre "height" `l0m·sin(phi0)`.
    pub fn fiber_height(&self) -> S {
        self.l0m * self.phi0.sin()
    }
}

/// Nonlinear shape factor `A` of the activation mapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationShape(pub f64);

impl ActivationShape {
    pub fn new(a: f64) -> Result<Self> {
        check_shape(a)?;
        Ok(ActivationShape(a))
    }
}

fn check_shape(a: f64) -> Result<()> {
    if (SHAPE_MIN..=SHAPE_MAX).contains(&a) {
        Ok(())
    } else {
        Err(Error::domain(
            "activation",
            format!("shape factor {a} outside [{SHAPE_MIN}, {SHAPE_MAX}]"),
        ))
    }
}

/// Fixed constants of the force-length relation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuscleConstants {
    /// Activation-dependent shift of the optimal length.
    pub lambda: f64,
    /// Width of the Gaussian force-length curve.
    pub k: f64,
}

impl Default for MuscleConstants {
    fn default() -> Self {
        MuscleConstants {
            lambda: 0.15,
            k: 0.45,
        }
    }
}

/// Fibre state of one muscle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuscleKinematics<S = f64> {
    /// Fibre length (m).
    pub lm: S,
    /// Current pennation angle (rad).
    pub phi: S,
    /// Fibre velocity (m/s), shortening negative.
    pub v: S,
}

/// Maps a normalised envelope `e ∈ [0, 1]` to activation
/// `a = (exp(A e) − 1) / (exp(A) − 1)`.
pub fn activation<S: Scalar>(e: S, shape: S) -> Result<S> {
    let ev = e.value();
    if !(-ENVELOPE_TOL..=1.0 + ENVELOPE_TOL).contains(&ev) {
        return Err(Error::domain("activation", format!("envelope {ev} outside [0, 1]")));
    }
    let av = shape.value();
    check_shape(av)?;
    if av.abs() < LINEAR_SHAPE_EPS {
        return Ok(e);
    }
    Ok(((shape * e).exp() - 1.0) / (shape.exp() - 1.0))
}

/// Pennation angle at fibre length `lm`: `asin(l0m·sin(phi0) / lm)`.
pub fn pennation<S: Scalar>(lm: S, p: &MuscleParams<S>) -> Result<S> {
    let h = p.fiber_height();
    if !(lm.value() > 0.0) || lm.value() < h.value() {
        return Err(Error::domain(
            "pennation",
            format!("fibre length {} shorter than its height {}", lm.value(), h.value()),
        ));
    }
    Ok((h / lm).asin())
}

/// Fibre length and pennation for a given muscle-tendon length.
///
/// With `w = l0m·sin(phi0)` and the rigid tendon, `lm = sqrt((lmt − lst)² + w²)`
/// and `phi = atan2(w, lmt − lst)`; this satisfies both the constant-height
/// pennation relation and `lm·cos(phi) = lmt − lst`.
pub fn fiber_length<S: Scalar>(lmt: S, p: &MuscleParams<S>) -> Result<MuscleKinematics<S>> {
    let along = lmt - p.lst;
    if !(along.value() > 0.0) {
        return Err(Error::domain(
            "fiber_length",
            format!(
                "muscle-tendon length {} not above tendon slack length {}",
                lmt.value(),
                p.lst.value()
            ),
        ));
    }
    let w = p.fiber_height();
    let lm = (along * along + w * w).sqrt();
    let phi = w.atan2(along);
    Ok(MuscleKinematics {
        lm,
        phi,
        v: lm.lift(0.0),
    })
}

/// Active force-length factor, Gaussian in the activation-normalised length.
pub fn force_length_active<S: Scalar>(
    lm: S,
    a: S,
    p: &MuscleParams<S>,
    c: &MuscleConstants,
) -> Result<S> {
    if !(lm.value() > 0.0) {
        return Err(Error::domain("force_length_active", format!("fibre length {}", lm.value())));
    }
    check_unit("force_length_active", a.value())?;
    let shift = (-a + 1.0) * c.lambda + 1.0;
    let lbar = lm / (p.l0m * shift);
    let d = lbar - 1.0;
    Ok((-(d * d) / c.k).exp())
}

/// Force-velocity factor of normalised velocity `v / v0`.
///
/// Ties at `vbar = 0` go to the shortening branch; both branches equal 1 there.
pub fn force_velocity<S: Scalar>(vbar: S) -> Result<S> {
    let x = vbar.value();
    if !(x >= -1.0) {
        return Err(Error::domain(
            "force_velocity",
            format!("normalised velocity {x} below -1"),
        ));
    }
    if x <= 0.0 {
        Ok((vbar + 1.0) * 0.3 / (-vbar + 0.3))
    } else {
        Ok((vbar * 2.34 + 0.039) / (vbar * 1.3 + 0.039))
    }
}

/// Passive elastic force (N). Zero up to the optimal length, exponential beyond.
pub fn force_passive<S: Scalar>(lm: S, p: &MuscleParams<S>) -> Result<S> {
    if !(lm.value() > 0.0) {
        return Err(Error::domain("force_passive", format!("fibre length {}", lm.value())));
    }
    let lbar = lm / p.l0m;
    if lbar.value() <= 1.0 {
        return Ok(lm.lift(0.0));
    }
    // exp(10(l̄ − 1)) / exp(5); discontinuous by F0m·e⁻⁵ at l̄ = 1
    Ok(p.f0m * ((lbar - 1.0) * 10.0).exp() / 5f64.exp())
}

/// Total force along the tendon:
/// `(a·f_v(v/v0)·f_a(lm, a)·F0m + F_PE(lm))·cos(phi)`.
pub fn muscle_tendon_force<S: Scalar>(
    a: S,
    kin: &MuscleKinematics<S>,
    p: &MuscleParams<S>,
    c: &MuscleConstants,
) -> Result<S> {
    check_unit("muscle_tendon_force", a.value())?;
    let fv = force_velocity(kin.v / p.v0)?;
    let fa = force_length_active(kin.lm, a, p, c)?;
    let fpe = force_passive(kin.lm, p)?;
    Ok((a * fv * fa * p.f0m + fpe) * kin.phi.cos())
}

fn check_unit(op: &'static str, a: f64) -> Result<()> {
    if (-ENVELOPE_TOL..=1.0 + ENVELOPE_TOL).contains(&a) {
        Ok(())
    } else {
        Err(Error::domain(op, format!("activation {a} outside [0, 1]")))
    }
}
