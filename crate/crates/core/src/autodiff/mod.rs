//! Differentiation engine.
//!
//! Two complementary tools live here:
//!
//! * [`Tape`] / [`Var`]: a Wengert-list reverse-mode engine. Every node stores
//!   its parents and the local partial derivatives; one backward sweep yields
//!   adjoints for every node.
//! * [`Dual2`]: a truncated second-order Taylor number `(value, d/dt, d²/dt²)`
//!   that is generic over its component type. `Dual2<Var>` carries time
//!   tangents through the tape so expressions containing `q̂`, `dq̂/dt` and
//!   `d²q̂/dt²` can be differentiated with respect to network weights in a
//!   single backward pass.
//!
//! Model code is written once against the [`Scalar`] trait and runs on `f64`,
//! `Var`, `Dual2<f64>` and `Dual2<Var>` alike.

mod check;
mod dual;
mod tape;

pub use check::{central_difference, grad_check, GradCheckReport};
pub use dual::Dual2;
pub use tape::{Gradients, OpKind, Tape, Var};

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Numeric type usable by the muscle, joint and network code.
///
/// Comparisons (branching) are always made on [`Scalar::value`], so a
/// piecewise function records only the partials of the branch it takes.
pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Primal value.
    fn value(&self) -> f64;

    /// A constant living in the same context as `self` (same tape, zero tangents).
    fn lift(&self, c: f64) -> Self;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn asin(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// Four-quadrant arctangent of `self / x`.
    fn atan2(self, x: Self) -> Self;

    /// `Σ ws[i] * xs[i]`. Tape-backed types override this with a fused node.
    fn dot(ws: &[Self], xs: &[Self]) -> Self {
        assert_eq!(ws.len(), xs.len(), "dot: length mismatch");
        assert!(!ws.is_empty(), "dot: empty operands");
        let mut acc = ws[0] * xs[0];
        for (w, x) in ws.iter().zip(xs).skip(1) {
            acc = acc + *w * *x;
        }
        acc
    }

    fn square(self) -> Self {
        self * self
    }

    fn recip(self) -> Self {
        self.lift(1.0) / self
    }

    fn relu(self) -> Self {
        select(self.value() > 0.0, self, self.lift(0.0))
    }

    fn sigmoid(self) -> Self {
        // split on sign to avoid overflow in exp
        if self.value() >= 0.0 {
            ((-self).exp() + 1.0).recip()
        } else {
            let e = self.exp();
            e / (e + 1.0)
        }
    }

    /// `ln(1 + exp(x))`, evaluated without overflow.
    fn softplus(self) -> Self {
        if self.value() > 0.0 {
            self + ((-self).exp() + 1.0).ln()
        } else {
            (self.exp() + 1.0).ln()
        }
    }

    /// `x * tanh(softplus(x))`: a smooth, ReLU-shaped unit with nonzero curvature.
    fn mish(self) -> Self {
        self * self.softplus().tanh()
    }
}

/// Piecewise selection. Only the chosen branch contributes derivatives.
#[inline]
pub fn select<S: Scalar>(cond: bool, if_true: S, if_false: S) -> S {
    if cond {
        if_true
    } else {
        if_false
    }
}

impl Scalar for f64 {
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn lift(&self, c: f64) -> Self {
        c
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn asin(self) -> Self {
        f64::asin(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    fn dot(ws: &[Self], xs: &[Self]) -> Self {
        assert_eq!(ws.len(), xs.len(), "dot: length mismatch");
        ws.iter().zip(xs).map(|(w, x)| w * x).sum()
    }
}
