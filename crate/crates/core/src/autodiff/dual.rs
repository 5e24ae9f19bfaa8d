use std::ops::{Add, Div, Mul, Neg, Sub};

use super::Scalar;

/// Truncated second-order Taylor number in one direction (time).
///
/// `v` is the value, `d1` the first and `d2` the second derivative. The
/// component type is itself a [`Scalar`], so `Dual2<Var>` composes forward
/// tangents with the reverse-mode tape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual2<S> {
    pub v: S,
    pub d1: S,
    pub d2: S,
}

impl<S: Scalar> Dual2<S> {
    pub fn new(v: S, d1: S, d2: S) -> Self {
        Dual2 { v, d1, d2 }
    }

    /// A constant: both tangents zero.
    pub fn constant(v: S) -> Self {
        let z = v.lift(0.0);
        Dual2 { v, d1: z, d2: z }
    }

    /// Seeds an independent variable: `d1 = 1`, `d2 = 0`.
    pub fn variable(v: S) -> Self {
        Dual2 {
            v,
            d1: v.lift(1.0),
            d2: v.lift(0.0),
        }
    }

    /// Applies `f` given `f(v)`, `f'(v)` and `f''(v)`.
    #[inline]
    fn chain(self, f0: S, f1: S, f2: S) -> Self {
        Dual2 {
            v: f0,
            d1: f1 * self.d1,
            d2: f2 * self.d1 * self.d1 + f1 * self.d2,
        }
    }
}

impl<S: Scalar> Add for Dual2<S> {
    type Output = Self;
    fn add(self, r: Self) -> Self {
        Dual2::new(self.v + r.v, self.d1 + r.d1, self.d2 + r.d2)
    }
}

impl<S: Scalar> Sub for Dual2<S> {
    type Output = Self;
    fn sub(self, r: Self) -> Self {
        Dual2::new(self.v - r.v, self.d1 - r.d1, self.d2 - r.d2)
    }
}

impl<S: Scalar> Mul for Dual2<S> {
    type Output = Self;
    fn mul(self, r: Self) -> Self {
        Dual2::new(
            self.v * r.v,
            self.d1 * r.v + self.v * r.d1,
            self.d2 * r.v + self.d1 * r.d1 * 2.0 + self.v * r.d2,
        )
    }
}

impl<S: Scalar> Div for Dual2<S> {
    type Output = Self;
    fn div(self, r: Self) -> Self {
        self * r.recip()
    }
}

impl<S: Scalar> Neg for Dual2<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual2::new(-self.v, -self.d1, -self.d2)
    }
}

impl<S: Scalar> Add<f64> for Dual2<S> {
    type Output = Self;
    fn add(self, c: f64) -> Self {
        Dual2::new(self.v + c, self.d1, self.d2)
    }
}

impl<S: Scalar> Sub<f64> for Dual2<S> {
    type Output = Self;
    fn sub(self, c: f64) -> Self {
        Dual2::new(self.v - c, self.d1, self.d2)
    }
}

impl<S: Scalar> Mul<f64> for Dual2<S> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        Dual2::new(self.v * c, self.d1 * c, self.d2 * c)
    }
}

impl<S: Scalar> Div<f64> for Dual2<S> {
    type Output = Self;
    fn div(self, c: f64) -> Self {
        Dual2::new(self.v / c, self.d1 / c, self.d2 / c)
    }
}

impl<S: Scalar> Scalar for Dual2<S> {
    fn value(&self) -> f64 {
        self.v.value()
    }

    fn lift(&self, c: f64) -> Self {
        Dual2::constant(self.v.lift(c))
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    fn ln(self) -> Self {
        let inv = self.v.recip();
        self.chain(self.v.ln(), inv, -(inv * inv))
    }

    fn sin(self) -> Self {
        let (s, c) = (self.v.sin(), self.v.cos());
        self.chain(s, c, -s)
    }

    fn cos(self) -> Self {
        let (s, c) = (self.v.sin(), self.v.cos());
        self.chain(c, -s, -c)
    }

    fn asin(self) -> Self {
        // f' = (1 - x²)^(-1/2), f'' = x (1 - x²)^(-3/2)
        let one_minus = -(self.v * self.v) + 1.0;
        let f1 = one_minus.sqrt().recip();
        let f2 = self.v * f1 * f1 * f1;
        self.chain(self.v.asin(), f1, f2)
    }

    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        let f1 = r.recip() * 0.5;
        let f2 = -(f1 / self.v) * 0.5;
        self.chain(r, f1, f2)
    }

    fn tanh(self) -> Self {
        let t = self.v.tanh();
        let f1 = -(t * t) + 1.0;
        let f2 = -(t * f1) * 2.0;
        self.chain(t, f1, f2)
    }

    fn recip(self) -> Self {
        let inv = self.v.recip();
        let inv2 = inv * inv;
        self.chain(inv, -inv2, inv2 * inv * 2.0)
    }

    fn powi(self, n: i32) -> Self {
        match n {
            0 => self.lift(1.0),
            1 => self,
            _ => {
                let nf = n as f64;
                let f2 = self.v.powi(n - 2) * (nf * (nf - 1.0));
                let f1 = self.v.powi(n - 1) * nf;
                self.chain(self.v.powi(n), f1, f2)
            }
        }
    }

    fn atan2(self, x: Self) -> Self {
        // θ = atan2(y, x); θ' = N / D with N = x y' − y x', D = x² + y²
        let y = self;
        let v = y.v.atan2(x.v);
        let num = x.v * y.d1 - y.v * x.d1;
        let den = x.v * x.v + y.v * y.v;
        let d1 = num / den;
        let num_dot = x.v * y.d2 - y.v * x.d2;
        let den_dot = (x.v * x.d1 + y.v * y.d1) * 2.0;
        let d2 = (num_dot * den - num * den_dot) / (den * den);
        Dual2::new(v, d1, d2)
    }

    fn dot(ws: &[Self], xs: &[Self]) -> Self {
        let mut acc = ws[0] * xs[0];
        for (w, x) in ws.iter().zip(xs).skip(1) {
            acc = acc + *w * *x;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: f64) -> Dual2<f64> {
        Dual2::variable(v)
    }

    #[test]
    fn sin_at_origin() {
        let y = t(0.0).sin();
        assert_eq!((y.v, y.d1, y.d2), (0.0, 1.0, 0.0));
    }

    #[test]
    fn product_rule_second_order() {
        // f = t², g = sin t  →  (fg)'' = 2 sin t + 4t cos t − t² sin t
        let x = 0.8;
        let y = t(x) * t(x) * t(x).sin();
        let expect = 2.0 * x.sin() + 4.0 * x * x.cos() - x * x * x.sin();
        assert!((y.d2 - expect).abs() < 1e-14);
    }

    #[test]
    fn composite_matches_five_point_stencil() {
        let f = |x: Dual2<f64>| (x.sin() * 2.0 + 1.5).sqrt().ln() * x.tanh() + (x * 0.3).asin();
        let g = |x: f64| f(Dual2::constant(x)).v;
        let x0 = 0.37;
        let h = 1e-3;
        let d1 = (-g(x0 + 2.0 * h) + 8.0 * g(x0 + h) - 8.0 * g(x0 - h) + g(x0 - 2.0 * h)) / (12.0 * h);
        let d2 = (-g(x0 + 2.0 * h) + 16.0 * g(x0 + h) - 30.0 * g(x0) + 16.0 * g(x0 - h)
            - g(x0 - 2.0 * h))
            / (12.0 * h * h);
        let y = f(t(x0));
        assert!((y.d1 - d1).abs() / d1.abs() < 1e-8);
        assert!((y.d2 - d2).abs() / d2.abs() < 1e-5);
    }

    #[test]
    fn atan2_tangents() {
        let f = |s: Dual2<f64>| (s * 0.7 + 0.2).atan2(s.cos() - 1.3);
        let g = |x: f64| f(Dual2::constant(x)).v;
        let x0 = 0.9;
        let h = 1e-4;
        let y = f(t(x0));
        let d1 = (g(x0 + h) - g(x0 - h)) / (2.0 * h);
        let d2 = (g(x0 + h) - 2.0 * g(x0) + g(x0 - h)) / (h * h);
        assert!((y.d1 - d1).abs() < 1e-8);
        assert!((y.d2 - d2).abs() < 1e-5);
    }

    #[test]
    fn powi_and_recip() {
        let y = t(2.0).powi(3);
        assert_eq!((y.v, y.d1, y.d2), (8.0, 12.0, 12.0));
        let r = t(2.0).recip();
        assert_eq!((r.v, r.d1, r.d2), (0.5, -0.25, 0.25));
    }
}
