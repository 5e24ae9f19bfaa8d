use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::Scalar;
use crate::error::{Error, Result};

/// Operation recorded for a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale,
    Shift,
    Exp,
    Ln,
    Sin,
    Cos,
    Asin,
    Sqrt,
    Tanh,
    Powi,
    Atan2,
    Dot,
}

#[derive(Default)]
struct Inner {
    values: Vec<f64>,
    kinds: Vec<OpKind>,
    /// `offsets[i]..offsets[i + 1]` indexes the edges of node `i`.
    offsets: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
}

impl Inner {
    #[inline]
    fn push(&mut self, kind: OpKind, value: f64, edges: &[(u32, f64)]) -> u32 {
        let idx = self.values.len() as u32;
        self.values.push(value);
        self.kinds.push(kind);
        for &(p, d) in edges {
            self.parents.push(p);
            self.partials.push(d);
        }
        self.offsets.push(self.parents.len() as u32);
        idx
    }
}

/// Reverse-mode tape. Nodes are appended in evaluation order, so parents
/// always precede children.
pub struct Tape {
    inner: RefCell<Inner>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tape")
            .field("nodes", &inner.values.len())
            .field("edges", &inner.parents.len())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        let mut inner = Inner::default();
        inner.offsets.push(0);
        Tape {
            inner: RefCell::new(inner),
        }
    }

    /// Drops every node while keeping the allocations.
    pub fn clear(&mut self) {
        let inner = self.inner.get_mut();
        inner.values.clear();
        inner.kinds.clear();
        inner.offsets.clear();
        inner.offsets.push(0);
        inner.parents.clear();
        inner.partials.clear();
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// New independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.inner.borrow_mut().push(OpKind::Leaf, value, &[]);
        Var { tape: self, idx }
    }

    /// Registers a block of leaves with consecutive indices.
    pub fn leaves(&self, values: &[f64]) -> Vec<Var<'_>> {
        let mut inner = self.inner.borrow_mut();
        values
            .iter()
            .map(|&v| Var {
                tape: self,
                idx: inner.push(OpKind::Leaf, v, &[]),
            })
            .collect()
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        let idx = self.inner.borrow_mut().push(OpKind::Const, value, &[]);
        Var { tape: self, idx }
    }

    pub fn kind(&self, v: Var<'_>) -> OpKind {
        self.inner.borrow().kinds[v.idx as usize]
    }

    fn unary(&self, kind: OpKind, a: Var<'_>, value: f64, da: f64) -> Var<'_> {
        let idx = self.inner.borrow_mut().push(kind, value, &[(a.idx, da)]);
        Var { tape: self, idx }
    }

    fn binary(&self, kind: OpKind, a: Var<'_>, b: Var<'_>, value: f64, da: f64, db: f64) -> Var<'_> {
        let idx = self
            .inner
            .borrow_mut()
            .push(kind, value, &[(a.idx, da), (b.idx, db)]);
        Var { tape: self, idx }
    }

    /// Fused `Σ ws[i]·xs[i]` node. Edges into constant operands are not
    /// recorded, and an edge whose partial is an exact constant zero is
    /// dropped since it can never carry adjoint.
    pub fn dot<'t>(&'t self, ws: &[Var<'t>], xs: &[Var<'t>]) -> Var<'t> {
        assert_eq!(ws.len(), xs.len(), "dot: length mismatch");
        let mut inner = self.inner.borrow_mut();
        let mut value = 0.0;
        for (w, x) in ws.iter().zip(xs) {
            let wv = inner.values[w.idx as usize];
            let xv = inner.values[x.idx as usize];
            value += wv * xv;
            let w_const = inner.kinds[w.idx as usize] == OpKind::Const;
            let x_const = inner.kinds[x.idx as usize] == OpKind::Const;
            if !w_const && !(x_const && xv == 0.0) {
                inner.parents.push(w.idx);
                inner.partials.push(xv);
            }
            if !x_const && !(w_const && wv == 0.0) {
                inner.parents.push(x.idx);
                inner.partials.push(wv);
            }
        }
        let idx = inner.values.len() as u32;
        inner.values.push(value);
        inner.kinds.push(OpKind::Dot);
        let end = inner.parents.len() as u32;
        inner.offsets.push(end);
        Var { tape: self, idx }
    }

    /// Reverse sweep from `output`. Returns adjoints `∂output/∂node` for all
    /// nodes; nodes that `output` does not depend on get zero.
    pub fn gradient(&self, output: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(output.tape, self) {
            return Err(Error::Tape("output variable belongs to a different tape".into()));
        }
        let inner = self.inner.borrow();
        let n = output.idx as usize + 1;
        let mut adj = vec![0.0; inner.values.len()];
        adj[output.idx as usize] = 1.0;
        for i in (0..n).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let (s, e) = (inner.offsets[i] as usize, inner.offsets[i + 1] as usize);
            for k in s..e {
                adj[inner.parents[k] as usize] += inner.partials[k] * a;
            }
        }
        Ok(Gradients { adjoints: adj })
    }
}

/// Adjoints produced by [`Tape::gradient`].
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<f64>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> f64 {
        self.adjoints.get(v.idx as usize).copied().unwrap_or(0.0)
    }

    /// Adjoints of nodes `start..start + len` (e.g. a block from [`Tape::leaves`]).
    pub fn block(&self, start: usize, len: usize) -> &[f64] {
        &self.adjoints[start..start + len]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.adjoints
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var(#{} = {})", self.idx, self.value())
    }
}

impl<'t> Var<'t> {
    pub fn index(&self) -> usize {
        self.idx as usize
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    #[inline]
    fn val(&self) -> f64 {
        self.tape.inner.borrow().values[self.idx as usize]
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        let v = self.val() + rhs.val();
        self.tape.binary(OpKind::Add, self, rhs, v, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        let v = self.val() - rhs.val();
        self.tape.binary(OpKind::Sub, self, rhs, v, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        let (a, b) = (self.val(), rhs.val());
        self.tape.binary(OpKind::Mul, self, rhs, a * b, b, a)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let (a, b) = (self.val(), rhs.val());
        self.tape
            .binary(OpKind::Div, self, rhs, a / b, 1.0 / b, -a / (b * b))
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        let v = -self.val();
        self.tape.unary(OpKind::Neg, self, v, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        let v = self.val() + rhs;
        self.tape.unary(OpKind::Shift, self, v, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        let v = self.val() - rhs;
        self.tape.unary(OpKind::Shift, self, v, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        let v = self.val() * rhs;
        self.tape.unary(OpKind::Scale, self, v, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Var<'t> {
        let v = self.val() / rhs;
        self.tape.unary(OpKind::Scale, self, v, 1.0 / rhs)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        rhs + self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        let v = self - rhs.val();
        rhs.tape.unary(OpKind::Shift, rhs, v, -1.0)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs * self
    }
}

impl<'t> Scalar for Var<'t> {
    #[inline]
    fn value(&self) -> f64 {
        self.val()
    }

    fn lift(&self, c: f64) -> Self {
        self.tape.constant(c)
    }

    fn exp(self) -> Self {
        let v = self.val().exp();
        self.tape.unary(OpKind::Exp, self, v, v)
    }

    fn ln(self) -> Self {
        let x = self.val();
        self.tape.unary(OpKind::Ln, self, x.ln(), 1.0 / x)
    }

    fn sin(self) -> Self {
        let x = self.val();
        self.tape.unary(OpKind::Sin, self, x.sin(), x.cos())
    }

    fn cos(self) -> Self {
        let x = self.val();
        self.tape.unary(OpKind::Cos, self, x.cos(), -x.sin())
    }

    fn asin(self) -> Self {
        let x = self.val();
        self.tape
            .unary(OpKind::Asin, self, x.asin(), 1.0 / (1.0 - x * x).sqrt())
    }

    fn sqrt(self) -> Self {
        let r = self.val().sqrt();
        self.tape.unary(OpKind::Sqrt, self, r, 0.5 / r)
    }

    fn tanh(self) -> Self {
        let t = self.val().tanh();
        self.tape.unary(OpKind::Tanh, self, t, 1.0 - t * t)
    }

    fn powi(self, n: i32) -> Self {
        let x = self.val();
        let d = if n == 0 { 0.0 } else { n as f64 * x.powi(n - 1) };
        self.tape.unary(OpKind::Powi, self, x.powi(n), d)
    }

    fn atan2(self, x: Self) -> Self {
        let (yv, xv) = (self.val(), x.val());
        let r2 = xv * xv + yv * yv;
        self.tape
            .binary(OpKind::Atan2, self, x, yv.atan2(xv), xv / r2, -yv / r2)
    }

    fn dot(ws: &[Self], xs: &[Self]) -> Self {
        ws[0].tape.dot(ws, xs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = x * x;
        let g = tape.gradient(y).unwrap();
        assert_eq!(g.get(x), 6.0);
    }

    #[test]
    fn linear_form_gradient_is_inputs() {
        let tape = Tape::new();
        let xs = [1.5, -2.0, 0.25];
        let ws = tape.leaves(&[0.3, 0.7, -1.1]);
        let xv: Vec<_> = xs.iter().map(|&x| tape.constant(x)).collect();
        let loss = Scalar::dot(&ws, &xv);
        let g = tape.gradient(loss).unwrap();
        for (w, x) in ws.iter().zip(xs) {
            assert_eq!(g.get(*w), x);
        }
    }

    #[test]
    fn unreachable_leaf_has_zero_gradient() {
        let tape = Tape::new();
        let x = tape.var(2.0);
        let unused = tape.var(5.0);
        let y = x.exp();
        let g = tape.gradient(y).unwrap();
        assert_eq!(g.get(unused), 0.0);
        // nodes created after the output are also untouched
        let later = tape.var(1.0);
        assert_eq!(g.get(later), 0.0);
    }

    #[test]
    fn foreign_output_rejected() {
        let a = Tape::new();
        let b = Tape::new();
        let x = b.var(1.0);
        assert!(a.gradient(x).is_err());
    }

    #[test]
    fn clear_reuses_tape() {
        let mut tape = Tape::new();
        {
            let x = tape.var(1.0);
            let _ = x.sin() * x;
        }
        assert!(tape.len() > 0);
        tape.clear();
        assert!(tape.is_empty());
        let x = tape.var(0.5);
        let g = tape.gradient(x.cos()).unwrap();
        assert!((g.get(x) + 0.5f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn dot_skips_constant_zero_edges() {
        let tape = Tape::new();
        let ws = tape.leaves(&[1.0, 2.0]);
        let xs = [tape.constant(0.0), tape.constant(3.0)];
        let before = tape.inner.borrow().parents.len();
        let y = tape.dot(&ws, &xs);
        let after = tape.inner.borrow().parents.len();
        assert_eq!(after - before, 1);
        assert_eq!(y.value(), 6.0);
        assert_eq!(tape.kind(y), OpKind::Dot);
        let g = tape.gradient(y).unwrap();
        assert_eq!(g.get(ws[0]), 0.0);
        assert_eq!(g.get(ws[1]), 3.0);
    }
}
