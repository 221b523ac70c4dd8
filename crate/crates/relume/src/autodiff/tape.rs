//! Reverse-mode automatic differentiation on a flat scalar tape.
//!
//! Every arithmetic operation pushes one node holding up to two parent
//! indices and the corresponding local partial derivatives. The backward
//! sweep walks the tape once in reverse, so its cost is linear in the
//! number of recorded nodes.

use std::cell::{Cell, RefCell};

use crate::error::{Error, Result};

/// Denominators (division, log/sqrt gradients) are floored at this epsilon,
/// preserving sign, instead of erroring. Grazing-angle BRDF denominators
/// would otherwise produce infinities.
pub const GUARD_EPS: f64 = 1e-12;

#[inline]
fn guarded(d: f64) -> f64 {
    if d.abs() < GUARD_EPS {
        GUARD_EPS.copysign(d)
    } else {
        d
    }
}

#[derive(Clone, Copy)]
struct Node {
    parent: [u32; 2],
    weight: [f64; 2],
}

/// A recording of one scalar computation graph.
///
/// A tape is confined to the execution context that created it. One
/// `backward` pass is allowed per recording; call [`Tape::reset`] to reuse
/// the allocation for a new graph.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    spent: Cell<bool>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            spent: Cell::new(false),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Clear all nodes, keeping the allocation, and allow a new backward pass.
    pub fn reset(&mut self) {
        self.nodes.borrow_mut().clear();
        self.spent.set(false);
    }

    #[inline]
    fn push(&self, p0: u32, w0: f64, p1: u32, w1: f64) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len();
        debug_assert!(index < u32::MAX as usize, "tape overflow");
        nodes.push(Node {
            parent: [p0, p1],
            weight: [w0, w1],
        });
        index as u32
    }

    #[inline]
    fn push_leaf(&self) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len() as u32;
        nodes.push(Node {
            parent: [index, index],
            weight: [0.0, 0.0],
        });
        index
    }

    /// Register an input value. Its adjoint is available after `backward`.
    pub fn var(&self, value: f64) -> Var<'_> {
        Var {
            tape: self,
            index: self.push_leaf(),
            value,
        }
    }

    /// A constant participates in the graph but never needs its adjoint.
    pub fn constant(&self, value: f64) -> Var<'_> {
        self.var(value)
    }

    /// Register a block of leaves for consecutive values, returning the
    /// index of the first. Used to bind parameter sets cheaply.
    pub(crate) fn leaf_block(&self, count: usize) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let base = nodes.len() as u32;
        nodes.reserve(count);
        for i in 0..count {
            let index = base + i as u32;
            nodes.push(Node {
                parent: [index, index],
                weight: [0.0, 0.0],
            });
        }
        base
    }

    /// Reconstruct a variable handle for an already-recorded node.
    pub(crate) fn var_at(&self, index: u32, value: f64) -> Var<'_> {
        debug_assert!((index as usize) < self.len());
        Var {
            tape: self,
            index,
            value,
        }
    }

    /// Propagate adjoints from `root` (seeded with 1) back to every node.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        let mut adjoint = Vec::new();
        self.backward_into(root, 1.0, &mut adjoint)?;
        Ok(Gradients { adjoint })
    }

    /// Backward pass with an explicit seed, writing adjoints into a caller
    /// buffer so hot loops can reuse the allocation.
    pub fn backward_into(&self, root: Var<'_>, seed: f64, adjoint: &mut Vec<f64>) -> Result<()> {
        assert!(std::ptr::eq(root.tape, self), "root from another tape");
        if self.spent.replace(true) {
            return Err(Error::StaleTape);
        }
        let nodes = self.nodes.borrow();
        adjoint.clear();
        adjoint.resize(nodes.len(), 0.0);
        adjoint[root.index as usize] = seed;
        for i in (0..nodes.len()).rev() {
            let a = adjoint[i];
            if a == 0.0 {
                continue;
            }
            let n = nodes[i];
            adjoint[n.parent[0] as usize] += a * n.weight[0];
            adjoint[n.parent[1] as usize] += a * n.weight[1];
        }
        Ok(())
    }
}

/// Adjoints produced by one backward pass.
#[derive(Debug)]
pub struct Gradients {
    adjoint: Vec<f64>,
}

impl Gradients {
    /// d(root)/d(var).
    pub fn wrt(&self, var: Var<'_>) -> f64 {
        self.adjoint[var.index as usize]
    }

    pub(crate) fn at_index(&self, index: u32) -> f64 {
        self.adjoint[index as usize]
    }
}

/// A scalar value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: u32,
    value: f64,
}

impl<'t> Var<'t> {
    #[inline]
    pub fn value(self) -> f64 {
        self.value
    }


    #[inline]
    fn unary(self, value: f64, weight: f64) -> Var<'t> {
        Var {
            tape: self.tape,
            index: self.tape.push(self.index, weight, self.index, 0.0),
            value,
        }
    }

    #[inline]
    fn binary(self, other: Var<'t>, value: f64, w_self: f64, w_other: f64) -> Var<'t> {
        debug_assert!(std::ptr::eq(self.tape, other.tape), "vars from different tapes");
        Var {
            tape: self.tape,
            index: self.tape.push(self.index, w_self, other.index, w_other),
            value,
        }
    }

    pub fn exp(self) -> Var<'t> {
        let e = self.value.exp();
        self.unary(e, e)
    }

    /// Natural log with the argument floored at [`GUARD_EPS`].
    pub fn ln(self) -> Var<'t> {
        let a = self.value.max(GUARD_EPS);
        self.unary(a.ln(), 1.0 / a)
    }

    pub fn sin(self) -> Var<'t> {
        self.unary(self.value.sin(), self.value.cos())
    }

    pub fn cos(self) -> Var<'t> {
        self.unary(self.value.cos(), -self.value.sin())
    }

    /// Square root of `max(x, 0)`; the gradient denominator is floored at
    /// [`GUARD_EPS`] so the kink at zero stays finite.
    pub fn sqrt(self) -> Var<'t> {
        let v = self.value.max(0.0).sqrt();
        self.unary(v, 0.5 / v.max(GUARD_EPS))
    }

    pub fn powf(self, p: f64) -> Var<'t> {
        let v = self.value;
        self.unary(v.powf(p), p * v.powf(p - 1.0))
    }

    pub fn powi(self, n: i32) -> Var<'t> {
        let v = self.value;
        self.unary(v.powi(n), f64::from(n) * v.powi(n - 1))
    }

    pub fn tanh(self) -> Var<'t> {
        let t = self.value.tanh();
        self.unary(t, 1.0 - t * t)
    }

    pub fn logistic(self) -> Var<'t> {
        let s = stable_logistic(self.value);
        self.unary(s, s * (1.0 - s))
    }

    pub fn abs(self) -> Var<'t> {
        let w = if self.value >= 0.0 { 1.0 } else { -1.0 };
        self.unary(self.value.abs(), w)
    }

    pub fn max(self, other: Var<'t>) -> Var<'t> {
        if self.value >= other.value {
            self.binary(other, self.value, 1.0, 0.0)
        } else {
            self.binary(other, other.value, 0.0, 1.0)
        }
    }

    pub fn min(self, other: Var<'t>) -> Var<'t> {
        if self.value <= other.value {
            self.binary(other, self.value, 1.0, 0.0)
        } else {
            self.binary(other, other.value, 0.0, 1.0)
        }
    }

    /// self * k for a plain constant, recorded as a single node.
    pub fn scale(self, k: f64) -> Var<'t> {
        self.unary(self.value * k, k)
    }

    /// self + k for a plain constant.
    pub fn offset(self, k: f64) -> Var<'t> {
        self.unary(self.value + k, 1.0)
    }

    pub fn lift(self, value: f64) -> Var<'t> {
        self.tape.constant(value)
    }
}

#[inline]
pub(crate) fn stable_logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl<'t> std::ops::Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, self.value + o.value, 1.0, 1.0)
    }
}

impl<'t> std::ops::Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, self.value - o.value, 1.0, -1.0)
    }
}

impl<'t> std::ops::Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, self.value * o.value, o.value, self.value)
    }
}

impl<'t> std::ops::Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, o: Var<'t>) -> Var<'t> {
        let d = guarded(o.value);
        self.binary(o, self.value / d, 1.0 / d, -self.value / (d * d))
    }
}

impl<'t> std::ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.value, -1.0)
    }
}

impl<'t> std::ops::Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, k: f64) -> Var<'t> {
        self.offset(k)
    }
}

impl<'t> std::ops::Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, k: f64) -> Var<'t> {
        self.offset(-k)
    }
}

impl<'t> std::ops::Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, k: f64) -> Var<'t> {
        self.scale(k)
    }
}

impl<'t> std::ops::Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, k: f64) -> Var<'t> {
        self.scale(1.0 / guarded(k))
    }
}

impl<'t> std::ops::Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, v: Var<'t>) -> Var<'t> {
        v.unary(self - v.value, -1.0)
    }
}

impl<'t> std::ops::Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, v: Var<'t>) -> Var<'t> {
        v.scale(self)
    }
}

impl<'t> std::ops::Div<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn div(self, v: Var<'t>) -> Var<'t> {
        let d = guarded(v.value);
        v.unary(self / d, -self / (d * d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_value_and_gradient() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = x * x;
        assert_eq!(y.value(), 9.0);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x), 6.0);
    }

    #[test]
    fn sin_gradient_at_zero() {
        let tape = Tape::new();
        let x = tape.var(0.0);
        let y = x.sin();
        assert_eq!(y.value(), 0.0);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x), 1.0);
    }

    #[test]
    fn second_backward_is_stale() {
        let tape = Tape::new();
        let x = tape.var(2.0);
        let y = x.exp();
        tape.backward(y).unwrap();
        let err = tape.backward(y).unwrap_err();
        assert!(matches!(err, Error::StaleTape));
    }

    #[test]
    fn reset_allows_new_backward() {
        let mut tape = Tape::new();
        {
            let x = tape.var(2.0);
            let y = x * x;
            tape.backward(y).unwrap();
        }
        tape.reset();
        let x = tape.var(5.0);
        let y = x * x;
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x), 10.0);
    }

    #[test]
    fn division_by_tiny_is_guarded() {
        let tape = Tape::new();
        let a = tape.var(1.0);
        let b = tape.var(0.0);
        let q = a / b;
        assert!(q.value().is_finite());
        assert_eq!(q.value(), 1.0 / GUARD_EPS);
        let b2 = tape.var(-0.0);
        let q2 = tape.var(1.0) / b2;
        assert_eq!(q2.value(), -1.0 / GUARD_EPS);
    }

    #[test]
    fn chain_rule_through_composition() {
        // d/dx exp(sin(x^2)) at x = 0.7
        let x0 = 0.7_f64;
        let tape = Tape::new();
        let x = tape.var(x0);
        let y = (x * x).sin().exp();
        let g = tape.backward(y).unwrap();
        let expect = (x0 * x0).sin().exp() * (x0 * x0).cos() * 2.0 * x0;
        assert!((g.wrt(x) - expect).abs() < 1e-12);
    }
}
