//! A common scalar interface so field evaluation, shading, and losses can
//! run on plain `f64`, on tape variables, or on dual numbers without
//! duplicating the numeric code.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::tape::{stable_logistic, Var};

/// Scalar operations shared by `f64`, [`Var`], and [`Dual3`].
///
/// `value` exposes the plain numeric value for branching (comparisons,
/// hit tests); `lift` creates a constant in the same differentiation
/// context as `self`.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn value(self) -> f64;
    fn lift(self, c: f64) -> Self;
    /// Multiply by a plain constant.
    fn scale(self, k: f64) -> Self;
    /// Add a plain constant.
    fn offset(self, k: f64) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    fn powf(self, p: f64) -> Self;
    fn powi(self, n: i32) -> Self;
    fn tanh(self) -> Self;
    fn logistic(self) -> Self;
    fn abs(self) -> Self;
    fn max(self, o: Self) -> Self;
    fn min(self, o: Self) -> Self;

    fn clamp01(self) -> Self {
        let lo = self.lift(0.0);
        let hi = self.lift(1.0);
        self.max(lo).min(hi)
    }
}

impl Scalar for f64 {
    fn value(self) -> f64 {
        self
    }
    fn lift(self, c: f64) -> f64 {
        c
    }
    fn scale(self, k: f64) -> f64 {
        self * k
    }
    fn offset(self, k: f64) -> f64 {
        self + k
    }
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    fn ln(self) -> f64 {
        f64::ln(self)
    }
    fn sin(self) -> f64 {
        f64::sin(self)
    }
    fn cos(self) -> f64 {
        f64::cos(self)
    }
    fn sqrt(self) -> f64 {
        f64::sqrt(self)
    }
    fn powf(self, p: f64) -> f64 {
        f64::powf(self, p)
    }
    fn powi(self, n: i32) -> f64 {
        f64::powi(self, n)
    }
    fn tanh(self) -> f64 {
        f64::tanh(self)
    }
    fn logistic(self) -> f64 {
        stable_logistic(self)
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn max(self, o: f64) -> f64 {
        f64::max(self, o)
    }
    fn min(self, o: f64) -> f64 {
        f64::min(self, o)
    }
}

impl<'t> Scalar for Var<'t> {
    fn value(self) -> f64 {
        Var::value(self)
    }
    fn lift(self, c: f64) -> Self {
        Var::lift(self, c)
    }
    fn scale(self, k: f64) -> Self {
        Var::scale(self, k)
    }
    fn offset(self, k: f64) -> Self {
        Var::offset(self, k)
    }
    fn exp(self) -> Self {
        Var::exp(self)
    }
    fn ln(self) -> Self {
        Var::ln(self)
    }
    fn sin(self) -> Self {
        Var::sin(self)
    }
    fn cos(self) -> Self {
        Var::cos(self)
    }
    fn sqrt(self) -> Self {
        Var::sqrt(self)
    }
    fn powf(self, p: f64) -> Self {
        Var::powf(self, p)
    }
    fn powi(self, n: i32) -> Self {
        Var::powi(self, n)
    }
    fn tanh(self) -> Self {
        Var::tanh(self)
    }
    fn logistic(self) -> Self {
        Var::logistic(self)
    }
    fn abs(self) -> Self {
        Var::abs(self)
    }
    fn max(self, o: Self) -> Self {
        Var::max(self, o)
    }
    fn min(self, o: Self) -> Self {
        Var::min(self, o)
    }
}

/// Forward-mode value with three tangent channels, nested over any base
/// scalar. `Dual3<Var>` gives spatial derivatives that are themselves
/// differentiable with respect to network parameters (forward-over-reverse);
/// `Dual3<Dual3<Var>>` yields second derivatives for the Hessian penalty.
#[derive(Clone, Copy)]
pub struct Dual3<S> {
    pub v: S,
    pub d: [S; 3],
}

impl<S: Scalar> Dual3<S> {
    pub fn constant(v: S) -> Self {
        let z = v.lift(0.0);
        Dual3 { v, d: [z, z, z] }
    }

    /// An input coordinate seeded with tangent 1 along `axis`.
    pub fn active(v: S, axis: usize) -> Self {
        let z = v.lift(0.0);
        let mut d = [z, z, z];
        d[axis] = v.lift(1.0);
        Dual3 { v, d }
    }
}

impl<S: Scalar> Add for Dual3<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual3 {
            v: self.v + o.v,
            d: [
                self.d[0] + o.d[0],
                self.d[1] + o.d[1],
                self.d[2] + o.d[2],
            ],
        }
    }
}

impl<S: Scalar> Sub for Dual3<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual3 {
            v: self.v - o.v,
            d: [
                self.d[0] - o.d[0],
                self.d[1] - o.d[1],
                self.d[2] - o.d[2],
            ],
        }
    }
}

impl<S: Scalar> Mul for Dual3<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual3 {
            v: self.v * o.v,
            d: [
                self.d[0] * o.v + self.v * o.d[0],
                self.d[1] * o.v + self.v * o.d[1],
                self.d[2] * o.v + self.v * o.d[2],
            ],
        }
    }
}

impl<S: Scalar> Div for Dual3<S> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.v / o.v;
        Dual3 {
            v: q,
            d: [
                (self.d[0] - q * o.d[0]) / o.v,
                (self.d[1] - q * o.d[1]) / o.v,
                (self.d[2] - q * o.d[2]) / o.v,
            ],
        }
    }
}

impl<S: Scalar> Neg for Dual3<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual3 {
            v: -self.v,
            d: [-self.d[0], -self.d[1], -self.d[2]],
        }
    }
}

impl<S: Scalar> Dual3<S> {
    #[inline]
    fn chain(self, v: S, dv: S) -> Self {
        Dual3 {
            v,
            d: [dv * self.d[0], dv * self.d[1], dv * self.d[2]],
        }
    }
}

impl<S: Scalar> Scalar for Dual3<S> {
    fn value(self) -> f64 {
        self.v.value()
    }

    fn lift(self, c: f64) -> Self {
        Dual3::constant(self.v.lift(c))
    }

    fn scale(self, k: f64) -> Self {
        Dual3 {
            v: self.v.scale(k),
            d: [self.d[0].scale(k), self.d[1].scale(k), self.d[2].scale(k)],
        }
    }

    fn offset(self, k: f64) -> Self {
        Dual3 {
            v: self.v.offset(k),
            d: self.d,
        }
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }

    fn ln(self) -> Self {
        let one = self.v.lift(1.0);
        self.chain(self.v.ln(), one / self.v)
    }

    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }

    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }

    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        let half = self.v.lift(0.5);
        self.chain(r, half / r)
    }

    fn powf(self, p: f64) -> Self {
        self.chain(self.v.powf(p), self.v.powf(p - 1.0).scale(p))
    }

    fn powi(self, n: i32) -> Self {
        self.chain(self.v.powi(n), self.v.powi(n - 1).scale(f64::from(n)))
    }

    fn tanh(self) -> Self {
        let t = self.v.tanh();
        let one = self.v.lift(1.0);
        self.chain(t, one - t * t)
    }

    fn logistic(self) -> Self {
        let s = self.v.logistic();
        let one = self.v.lift(1.0);
        self.chain(s, s * (one - s))
    }

    fn abs(self) -> Self {
        if self.v.value() >= 0.0 {
            Dual3 {
                v: self.v.abs(),
                d: self.d,
            }
        } else {
            Dual3 {
                v: self.v.abs(),
                d: [-self.d[0], -self.d[1], -self.d[2]],
            }
        }
    }

    fn max(self, o: Self) -> Self {
        if self.v.value() >= o.v.value() {
            self
        } else {
            o
        }
    }

    fn min(self, o: Self) -> Self {
        if self.v.value() <= o.v.value() {
            self
        } else {
            o
        }
    }
}

/// Numerically stable softplus, ln(1 + exp(x)), composed from primitives so
/// it differentiates on every scalar type.
pub fn softplus<S: Scalar>(x: S) -> S {
    // max(x, 0) + ln(1 + exp(-|x|))
    let zero = x.lift(0.0);
    x.max(zero) + (x.abs().neg().exp().offset(1.0)).ln()
}
