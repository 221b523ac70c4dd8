//! Small fixed-size vector math shared across the crate.
//!
//! `V3<S>` is generic over the scalar so the same geometry code runs on
//! plain `f64`, on tape variables, and on dual numbers.

use std::ops::{Add, Div, Index, Mul, Neg, Sub};

use crate::autodiff::Scalar;

/// A 3-vector over any scalar type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct V3<S>(pub [S; 3]);

/// Concrete 3-vector of `f64`, used for geometry that carries no gradients.
pub type Vec3 = V3<f64>;

impl Vec3 {
    pub const ZERO: Vec3 = V3([0.0; 3]);

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        if n == 0.0 {
            return V3([0.0, 0.0, 0.0]);
        }
        self / n
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        V3([
            self.0[1] * o.0[2] - self.0[2] * o.0[1],
            self.0[2] * o.0[0] - self.0[0] * o.0[2],
            self.0[0] * o.0[1] - self.0[1] * o.0[0],
        ])
    }

    pub fn is_finite(self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn min_elem(self, o: Vec3) -> Vec3 {
        V3([
            self.0[0].min(o.0[0]),
            self.0[1].min(o.0[1]),
            self.0[2].min(o.0[2]),
        ])
    }

    pub fn max_elem(self, o: Vec3) -> Vec3 {
        V3([
            self.0[0].max(o.0[0]),
            self.0[1].max(o.0[1]),
            self.0[2].max(o.0[2]),
        ])
    }
}

impl<S: Scalar> V3<S> {
    pub fn splat(s: S) -> Self {
        V3([s; 3])
    }

    pub fn x(&self) -> S {
        self.0[0]
    }

    pub fn y(&self) -> S {
        self.0[1]
    }

    pub fn z(&self) -> S {
        self.0[2]
    }

    pub fn dot(self, o: Self) -> S {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn length(self) -> S {
        self.dot(self).sqrt()
    }

    pub fn normalize(self) -> Self {
        let n = self.length();
        V3([self.0[0] / n, self.0[1] / n, self.0[2] / n])
    }

    pub fn scale(self, k: f64) -> Self {
        V3([self.0[0].scale(k), self.0[1].scale(k), self.0[2].scale(k)])
    }

    pub fn map<T: Scalar>(self, f: impl Fn(S) -> T) -> V3<T> {
        V3([f(self.0[0]), f(self.0[1]), f(self.0[2])])
    }

    /// Componentwise product.
    pub fn mul_elem(self, o: Self) -> Self {
        V3([self.0[0] * o.0[0], self.0[1] * o.0[1], self.0[2] * o.0[2]])
    }

    /// Mean of the three components.
    pub fn mean(self) -> S {
        (self.0[0] + self.0[1] + self.0[2]).scale(1.0 / 3.0)
    }

    /// The plain numeric value of each component.
    pub fn values(self) -> Vec3 {
        V3([self.0[0].value(), self.0[1].value(), self.0[2].value()])
    }

    /// Lift an `f64` vector into this scalar context.
    pub fn lift(exemplar: S, v: Vec3) -> Self {
        V3([
            exemplar.lift(v.0[0]),
            exemplar.lift(v.0[1]),
            exemplar.lift(v.0[2]),
        ])
    }
}

impl<S: Scalar> Add for V3<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        V3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<S: Scalar> Sub for V3<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        V3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<S: Scalar> Neg for V3<S> {
    type Output = Self;
    fn neg(self) -> Self {
        V3([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl<S: Scalar> Mul<S> for V3<S> {
    type Output = Self;
    fn mul(self, k: S) -> Self {
        V3([self.0[0] * k, self.0[1] * k, self.0[2] * k])
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, k: f64) -> Vec3 {
        V3([self.0[0] / k, self.0[1] / k, self.0[2] / k])
    }
}

impl<S> Index<usize> for V3<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        &self.0[i]
    }
}

/// Row-major 3x3 matrix, used for camera rotations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        V3([
            self.0[0][0] * v.0[0] + self.0[0][1] * v.0[1] + self.0[0][2] * v.0[2],
            self.0[1][0] * v.0[0] + self.0[1][1] * v.0[1] + self.0[1][2] * v.0[2],
            self.0[2][0] * v.0[0] + self.0[2][1] * v.0[1] + self.0[2][2] * v.0[2],
        ])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Deviation from orthonormality, max |(R Rᵀ − I)_ij|.
    pub fn orthonormality_error(&self) -> f64 {
        let t = self.transpose();
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let mut dot = 0.0;
                for k in 0..3 {
                    dot += self.0[i][k] * t.0[k][j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                err = err.max((dot - expect).abs());
            }
        }
        err
    }

    /// The rotation with the smallest angle that maps `from` onto `to`.
    /// Both inputs must be unit vectors.
    pub fn rotation_between(from: Vec3, to: Vec3) -> Mat3 {
        let c = from.dot(to);
        if c < -1.0 + 1e-12 {
            // Antipodal: rotate 180 degrees around any axis orthogonal to `from`.
            let axis = if from.0[0].abs() < 0.9 {
                from.cross(V3([1.0, 0.0, 0.0])).normalized()
            } else {
                from.cross(V3([0.0, 1.0, 0.0])).normalized()
            };
            return Mat3::rotation_axis_angle(axis, std::f64::consts::PI);
        }
        let v = from.cross(to);
        let k = 1.0 / (1.0 + c);
        // Rodrigues formula specialized to the minimal rotation.
        Mat3([
            [
                v.0[0] * v.0[0] * k + c,
                v.0[0] * v.0[1] * k - v.0[2],
                v.0[0] * v.0[2] * k + v.0[1],
            ],
            [
                v.0[1] * v.0[0] * k + v.0[2],
                v.0[1] * v.0[1] * k + c,
                v.0[1] * v.0[2] * k - v.0[0],
            ],
            [
                v.0[2] * v.0[0] * k - v.0[1],
                v.0[2] * v.0[1] * k + v.0[0],
                v.0[2] * v.0[2] * k + c,
            ],
        ])
    }

    pub fn rotation_axis_angle(axis: Vec3, angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        let [x, y, z] = axis.0;
        Mat3([
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ])
    }
}
