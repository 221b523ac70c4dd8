//! Scalar training losses and the per-stage weight table.
//!
//! Photometric terms (volume-rendered and physically rendered color) are
//! channel-averaged L1. The geometry regularizers keep the distance field
//! well behaved: unit gradient magnitude, small Hessian, minimal spurious
//! surface, and optional oriented-point-cloud supervision. The material
//! regularizers are bilateral smoothness and a weak Lambertian prior.

use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::math::{Vec3, V3};

/// Channel-averaged L1 distance between two colors. Used for both the
/// volume-rendered and the physically rendered supervision.
pub fn rgb_l1<S: Scalar>(rendered: V3<S>, target: V3<S>) -> S {
    (rendered - target).map(|c| c.abs()).mean()
}

/// | ||grad|| - 1 |, the defining residual of a true distance field.
pub fn eikonal<S: Scalar>(grad: V3<S>) -> S {
    grad.length().offset(-1.0).abs()
}

/// Element-wise 1-norm of the Hessian; discourages rapid gradient change.
pub fn hessian_l1<S: Scalar>(hessian: &[[S; 3]; 3]) -> S {
    let mut acc = hessian[0][0].abs();
    for (j, row) in hessian.iter().enumerate() {
        for (i, h) in row.iter().enumerate() {
            if i == 0 && j == 0 {
                continue;
            }
            acc = acc + h.abs();
        }
    }
    acc
}

/// Smoothed surface-area density: delta_eps(s) = (eps/pi) / (eps^2 + s^2).
pub fn minimal_surface<S: Scalar>(signed_distance: S, eps: f64) -> S {
    let denom = signed_distance * signed_distance + signed_distance.lift(eps * eps);
    let num = signed_distance.lift(eps / std::f64::consts::PI);
    num / denom
}

/// Oriented point-cloud supervision: |G(x)| plus misalignment between the
/// data normal and the field gradient direction.
pub fn point_cloud<S: Scalar>(signed_distance: S, grad: V3<S>, data_normal: Vec3) -> S {
    let g_norm = grad.length();
    let n = V3::lift(signed_distance, data_normal);
    let cosine = n.dot(grad) / g_norm;
    signed_distance.abs() + (cosine.lift(1.0) - cosine)
}

/// Bilateral smoothness: material gradients are cheap where the image is
/// flat, free where the image has edges.
pub fn smoothness<S: Scalar>(
    grad_roughness: V3<S>,
    grad_metallic: V3<S>,
    image_grad_norm: f64,
) -> S {
    let mag = grad_roughness.length() + grad_metallic.length();
    mag.scale((-image_grad_norm).exp())
}

/// Weak prior toward a Lambertian surface: |r - 1| + |m|.
pub fn lambertian<S: Scalar>(roughness: S, metallic: S) -> S {
    roughness.offset(-1.0).abs() + metallic.abs()
}

/// Names of the loss terms, in the order used by logs and reports.
pub const TERM_NAMES: [&str; 9] = [
    "vol", "phys", "ref", "eik", "hess", "surf", "pcd", "smth", "lam",
];

/// One scalar weight per loss term. A zero weight disables the term
/// entirely: it contributes exactly zero and produces no gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub vol: f64,
    pub phys: f64,
    pub reflection: f64,
    pub eikonal: f64,
    pub hessian: f64,
    pub surface: f64,
    pub point_cloud: f64,
    pub smoothness: f64,
    pub lambertian: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            vol: 0.0,
            phys: 0.0,
            reflection: 0.0,
            eikonal: 0.0,
            hessian: 0.0,
            surface: 0.0,
            point_cloud: 0.0,
            smoothness: 0.0,
            lambertian: 0.0,
        }
    }
}

impl LossWeights {
    /// Stage 1: volume rendering plus geometry regularizers; the material
    /// path does not participate. Point-cloud supervision is optional and
    /// only ever active here.
    pub fn sdf_init(use_point_cloud: bool) -> Self {
        LossWeights {
            vol: 1.0,
            eikonal: 0.1,
            hessian: 5e-3,
            surface: 1e-3,
            point_cloud: if use_point_cloud { 1.0 } else { 0.0 },
            ..LossWeights::default()
        }
    }

    /// Stage 2: physically based supervision with frozen geometry, plus
    /// material regularizers and the inter-reflection constraint.
    pub fn mat_init() -> Self {
        LossWeights {
            phys: 1.0,
            reflection: 0.1,
            smoothness: 1e-3,
            lambertian: 1e-4,
            ..LossWeights::default()
        }
    }

    /// Stage 3: everything except point-cloud supervision, with the
    /// geometry smoothness terms downscaled to recover fine detail.
    pub fn joint() -> Self {
        LossWeights {
            vol: 1.0,
            phys: 1.0,
            reflection: 0.1,
            eikonal: 0.1,
            hessian: 5e-4,
            surface: 1e-4,
            smoothness: 1e-3,
            lambertian: 1e-4,
            ..LossWeights::default()
        }
    }

    pub fn as_array(&self) -> [f64; 9] {
        [
            self.vol,
            self.phys,
            self.reflection,
            self.eikonal,
            self.hessian,
            self.surface,
            self.point_cloud,
            self.smoothness,
            self.lambertian,
        ]
    }
}

/// Raw (unweighted) per-term values for one training step, plus the
/// weighted total actually optimized.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossBreakdown {
    pub terms: [f64; 9],
    pub total: f64,
}

impl LossBreakdown {
    pub fn term(&self, name: &str) -> f64 {
        let idx = TERM_NAMES.iter().position(|n| *n == name).expect("term");
        self.terms[idx]
    }

    /// First non-finite term name, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        for (i, t) in self.terms.iter().enumerate() {
            if !t.is_finite() {
                return Some(TERM_NAMES[i]);
            }
        }
        if !self.total.is_finite() {
            return Some("total");
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rgb_l1_closed_forms() {
        assert_eq!(rgb_l1(V3([0.3, 0.4, 0.5]), V3([0.3, 0.4, 0.5])), 0.0);
        assert_eq!(rgb_l1(V3([1.0, 1.0, 1.0]), V3([0.0, 0.0, 0.0])), 1.0);
        assert!((rgb_l1(V3([0.5, 0.0, 0.0]), V3([0.0, 0.0, 0.0])) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn eikonal_closed_forms() {
        assert_eq!(eikonal(V3([1.0, 0.0, 0.0])), 0.0);
        assert_eq!(eikonal(V3([0.0, 0.0, 0.0])), 1.0);
        assert_eq!(eikonal(V3([2.0, 0.0, 0.0])), 1.0);
    }

    #[test]
    fn hessian_closed_forms() {
        let zero = [[0.0; 3]; 3];
        assert_eq!(hessian_l1(&zero), 0.0);
        let mut identity = zero;
        for i in 0..3 {
            identity[i][i] = 1.0;
        }
        assert_eq!(hessian_l1(&identity), 3.0);
    }

    #[test]
    fn minimal_surface_closed_forms() {
        let eps = 0.01;
        assert!((minimal_surface(0.0, eps) - 1.0 / (PI * eps)).abs() < 1e-9);
        assert!((minimal_surface(eps, eps) - 1.0 / (2.0 * PI * eps)).abs() < 1e-9);
        let far = minimal_surface(10.0 * eps, eps);
        assert!((far - (eps / PI) / (101.0 * eps * eps)).abs() < 1e-9);
    }

    #[test]
    fn point_cloud_closed_forms() {
        let n = V3([0.0, 0.0, 1.0]);
        assert_eq!(point_cloud(0.0, V3([0.0, 0.0, 1.0]), n), 0.0);
        assert_eq!(point_cloud(0.5, V3([0.0, 0.0, 2.0]), n), 0.5);
        assert_eq!(point_cloud(0.0, V3([0.0, 0.0, -1.0]), n), 2.0);
    }

    #[test]
    fn smoothness_closed_forms() {
        let zero = V3([0.0, 0.0, 0.0]);
        assert_eq!(smoothness(zero, zero, 0.7), 0.0);
        assert_eq!(smoothness(V3([1.0, 0.0, 0.0]), zero, 0.0), 1.0);
        let half = smoothness(V3([1.0, 0.0, 0.0]), zero, 2.0_f64.ln());
        assert!((half - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lambertian_closed_forms() {
        assert_eq!(lambertian(1.0, 0.0), 0.0);
        assert_eq!(lambertian(0.0, 1.0), 2.0);
        assert_eq!(lambertian(0.5, 0.25), 0.75);
    }

    #[test]
    fn stage_table_matches_activation_pattern() {
        // stage 1: geometry terms on, material terms off
        let s1 = LossWeights::sdf_init(true);
        assert!(s1.vol > 0.0 && s1.eikonal > 0.0 && s1.hessian > 0.0 && s1.surface > 0.0);
        assert!(s1.point_cloud > 0.0);
        assert_eq!(
            (s1.phys, s1.smoothness, s1.lambertian, s1.reflection),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!(LossWeights::sdf_init(false).point_cloud, 0.0);

        // stage 2: material terms on, geometry terms off
        let s2 = LossWeights::mat_init();
        assert!(s2.phys > 0.0 && s2.smoothness > 0.0 && s2.lambertian > 0.0 && s2.reflection > 0.0);
        assert_eq!(
            (s2.vol, s2.eikonal, s2.hessian, s2.surface, s2.point_cloud),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );

        // stage 3: everything but point cloud; hessian and surface downscaled
        let s3 = LossWeights::joint();
        assert_eq!(s3.point_cloud, 0.0);
        assert!(s3.hessian < s1.hessian);
        assert!(s3.surface < s1.surface);
        assert!(s3.vol > 0.0 && s3.phys > 0.0 && s3.reflection > 0.0 && s3.eikonal > 0.0);
    }
}
