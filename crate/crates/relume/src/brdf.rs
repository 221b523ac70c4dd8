//! Simplified principled BRDF: a Lambertian diffuse lobe plus a single
//! specular lobe built from a spherical-Gaussian normal distribution,
//! Schlick Fresnel, and a two-factor GGX geometry term.

use crate::autodiff::Scalar;
use crate::math::V3;

/// Roughness floor keeping the 1/r^4 distribution bounded.
pub const ROUGHNESS_MIN: f64 = 0.04;

/// Cosine floor for the specular denominator at grazing angles.
pub const COS_EPS: f64 = 1e-4;

/// Surface material parameters: base color in [0,1]^3, roughness and
/// metallic in [0,1].
#[derive(Debug, Clone, Copy)]
pub struct BrdfParams<S> {
    pub base_color: V3<S>,
    pub roughness: S,
    pub metallic: S,
}

impl BrdfParams<f64> {
    pub fn new(base_color: [f64; 3], roughness: f64, metallic: f64) -> Self {
        BrdfParams {
            base_color: V3(base_color),
            roughness,
            metallic,
        }
    }
}

impl<S: Scalar> BrdfParams<S> {
    pub fn lift(exemplar: S, p: &BrdfParams<f64>) -> BrdfParams<S> {
        BrdfParams {
            base_color: V3::lift(exemplar, p.base_color),
            roughness: exemplar.lift(p.roughness),
            metallic: exemplar.lift(p.metallic),
        }
    }
}

/// Geometry of one shading configuration. All directions are unit length
/// and point away from the surface point; `half` bisects view and incident.
#[derive(Debug, Clone, Copy)]
pub struct ShadingFrame<S> {
    pub normal: V3<S>,
    pub view: V3<S>,
    pub incident: V3<S>,
    pub half: V3<S>,
}

impl<S: Scalar> ShadingFrame<S> {
    pub fn new(normal: V3<S>, view: V3<S>, incident: V3<S>) -> Self {
        let half = (view + incident).normalize();
        ShadingFrame {
            normal,
            view,
            incident,
            half,
        }
    }
}

/// Diffuse lobe: (1 - metallic) / pi * base_color.
pub fn diffuse<S: Scalar>(params: &BrdfParams<S>) -> V3<S> {
    let w = (params.metallic.lift(1.0) - params.metallic).scale(1.0 / std::f64::consts::PI);
    params.base_color * w
}

/// Spherical-Gaussian normal distribution with sharpness 2/r^4:
/// D = 1/(pi r^4) * exp(2/r^4 * (h.n - 1)).
pub fn distribution<S: Scalar>(h_dot_n: S, roughness: S) -> S {
    let r = roughness
        .max(roughness.lift(ROUGHNESS_MIN))
        .min(roughness.lift(1.0));
    let r2 = r * r;
    let r4 = r2 * r2;
    let inv_r4 = r.lift(1.0) / r4;
    let amplitude = inv_r4.scale(1.0 / std::f64::consts::PI);
    let exponent = h_dot_n.offset(-1.0) * inv_r4.scale(2.0);
    amplitude * exponent.exp()
}

/// Schlick Fresnel with F0 = 0.04 (1 - m) + b m.
pub fn fresnel<S: Scalar>(o_dot_h: S, base_color: &V3<S>, metallic: S) -> V3<S> {
    let one = metallic.lift(1.0);
    let f0 = V3::splat((one - metallic).scale(0.04)) + *base_color * metallic;
    let pow5 = (one - o_dot_h).powi(5);
    f0 + (V3::splat(one) - f0) * pow5
}

/// Two-factor GGX shadowing: G_GGX(z) = 2z / ((2 - r^2) z + r^2).
pub fn geometry<S: Scalar>(i_dot_n: S, o_dot_n: S, roughness: S) -> S {
    let r2 = roughness * roughness;
    let ggx = |z: S| {
        let num = z.scale(2.0);
        let den = (z.lift(2.0) - r2) * z + r2;
        num / den
    };
    ggx(i_dot_n) * ggx(o_dot_n)
}

/// Full BRDF f = f_d + f_s. Directions below the horizon contribute
/// nothing: the result is zero so the sample drops out of the integral.
pub fn evaluate<S: Scalar>(frame: &ShadingFrame<S>, params: &BrdfParams<S>) -> V3<S> {
    let zero = params.roughness.lift(0.0);
    let i_dot_n = frame.incident.dot(frame.normal);
    let o_dot_n = frame.view.dot(frame.normal);
    if i_dot_n.value() <= 0.0 || o_dot_n.value() <= 0.0 {
        return V3::splat(zero);
    }
    let h_dot_n = frame.half.dot(frame.normal);
    let o_dot_h = frame.view.dot(frame.half);

    let d = distribution(h_dot_n, params.roughness);
    let f = fresnel(o_dot_h, &params.base_color, params.metallic);
    let g = geometry(i_dot_n, o_dot_n, params.roughness);

    let denom = i_dot_n.max(zero.lift(COS_EPS)) * o_dot_n.max(zero.lift(COS_EPS)).scale(4.0);
    let spec_scale = d * g / denom;
    diffuse(params) + f * spec_scale
}
