//! relume — joint recovery of scene geometry, surface material, and
//! lighting from posed multi-view images.
//!
//! The scene is modeled by four neural fields: a signed distance field for
//! geometry, a principled-BRDF field for material, an incident light field,
//! and an outgoing radiance field. Volume rendering of the outgoing field
//! supervises geometry and appearance; Monte Carlo integration of the
//! rendering equation over the incident field supervises material; an
//! inter-reflection constraint ties the two light fields together by
//! tracing incident rays back to the surfaces that emit them.
//!
//! Start with the runnable programs in `examples/`, or the `relume` binary
//! for batch dataset generation, training, rendering, and evaluation.

pub mod autodiff;
pub mod brdf;
pub mod cli;
pub mod error;
pub mod fields;
pub mod losses;
pub mod math;
pub mod pbr;
pub mod scene;
pub mod trainer;
pub mod volren;

pub use error::{Error, Result};
