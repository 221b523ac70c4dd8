//! Reverse-mode automatic differentiation with nested forward-mode duals.
//!
//! The tape records scalar operations; one backward sweep yields exact
//! gradients for every registered input. [`Dual3`] layers forward-mode
//! tangents on top of any scalar, which is how spatial derivatives of the
//! distance field stay differentiable with respect to the parameters.

mod params;
mod scalar;
mod tape;

pub use params::{
    AdamParams, DualParams, ParamReader, ParamSet, RawParams, Segment, SegmentId, TapeBinding,
    TapeParams,
};
pub use scalar::{softplus, Dual3, Scalar};
pub use tape::{Gradients, Tape, Var, GUARD_EPS};
