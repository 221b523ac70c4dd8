//! Trainable parameter storage, tape binding, and the Adam update.
//!
//! Parameters for all fields live in one flat [`ParamSet`] split into named
//! segments (one per network plus one for the density transform). Values
//! may be read concurrently; gradient accumulation and optimizer steps
//! happen in an exclusive single-writer phase at the end of each training
//! step.

use serde::{Deserialize, Serialize};

use super::scalar::{Dual3, Scalar};
use super::tape::{Gradients, Tape, Var};

pub type SegmentId = usize;

#[derive(Debug, Clone)]
pub struct Segment {
    pub name: String,
    pub start: usize,
    pub len: usize,
    /// Layer shapes (rows, cols) recorded for the checkpoint header.
    pub shapes: Vec<(u32, u32)>,
    /// Optimizer step counter; segments that start training in a later
    /// stage keep correct bias correction.
    pub step: u64,
}

/// Flat storage for all trainable values plus Adam moments.
#[derive(Debug, Default, Clone)]
pub struct ParamSet {
    values: Vec<f64>,
    moment1: Vec<f64>,
    moment2: Vec<f64>,
    segments: Vec<Segment>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_segment(
        &mut self,
        name: &str,
        init: Vec<f64>,
        shapes: Vec<(u32, u32)>,
    ) -> SegmentId {
        let start = self.values.len();
        let len = init.len();
        self.values.extend_from_slice(&init);
        self.moment1.resize(self.values.len(), 0.0);
        self.moment2.resize(self.values.len(), 0.0);
        self.segments.push(Segment {
            name: name.to_string(),
            start,
            len,
            shapes,
            step: 0,
        });
        self.segments.len() - 1
    }

    pub fn total_len(&self) -> usize {
        self.values.len()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, id: SegmentId) -> &Segment {
        &self.segments[id]
    }

    pub fn segment_by_name(&self, name: &str) -> Option<SegmentId> {
        self.segments.iter().position(|s| s.name == name)
    }

    pub fn values(&self, id: SegmentId) -> &[f64] {
        let s = &self.segments[id];
        &self.values[s.start..s.start + s.len]
    }

    pub fn values_mut(&mut self, id: SegmentId) -> &mut [f64] {
        let s = self.segments[id].clone();
        &mut self.values[s.start..s.start + s.len]
    }

    pub fn all_values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, id: SegmentId, offset: usize) -> f64 {
        debug_assert!(offset < self.segments[id].len);
        self.values[self.segments[id].start + offset]
    }

    /// One bias-corrected Adam update over a segment, reading gradients from
    /// a buffer indexed by global parameter position. The caller zeroes the
    /// gradient buffer between steps.
    pub fn adam_step(&mut self, id: SegmentId, grad: &[f64], hp: &AdamParams) {
        let (start, len) = {
            let s = &mut self.segments[id];
            s.step += 1;
            (s.start, s.len)
        };
        let t = self.segments[id].step;
        let c1 = 1.0 - hp.beta1.powi(t as i32);
        let c2 = 1.0 - hp.beta2.powi(t as i32);
        for i in start..start + len {
            let g = grad[i];
            self.moment1[i] = hp.beta1 * self.moment1[i] + (1.0 - hp.beta1) * g;
            self.moment2[i] = hp.beta2 * self.moment2[i] + (1.0 - hp.beta2) * g * g;
            let m_hat = self.moment1[i] / c1;
            let v_hat = self.moment2[i] / c2;
            self.values[i] -= hp.lr * m_hat / (v_hat.sqrt() + hp.epsilon);
        }
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-tape registration of parameter segments as leaf variables.
///
/// Binding a segment pushes its values as consecutive leaves, so a
/// parameter's adjoint is found at `base + offset` after backward.
pub struct TapeBinding<'t> {
    tape: &'t Tape,
    bases: Vec<Option<u32>>,
}

impl<'t> TapeBinding<'t> {
    pub fn new(tape: &'t Tape, set: &ParamSet) -> Self {
        TapeBinding {
            tape,
            bases: vec![None; set.segments().len()],
        }
    }

    pub fn bind(&mut self, set: &ParamSet, id: SegmentId) {
        if self.bases[id].is_some() {
            return;
        }
        let base = self.tape.leaf_block(set.segment(id).len);
        self.bases[id] = Some(base);
    }

    pub fn is_bound(&self, id: SegmentId) -> bool {
        self.bases[id].is_some()
    }

    pub fn read(&self, set: &ParamSet, id: SegmentId, offset: usize) -> Var<'t> {
        let base = self.bases[id].expect("segment not bound to tape");
        self.tape
            .var_at(base + offset as u32, set.get(id, offset))
    }

    /// Accumulate adjoints of every bound segment into a gradient buffer
    /// indexed by global parameter position.
    pub fn accumulate_gradients(&self, set: &ParamSet, grads: &Gradients, out: &mut [f64]) {
        for (id, base) in self.bases.iter().enumerate() {
            let Some(base) = base else { continue };
            let seg = set.segment(id);
            for i in 0..seg.len {
                out[seg.start + i] += grads.at_index(base + i as u32);
            }
        }
    }

    /// Same as [`Self::accumulate_gradients`] but reading from a raw adjoint
    /// buffer filled by [`Tape::backward_into`].
    pub fn accumulate_adjoints(&self, set: &ParamSet, adjoints: &[f64], out: &mut [f64]) {
        for (id, base) in self.bases.iter().enumerate() {
            let Some(base) = base else { continue };
            let seg = set.segment(id);
            let base = *base as usize;
            for i in 0..seg.len {
                out[seg.start + i] += adjoints[base + i];
            }
        }
    }
}

/// Uniform access to parameters from generic field-evaluation code.
pub trait ParamReader<S: Scalar>: Sync {
    fn read(&self, id: SegmentId, offset: usize) -> S;
}

/// Plain values; the fast inference path with no gradient tracking.
pub struct RawParams<'a>(pub &'a ParamSet);

impl ParamReader<f64> for RawParams<'_> {
    fn read(&self, id: SegmentId, offset: usize) -> f64 {
        self.0.get(id, offset)
    }
}

/// Tape-bound values; evaluations record onto the tape for backprop.
pub struct TapeParams<'a, 't> {
    pub set: &'a ParamSet,
    pub binding: &'a TapeBinding<'t>,
}

impl<'t> ParamReader<Var<'t>> for TapeParams<'_, 't> {
    fn read(&self, id: SegmentId, offset: usize) -> Var<'t> {
        self.binding.read(self.set, id, offset)
    }
}

// Tapes are confined to one worker; binding references never cross threads.
unsafe impl Sync for TapeParams<'_, '_> {}

/// Lifts any reader into a dual-number context; parameters are constants
/// with respect to the spatial tangents.
pub struct DualParams<'a, R>(pub &'a R);

impl<S, R> ParamReader<Dual3<S>> for DualParams<'_, R>
where
    S: Scalar,
    R: ParamReader<S>,
{
    fn read(&self, id: SegmentId, offset: usize) -> Dual3<S> {
        Dual3::constant(self.0.read(id, offset))
    }
}
