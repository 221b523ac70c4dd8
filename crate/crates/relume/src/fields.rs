//! The four neural fields: signed distance, BRDF parameters, incident
//! light, and outgoing radiance.
//!
//! Each field is a small MLP over sinusoidally encoded inputs. The
//! evaluation code is generic over the scalar type: `f64` for fast
//! inference, tape variables for training, and dual numbers for spatial
//! derivatives (gradients and Hessians of the distance field remain
//! differentiable with respect to the parameters).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    softplus, AdamParams, Dual3, DualParams, ParamReader, ParamSet, Scalar, SegmentId, Tape,
    TapeBinding, TapeParams,
};
use crate::brdf::BrdfParams;
use crate::error::{Error, Result};
use crate::math::{Vec3, V3};

/// Sinusoidal positional encoding: per input component p, the features
/// (sin(2^k pi p), cos(2^k pi p)) for k = 0..L-1, with the raw inputs
/// passed through first when `include_input` is set.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PositionalEncoding {
    pub num_frequencies: usize,
    pub include_input: bool,
}

impl PositionalEncoding {
    pub fn new(num_frequencies: usize) -> Self {
        PositionalEncoding {
            num_frequencies,
            include_input: true,
        }
    }

    pub fn dim(&self, input_dim: usize) -> usize {
        let base = if self.include_input { 1 } else { 0 };
        input_dim * (base + 2 * self.num_frequencies)
    }

    pub fn encode<S: Scalar>(&self, input: &[S], out: &mut Vec<S>) {
        if self.include_input {
            out.extend_from_slice(input);
        }
        for &p in input {
            for k in 0..self.num_frequencies {
                let freq = (1u64 << k) as f64 * std::f64::consts::PI;
                let scaled = p.scale(freq);
                out.push(scaled.sin());
                out.push(scaled.cos());
            }
        }
    }
}

/// Hidden-layer nonlinearity. The distance field uses softplus so its
/// second derivatives are smooth; the appearance fields use ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    /// softplus(beta x) / beta: near-ReLU for large beta while keeping
    /// smooth second derivatives for the Hessian penalty.
    Softplus { beta: f64 },
    Relu,
}

/// Activation applied to the final layer output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    None,
    Logistic,
    /// exp with the pre-activation clamped to [-30, 15] for stability
    /// under high-dynamic-range supervision.
    Exponential,
    /// radiance_scale * logistic(x), bounding output to [0, scale].
    ScaledLogistic(f64),
}

impl OutputActivation {
    pub fn apply<S: Scalar>(&self, x: S) -> S {
        match *self {
            OutputActivation::None => x,
            OutputActivation::Logistic => x.logistic(),
            OutputActivation::Exponential => {
                let lo = x.lift(-30.0);
                let hi = x.lift(15.0);
                x.max(lo).min(hi).exp()
            }
            OutputActivation::ScaledLogistic(scale) => x.logistic().scale(scale),
        }
    }
}

#[derive(Debug, Clone)]
struct Linear {
    in_dim: usize,
    out_dim: usize,
    /// Offset of the row-major (out x in) weight block within the segment.
    weight_offset: usize,
    /// Offset of the bias block.
    bias_offset: usize,
}

/// An MLP whose parameters live in a [`ParamSet`] segment.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub segment: SegmentId,
    layers: Vec<Linear>,
    /// Hidden layer index whose input is concatenated with the network input.
    skip_at: Option<usize>,
    hidden: HiddenActivation,
    input_dim: usize,
}

/// Architecture of one field network.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetShape {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub skip_at: Option<usize>,
}

impl Default for NetShape {
    fn default() -> Self {
        NetShape {
            hidden_width: 128,
            hidden_layers: 4,
            skip_at: Some(2),
        }
    }
}

impl NetShape {
    pub fn small(width: usize, layers: usize) -> Self {
        NetShape {
            hidden_width: width,
            hidden_layers: layers,
            skip_at: None,
        }
    }
}

enum InitScheme {
    /// He-style init with a zeroed final layer, so logistic heads start at
    /// 0.5 and exponential heads start at 1.
    ZeroHead,
    /// Initialize so the output approximates |x| - radius (a sphere),
    /// assuming the first three input features are the raw position.
    Geometric { radius: f64 },
}

impl Mlp {
    #[allow(clippy::too_many_arguments)]
    fn build(
        name: &str,
        input_dim: usize,
        output_dim: usize,
        shape: NetShape,
        hidden: HiddenActivation,
        init: InitScheme,
        params: &mut ParamSet,
        rng: &mut ChaCha8Rng,
    ) -> Mlp {
        let skip_at = shape.skip_at.filter(|&k| k > 0 && k < shape.hidden_layers);
        let mut layers = Vec::new();
        let mut values = Vec::new();
        let mut shapes = Vec::new();
        let mut in_dim = input_dim;
        for layer in 0..=shape.hidden_layers {
            let is_output = layer == shape.hidden_layers;
            let out_dim = if is_output {
                output_dim
            } else {
                shape.hidden_width
            };
            let extra = if skip_at == Some(layer) { input_dim } else { 0 };
            let fan_in = in_dim + extra;
            layers.push(Linear {
                in_dim: fan_in,
                out_dim,
                weight_offset: values.len(),
                bias_offset: values.len() + fan_in * out_dim,
            });
            for _row in 0..out_dim {
                for col in 0..fan_in {
                    let w = match &init {
                        InitScheme::ZeroHead => {
                            if is_output {
                                0.0
                            } else {
                                gaussian(rng) * (2.0 / fan_in as f64).sqrt()
                            }
                        }
                        InitScheme::Geometric { .. } => {
                            if is_output {
                                // Positive constant weights approximate the
                                // norm of the pre-activation feature vector.
                                std::f64::consts::PI.sqrt() / (fan_in as f64).sqrt()
                                    + 1e-4 * gaussian(rng)
                            } else if layer == 0 && col >= 3 {
                                // Only raw xyz drives the initial geometry;
                                // encoded features fade in during training.
                                0.0
                            } else if skip_at == Some(layer) && col >= in_dim + 3 {
                                0.0
                            } else {
                                gaussian(rng) * (2.0_f64).sqrt() / (out_dim as f64).sqrt()
                            }
                        }
                    };
                    values.push(w);
                }
            }
            shapes.push((out_dim as u32, fan_in as u32));
            for _ in 0..out_dim {
                let b = match &init {
                    InitScheme::Geometric { radius } if is_output => -radius,
                    _ => 0.0,
                };
                values.push(b);
            }
            shapes.push((1, out_dim as u32));
            in_dim = out_dim;
        }
        let segment = params.add_segment(name, values, shapes);
        Mlp {
            segment,
            layers,
            skip_at,
            hidden,
            input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    /// Forward pass. `input` length must match the encoded input dimension.
    pub fn eval<S: Scalar, R: ParamReader<S>>(&self, reader: &R, input: &[S]) -> Vec<S> {
        debug_assert_eq!(input.len(), self.input_dim);
        let mut act: Vec<S> = input.to_vec();
        let mut next: Vec<S> = Vec::new();
        let n_layers = self.layers.len();
        for (li, layer) in self.layers.iter().enumerate() {
            if self.skip_at == Some(li) {
                act.extend_from_slice(input);
            }
            debug_assert_eq!(act.len(), layer.in_dim);
            next.clear();
            for row in 0..layer.out_dim {
                let mut acc = reader.read(self.segment, layer.bias_offset + row);
                let row_off = layer.weight_offset + row * layer.in_dim;
                for (col, &a) in act.iter().enumerate() {
                    acc = acc + reader.read(self.segment, row_off + col) * a;
                }
                if li + 1 < n_layers {
                    acc = match self.hidden {
                        HiddenActivation::Softplus { beta } => {
                            softplus(acc.scale(beta)).scale(1.0 / beta)
                        }
                        HiddenActivation::Relu => acc.max(acc.lift(0.0)),
                    };
                }
                next.push(acc);
            }
            std::mem::swap(&mut act, &mut next);
        }
        act
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; good enough for weight init.
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Signed distance field. Negative inside, positive outside.
pub struct SdfField {
    pub mlp: Mlp,
    pub encoding: PositionalEncoding,
}

impl SdfField {
    pub fn new(
        shape: NetShape,
        pos_frequencies: usize,
        init_radius: f64,
        params: &mut ParamSet,
        rng: &mut ChaCha8Rng,
    ) -> SdfField {
        let encoding = PositionalEncoding::new(pos_frequencies);
        let mlp = Mlp::build(
            "sdf",
            encoding.dim(3),
            1,
            shape,
            HiddenActivation::Softplus { beta: 100.0 },
            InitScheme::Geometric {
                radius: init_radius,
            },
            params,
            rng,
        );
        SdfField { mlp, encoding }
    }

    pub fn eval<S: Scalar, R: ParamReader<S>>(&self, reader: &R, x: V3<S>) -> S {
        let mut features = Vec::with_capacity(self.encoding.dim(3));
        self.encoding.encode(&x.0, &mut features);
        self.mlp.eval(reader, &features)[0]
    }

    /// Distance and spatial gradient. The gradient components stay
    /// differentiable with respect to the parameters (and, when `x` is on
    /// a tape, with respect to `x` itself).
    pub fn eval_with_grad<S: Scalar, R: ParamReader<S>>(
        &self,
        reader: &R,
        x: V3<S>,
    ) -> (S, V3<S>) {
        let inputs = V3([
            Dual3::active(x.0[0], 0),
            Dual3::active(x.0[1], 1),
            Dual3::active(x.0[2], 2),
        ]);
        let dual_reader = DualParams(reader);
        let out = {
            let mut features = Vec::with_capacity(self.encoding.dim(3));
            self.encoding.encode(&inputs.0, &mut features);
            self.mlp.eval(&dual_reader, &features)[0]
        };
        (out.v, V3(out.d))
    }

    /// Distance, gradient, and Hessian via nested forward-over-reverse.
    pub fn eval_with_hessian<S: Scalar, R: ParamReader<S>>(
        &self,
        reader: &R,
        x: V3<S>,
    ) -> (S, V3<S>, [[S; 3]; 3]) {
        let mut inputs = [Dual3::constant(Dual3::constant(x.0[0])); 3];
        for (i, item) in inputs.iter_mut().enumerate() {
            let inner = Dual3::active(x.0[i], i);
            let zero = Dual3::constant(x.0[i].lift(0.0));
            let one = Dual3::constant(x.0[i].lift(1.0));
            let mut d = [zero; 3];
            d[i] = one;
            *item = Dual3 { v: inner, d };
        }
        let reader2 = DualParams(reader);
        let reader3 = DualParams(&reader2);
        let out = {
            let mut features = Vec::with_capacity(self.encoding.dim(3));
            self.encoding.encode(&inputs, &mut features);
            self.mlp.eval(&reader3, &features)[0]
        };
        let value = out.v.v;
        let grad = V3(out.v.d);
        let mut hess = [[value.lift(0.0); 3]; 3];
        for (j, outer) in out.d.iter().enumerate() {
            for i in 0..3 {
                hess[j][i] = outer.d[i];
            }
        }
        (value, grad, hess)
    }
}

/// Surface material field mapping position to principled-BRDF parameters.
pub struct BrdfField {
    pub mlp: Mlp,
    pub encoding: PositionalEncoding,
}

impl BrdfField {
    pub fn new(
        shape: NetShape,
        pos_frequencies: usize,
        params: &mut ParamSet,
        rng: &mut ChaCha8Rng,
    ) -> BrdfField {
        let encoding = PositionalEncoding::new(pos_frequencies);
        let mlp = Mlp::build(
            "brdf",
            encoding.dim(3),
            5,
            shape,
            HiddenActivation::Relu,
            InitScheme::ZeroHead,
            params,
            rng,
        );
        BrdfField { mlp, encoding }
    }

    pub fn eval<S: Scalar, R: ParamReader<S>>(&self, reader: &R, x: V3<S>) -> BrdfParams<S> {
        let mut features = Vec::with_capacity(self.encoding.dim(3));
        self.encoding.encode(&x.0, &mut features);
        let raw = self.mlp.eval(reader, &features);
        BrdfParams {
            base_color: V3([
                OutputActivation::Logistic.apply(raw[0]),
                OutputActivation::Logistic.apply(raw[1]),
                OutputActivation::Logistic.apply(raw[2]),
            ]),
            roughness: OutputActivation::Logistic.apply(raw[3]),
            metallic: OutputActivation::Logistic.apply(raw[4]),
        }
    }
}

fn check_unit<S: Scalar>(direction: V3<S>) -> Result<()> {
    let norm = direction.values().norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalized { norm });
    }
    Ok(())
}

/// Incident light field: radiance arriving at a point from a direction
/// (pointing away from the surface). Strictly positive via an exponential
/// output activation.
pub struct IncidentField {
    pub mlp: Mlp,
    pub pos_encoding: PositionalEncoding,
    pub dir_encoding: PositionalEncoding,
}

impl IncidentField {
    pub fn new(
        shape: NetShape,
        pos_frequencies: usize,
        dir_frequencies: usize,
        params: &mut ParamSet,
        rng: &mut ChaCha8Rng,
    ) -> IncidentField {
        let pos_encoding = PositionalEncoding::new(pos_frequencies);
        let dir_encoding = PositionalEncoding::new(dir_frequencies);
        let mlp = Mlp::build(
            "incident",
            pos_encoding.dim(3) + dir_encoding.dim(3),
            3,
            shape,
            HiddenActivation::Relu,
            InitScheme::ZeroHead,
            params,
            rng,
        );
        IncidentField {
            mlp,
            pos_encoding,
            dir_encoding,
        }
    }

    pub fn radiance<S: Scalar, R: ParamReader<S>>(
        &self,
        reader: &R,
        x: V3<S>,
        direction: V3<S>,
    ) -> Result<V3<S>> {
        check_unit(direction)?;
        let mut features =
            Vec::with_capacity(self.pos_encoding.dim(3) + self.dir_encoding.dim(3));
        self.pos_encoding.encode(&x.0, &mut features);
        self.dir_encoding.encode(&direction.0, &mut features);
        let raw = self.mlp.eval(reader, &features);
        Ok(V3([
            OutputActivation::Exponential.apply(raw[0]),
            OutputActivation::Exponential.apply(raw[1]),
            OutputActivation::Exponential.apply(raw[2]),
        ]))
    }
}

/// Outgoing radiance field: radiance leaving a point toward a direction
/// (pointing from the point to the receiver). Bounded to
/// [0, radiance_scale] by a scaled logistic.
pub struct OutgoingField {
    pub mlp: Mlp,
    pub pos_encoding: PositionalEncoding,
    pub dir_encoding: PositionalEncoding,
    pub radiance_scale: f64,
}

impl OutgoingField {
    pub fn new(
        shape: NetShape,
        pos_frequencies: usize,
        dir_frequencies: usize,
        radiance_scale: f64,
        params: &mut ParamSet,
        rng: &mut ChaCha8Rng,
    ) -> OutgoingField {
        let pos_encoding = PositionalEncoding::new(pos_frequencies);
        let dir_encoding = PositionalEncoding::new(dir_frequencies);
        let mlp = Mlp::build(
            "outgoing",
            pos_encoding.dim(3) + dir_encoding.dim(3),
            3,
            shape,
            HiddenActivation::Relu,
            InitScheme::ZeroHead,
            params,
            rng,
        );
        OutgoingField {
            mlp,
            pos_encoding,
            dir_encoding,
            radiance_scale,
        }
    }

    pub fn radiance<S: Scalar, R: ParamReader<S>>(
        &self,
        reader: &R,
        x: V3<S>,
        direction: V3<S>,
    ) -> Result<V3<S>> {
        check_unit(direction)?;
        let mut features =
            Vec::with_capacity(self.pos_encoding.dim(3) + self.dir_encoding.dim(3));
        self.pos_encoding.encode(&x.0, &mut features);
        self.dir_encoding.encode(&direction.0, &mut features);
        let raw = self.mlp.eval(reader, &features);
        let act = OutputActivation::ScaledLogistic(self.radiance_scale);
        Ok(V3([act.apply(raw[0]), act.apply(raw[1]), act.apply(raw[2])]))
    }
}

/// Fit the distance field to an analytic target by direct regression on
/// values and spatial gradients at random points in a cube of half-width
/// `bound`. Used to bootstrap geometry for material-only experiments.
pub fn pretrain_sdf<F, G>(
    sdf: &SdfField,
    params: &mut ParamSet,
    target: &F,
    target_grad: &G,
    bound: f64,
    steps: usize,
    batch: usize,
    hp: &AdamParams,
    rng: &mut ChaCha8Rng,
) where
    F: Fn(Vec3) -> f64,
    G: Fn(Vec3) -> Vec3,
{
    let mut grad_buf = vec![0.0; params.total_len()];
    let mut adjoint = Vec::new();
    let mut tape = Tape::new();
    for _ in 0..steps {
        tape.reset();
        let mut binding = TapeBinding::new(&tape, params);
        binding.bind(params, sdf.mlp.segment);
        let reader = TapeParams {
            set: params,
            binding: &binding,
        };
        let mut loss = tape.constant(0.0);
        for _ in 0..batch {
            let p = V3([
                rng.gen_range(-bound..bound),
                rng.gen_range(-bound..bound),
                rng.gen_range(-bound..bound),
            ]);
            let x = V3([
                tape.constant(p.0[0]),
                tape.constant(p.0[1]),
                tape.constant(p.0[2]),
            ]);
            let (value, grad) = sdf.eval_with_grad(&reader, x);
            let t = target(p);
            let tg = target_grad(p);
            let mut term = (value - t).abs();
            for i in 0..3 {
                term = term + (grad.0[i] - tg.0[i]).abs().scale(0.3);
            }
            loss = loss + term;
        }
        loss = loss.scale(1.0 / batch as f64);
        tape.backward_into(loss, 1.0, &mut adjoint).unwrap();
        grad_buf.iter_mut().for_each(|g| *g = 0.0);
        binding.accumulate_adjoints(params, &adjoint, &mut grad_buf);
        params.adam_step(sdf.mlp.segment, &grad_buf, hp);
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"RELUMEF1";
const CHECKPOINT_VERSION: u32 = 1;

/// Write every parameter segment to a flat binary checkpoint:
/// magic, version, then per segment its name, layer shapes, and values as
/// little-endian 32-bit floats.
pub fn write_checkpoint(path: &Path, params: &ParamSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(params.segments().len() as u32).to_le_bytes())?;
    for (id, seg) in params.segments().iter().enumerate() {
        let name = seg.name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(seg.shapes.len() as u32).to_le_bytes())?;
        for &(rows, cols) in &seg.shapes {
            w.write_all(&rows.to_le_bytes())?;
            w.write_all(&cols.to_le_bytes())?;
        }
        let values = params.values(id);
        w.write_all(&(values.len() as u64).to_le_bytes())?;
        for &v in values {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One deserialized checkpoint segment.
#[derive(Debug)]
pub struct CheckpointSegment {
    pub name: String,
    pub shapes: Vec<(u32, u32)>,
    pub values: Vec<f32>,
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<CheckpointSegment>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: bad magic bytes",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let nsegs = read_u32(&mut r)? as usize;
    let mut segments = Vec::with_capacity(nsegs);
    for _ in 0..nsegs {
        let name_len = read_u16(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint(format!("{}: invalid segment name", path.display())))?;
        let nshapes = read_u32(&mut r)? as usize;
        let mut shapes = Vec::with_capacity(nshapes);
        for _ in 0..nshapes {
            let rows = read_u32(&mut r)?;
            let cols = read_u32(&mut r)?;
            shapes.push((rows, cols));
        }
        let nvalues = read_u64(&mut r)? as usize;
        let mut values = Vec::with_capacity(nvalues);
        let mut buf = [0u8; 4];
        for _ in 0..nvalues {
            r.read_exact(&mut buf)?;
            values.push(f32::from_le_bytes(buf));
        }
        segments.push(CheckpointSegment {
            name,
            shapes,
            values,
        });
    }
    Ok(segments)
}

/// Install checkpoint values into an existing parameter set, matching
/// segments by name and validating lengths.
pub fn load_checkpoint_into(path: &Path, params: &mut ParamSet) -> Result<()> {
    let segments = read_checkpoint(path)?;
    for seg in &segments {
        let id = params.segment_by_name(&seg.name).ok_or_else(|| {
            Error::Checkpoint(format!(
                "{}: segment '{}' not present in the model",
                path.display(),
                seg.name
            ))
        })?;
        let dst = params.values_mut(id);
        if dst.len() != seg.values.len() {
            return Err(Error::Checkpoint(format!(
                "{}: segment '{}' has {} values, model expects {}",
                path.display(),
                seg.name,
                seg.values.len(),
                dst.len()
            )));
        }
        for (d, &s) in dst.iter_mut().zip(&seg.values) {
            *d = f64::from(s);
        }
    }
    Ok(())
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::RawParams;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn encoding_of_zero_is_all_zero_sin_unit_cos() {
        let enc = PositionalEncoding::new(4);
        let mut out = Vec::new();
        enc.encode(&[0.0f64], &mut out);
        assert_eq!(out.len(), enc.dim(1));
        assert_eq!(out[0], 0.0); // passthrough
        for k in 0..4 {
            assert_eq!(out[1 + 2 * k], 0.0, "sin term {k}");
            assert_eq!(out[2 + 2 * k], 1.0, "cos term {k}");
        }
    }

    #[test]
    fn encoding_first_frequency_at_half() {
        let enc = PositionalEncoding::new(1);
        let mut out = Vec::new();
        enc.encode(&[0.5f64], &mut out);
        // sin(pi/2) = 1, cos(pi/2) = 0
        assert!((out[1] - 1.0).abs() < 1e-15);
        assert!(out[2].abs() < 1e-15);
    }

    #[test]
    fn encoding_is_periodic_with_period_two() {
        let enc = PositionalEncoding::new(5);
        for &p in &[-1.3, 0.0, 0.4, 2.7] {
            let mut a = Vec::new();
            let mut b = Vec::new();
            enc.encode(&[p], &mut a);
            enc.encode(&[p + 2.0], &mut b);
            // skip the passthrough feature, which is not periodic
            for k in 1..a.len() {
                assert!((a[k] - b[k]).abs() < 1e-9, "feature {k} at p = {p}");
            }
        }
    }

    #[test]
    fn geometric_init_is_positive_far_from_origin() {
        let mut params = ParamSet::new();
        let sdf = SdfField::new(NetShape::small(32, 2), 6, 0.5, &mut params, &mut rng(7));
        let reader = RawParams(&params);
        for &p in &[
            V3([2.0, 0.0, 0.0]),
            V3([0.0, -2.0, 0.0]),
            V3([1.5, 1.5, 1.5]),
        ] {
            assert!(sdf.eval(&reader, p) > 0.0, "at {p:?}");
        }
        // and negative-ish at the center
        assert!(sdf.eval(&reader, V3([0.0, 0.0, 0.0])) < 0.0);
    }

    #[test]
    fn sdf_gradient_matches_finite_differences() {
        let mut params = ParamSet::new();
        let sdf = SdfField::new(NetShape::small(24, 2), 4, 0.5, &mut params, &mut rng(3));
        let reader = RawParams(&params);
        let mut r = rng(11);
        for _ in 0..100 {
            let p = V3([
                r.gen_range(-1.0..1.0),
                r.gen_range(-1.0..1.0),
                r.gen_range(-1.0..1.0),
            ]);
            let (_, grad) = sdf.eval_with_grad(&reader, p);
            let h = 1e-5;
            for axis in 0..3 {
                let mut hi = p;
                let mut lo = p;
                hi.0[axis] += h;
                lo.0[axis] -= h;
                let fd = (sdf.eval(&reader, hi) - sdf.eval(&reader, lo)) / (2.0 * h);
                let denom = fd.abs().max(grad.0[axis].abs()).max(1e-6);
                assert!(
                    ((grad.0[axis] - fd) / denom).abs() < 1e-4,
                    "axis {axis}: ad {} fd {fd}",
                    grad.0[axis]
                );
            }
        }
    }

    #[test]
    fn sdf_prefit_approximates_unit_sphere() {
        let mut params = ParamSet::new();
        let sdf = SdfField::new(NetShape::small(48, 2), 4, 0.7, &mut params, &mut rng(5));
        let target = |p: Vec3| p.norm() - 1.0;
        let target_grad = |p: Vec3| p.normalized();
        pretrain_sdf(
            &sdf,
            &mut params,
            &target,
            &target_grad,
            1.4,
            400,
            48,
            &AdamParams {
                lr: 2e-3,
                ..AdamParams::default()
            },
            &mut rng(9),
        );
        let reader = RawParams(&params);
        let at_center = sdf.eval(&reader, V3([0.0, 0.0, 0.0]));
        assert!(
            (at_center + 1.0).abs() < 0.05,
            "G(0) = {at_center}, want -1"
        );
    }

    #[test]
    fn brdf_zero_preactivation_gives_midrange() {
        let mut params = ParamSet::new();
        let brdf = BrdfField::new(NetShape::small(16, 2), 2, &mut params, &mut rng(1));
        // final layer is zero-initialized, so every output is logistic(0)
        let reader = RawParams(&params);
        let p = brdf.eval(&reader, V3([0.3, -0.2, 0.5]));
        assert_eq!(p.base_color.values(), V3([0.5, 0.5, 0.5]));
        assert_eq!(p.roughness, 0.5);
        assert_eq!(p.metallic, 0.5);
    }

    #[test]
    fn brdf_fits_constant_target() {
        let mut params = ParamSet::new();
        let brdf = BrdfField::new(NetShape::small(16, 2), 2, &mut params, &mut rng(2));
        let target = [0.8, 0.2, 0.1, 0.3, 0.0];
        let hp = AdamParams {
            lr: 5e-3,
            ..AdamParams::default()
        };
        let mut grad_buf = vec![0.0; params.total_len()];
        let mut adjoint = Vec::new();
        let mut tape = Tape::new();
        let mut r = rng(4);
        for _ in 0..600 {
            tape.reset();
            let mut binding = TapeBinding::new(&tape, &params);
            binding.bind(&params, brdf.mlp.segment);
            let reader = TapeParams {
                set: &params,
                binding: &binding,
            };
            let mut loss = tape.constant(0.0);
            for _ in 0..16 {
                let x = V3([
                    tape.constant(r.gen_range(-1.0..1.0)),
                    tape.constant(r.gen_range(-1.0..1.0)),
                    tape.constant(r.gen_range(-1.0..1.0)),
                ]);
                let p = brdf.eval(&reader, x);
                let outs = [
                    p.base_color.0[0],
                    p.base_color.0[1],
                    p.base_color.0[2],
                    p.roughness,
                    p.metallic,
                ];
                for (o, t) in outs.iter().zip(&target) {
                    loss = loss + (*o - *t).abs();
                }
            }
            tape.backward_into(loss.scale(1.0 / 16.0), 1.0, &mut adjoint).unwrap();
            grad_buf.iter_mut().for_each(|g| *g = 0.0);
            binding.accumulate_adjoints(&params, &adjoint, &mut grad_buf);
            params.adam_step(brdf.mlp.segment, &grad_buf, &hp);
        }
        let reader = RawParams(&params);
        let p = brdf.eval(&reader, V3([0.1, 0.2, -0.3]));
        let outs = [
            p.base_color.0[0],
            p.base_color.0[1],
            p.base_color.0[2],
            p.roughness,
            p.metallic,
        ];
        for (o, t) in outs.iter().zip(&target) {
            assert!((o - t).abs() < 0.02, "got {o}, want {t}");
        }
    }

    #[test]
    fn incident_zero_preactivation_is_unit_radiance() {
        let mut params = ParamSet::new();
        let light = IncidentField::new(NetShape::small(16, 2), 2, 2, &mut params, &mut rng(6));
        let reader = RawParams(&params);
        let l = light
            .radiance(&reader, V3([0.0, 0.0, 0.0]), V3([0.0, 0.0, 1.0]))
            .unwrap();
        assert_eq!(l.values(), V3([1.0, 1.0, 1.0]));
    }

    #[test]
    fn incident_rejects_unnormalized_direction() {
        let mut params = ParamSet::new();
        let light = IncidentField::new(NetShape::small(16, 2), 2, 2, &mut params, &mut rng(6));
        let reader = RawParams(&params);
        let err = light
            .radiance(&reader, V3([0.0, 0.0, 0.0]), V3([0.0, 0.0, 1.5]))
            .unwrap_err();
        assert!(matches!(err, Error::NotNormalized { .. }));
    }

    #[test]
    fn outgoing_is_bounded_by_radiance_scale() {
        let mut params = ParamSet::new();
        let out = OutgoingField::new(NetShape::small(16, 2), 2, 2, 5.0, &mut params, &mut rng(8));
        let reader = RawParams(&params);
        let l = out
            .radiance(&reader, V3([0.0, 0.0, 0.0]), V3([0.0, 0.0, 1.0]))
            .unwrap();
        assert_eq!(l.values(), V3([2.5, 2.5, 2.5])); // logistic(0) * 5
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn activation_ranges_hold_for_arbitrary_parameters(seed in 0u64..1000, scale in 0.1f64..10.0) {
            let mut params = ParamSet::new();
            let brdf = BrdfField::new(NetShape::small(8, 1), 2, &mut params, &mut rng(seed));
            let light = IncidentField::new(NetShape::small(8, 1), 2, 2, &mut params, &mut rng(seed + 1));
            let out = OutgoingField::new(NetShape::small(8, 1), 2, 2, 4.0, &mut params, &mut rng(seed + 2));
            // randomize all weights, including the zero-initialized heads
            let mut r = rng(seed + 3);
            for id in 0..params.segments().len() {
                for v in params.values_mut(id) {
                    *v = r.gen_range(-3.0..3.0) * scale;
                }
            }
            let reader = RawParams(&params);
            let x = V3([r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)]);
            let d = V3([r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)]).normalized();
            let b = brdf.eval(&reader, x);
            for c in b.base_color.0 {
                prop_assert!((0.0..=1.0).contains(&c));
            }
            prop_assert!((0.0..=1.0).contains(&b.roughness));
            prop_assert!((0.0..=1.0).contains(&b.metallic));
            let li = light.radiance(&reader, x, d).unwrap();
            for c in li.0 {
                prop_assert!(c > 0.0 && c.is_finite());
            }
            let lo = out.radiance(&reader, x, d).unwrap();
            for c in lo.0 {
                prop_assert!((0.0..=4.0).contains(&c));
            }
        }
    }

    #[test]
    fn checkpoint_roundtrip_preserves_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut params = ParamSet::new();
        let _sdf = SdfField::new(NetShape::small(8, 1), 2, 0.5, &mut params, &mut rng(21));
        params.add_segment("density", vec![0.1_f64.ln()], vec![(1, 1)]);
        write_checkpoint(&path, &params).unwrap();

        let mut restored = params.clone();
        for id in 0..restored.segments().len() {
            for v in restored.values_mut(id) {
                *v = 0.0;
            }
        }
        load_checkpoint_into(&path, &mut restored).unwrap();
        for (a, b) in params.all_values().iter().zip(restored.all_values()) {
            // values pass through f32, so compare at f32 precision
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn checkpoint_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"NOTMAGIC__________").unwrap();
        let err = read_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("bad magic"));
    }
}
