//! Minimal trainable network family with exact analytic gradients.
//!
//! A [`NetworkConfig`] compiles to a [`NetworkPlan`]: a flat list of layer
//! operations plus the shape trace between them. All trainable parameters of
//! a network live in one [`WeightVector`] so the trainer, the weight
//! perturbation sampler, and the sharpness-aware ascent step can treat the
//! whole network as a single flat vector.
//!
//! The family is deliberately small: plain convolutions with leaky ReLU, an
//! optional 1x1 channel-expansion convolution per block, an identity skip
//! around every channel-preserving block, 2x2 average pooling between
//! stages, global average pooling, and a single linear head. Forward and
//! backward passes are written as explicit loops over `f64` buffers, which
//! keeps gradients exact and the whole pipeline deterministic.
//!
//! Three family choices matter for trainability at small width. The skips
//! keep gradients flowing through deep stacks under fan-in-scaled
//! initialization; the leaky activation keeps every channel trainable (with
//! a hard ReLU and only a handful of channels per stage, gradient descent
//! reliably parks narrow networks at the best constant predictor: all
//! features dead, exactly zero gradient); and the fixed activation gain
//! restores the second moment the nonlinearity removes, so signal magnitude
//! is depth-stable and deep stacks see gradients of the same order as
//! shallow ones.

pub mod data;

pub use data::{LabeledDataset, Split};

use crate::error::{Error, Result};
use crate::search_space::NetworkConfig;
use crate::seed;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Which update rule [`train`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Asam,
}

impl std::fmt::Display for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Optimizer::Sgd => write!(f, "sgd"),
            Optimizer::Asam => write!(f, "asam"),
        }
    }
}

impl std::str::FromStr for Optimizer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Optimizer::Sgd),
            "asam" => Ok(Optimizer::Asam),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Peak step size; [`train`] warms up to it, then cosine-decays toward
    /// zero over the run.
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub epochs: usize,
    pub optimizer: Optimizer,
    /// Radius of the adaptive sharpness-aware ascent step.
    pub rho: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            batch_size: 128,
            weight_decay: 0.0005,
            epochs: 30,
            optimizer: Optimizer::Sgd,
            rho: 2.0,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.rho < 0.0 {
            return Err(Error::Config("rho must be >= 0".into()));
        }
        Ok(())
    }
}

/// Named sub-range of a [`WeightVector`] holding one layer's parameters
/// (weights followed by biases). `fan_in` drives the initialization scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpan {
    pub name: String,
    pub start: usize,
    pub len: usize,
    pub fan_in: usize,
}

/// Flat vector of every trainable parameter of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub values: Vec<f64>,
    pub layout: Vec<LayerSpan>,
}

impl WeightVector {
    pub fn validate(&self) -> Result<()> {
        let total: usize = self.layout.iter().map(|s| s.len).sum();
        if total != self.values.len() {
            return Err(Error::ShapeError(format!(
                "layout covers {total} parameters but vector holds {}",
                self.values.len()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::ShapeError(format!("non-finite parameter at index {i}")));
        }
        Ok(())
    }
}

/// Negative-side slope of the leaky ReLU.
const LEAK: f64 = 0.1;

/// Output gain of the activation, chosen so that a unit-second-moment
/// pre-activation keeps a unit second moment after the nonlinearity:
/// sqrt(2 / (1 + LEAK^2)). Fan-in-scaled convolutions preserve the second
/// moment on their own, so with this gain signal magnitude is stable in
/// depth instead of shrinking by ~0.71 per layer.
const ACT_GAIN: f64 = 1.407_195_089_460_583_8;

/// Scale of the learned branch where an identity skip applies: the block
/// computes `skip + RES_BETA * branch`. Damping the branch keeps activation
/// variance from doubling at every skip, which otherwise makes deep
/// candidates diverge at learning rates shallow ones train happily at.
const RES_BETA: f64 = 0.2;

/// Global-norm gradient clip applied by [`train`] before the momentum
/// update. Early high-rate steps on deep plans occasionally produce a
/// gradient spike that throws the weights into the constant-predictor
/// basin, where training then settles; capping the norm removes the spike
/// without changing well-scaled gradients.
const CLIP_NORM: f64 = 5.0;

/// One primitive operation of a compiled network.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Op {
    /// Same-padded stride-1 convolution; `w_off`/`b_off` index the flat
    /// parameter vector.
    Conv { in_c: usize, out_c: usize, k: usize, w_off: usize, b_off: usize },
    /// Leaky ReLU with slope [`LEAK`] for negative inputs and a fixed
    /// output gain of [`ACT_GAIN`].
    LeakyRelu,
    /// Non-overlapping 2x2 mean pooling; odd trailing rows/columns dropped.
    AvgPool2,
    /// Collapses (C, H, W) to (C, 1, 1) by averaging each channel.
    GlobalAvgPool,
    Linear { in_dim: usize, out_dim: usize, w_off: usize, b_off: usize },
    /// Identity skip: activation buffer `src` plus [`RES_BETA`] times the
    /// previous output. Emitted around each block whose output shape equals
    /// its input shape.
    Residual { src: usize },
}

/// A [`NetworkConfig`] compiled to concrete operations with a shape trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkPlan {
    ops: Vec<Op>,
    /// `shapes[i]` is the input shape (C, H, W) of `ops[i]`; the final entry
    /// is the output shape.
    shapes: Vec<(usize, usize, usize)>,
    param_len: usize,
    layout: Vec<LayerSpan>,
}

/// Reusable forward/backward buffers sized for one plan.
pub struct Workspace {
    /// `acts[0]` is the input image; `acts[i + 1]` the output of op `i`.
    acts: Vec<Vec<f64>>,
    /// Gradients with respect to the same buffers.
    dacts: Vec<Vec<f64>>,
}

impl Workspace {
    /// Output of the final layer after a forward pass.
    pub fn logits(&self) -> &[f64] {
        self.acts.last().expect("workspace has at least the input buffer")
    }
}

fn shape_len(s: (usize, usize, usize)) -> usize {
    s.0 * s.1 * s.2
}

impl NetworkPlan {
    pub fn new(config: &NetworkConfig) -> Result<Self> {
        if config.input_resolution == 0 || config.input_channels == 0 || config.head == 0 {
            return Err(Error::Config(
                "resolution, input channels and head must be positive".into(),
            ));
        }
        let mut ops = Vec::new();
        let mut shapes = vec![(config.input_channels, config.input_resolution, config.input_resolution)];
        let mut layout: Vec<LayerSpan> = Vec::new();
        let mut offset = 0usize;

        let push_conv = |ops: &mut Vec<Op>,
                             shapes: &mut Vec<(usize, usize, usize)>,
                             layout: &mut Vec<LayerSpan>,
                             offset: &mut usize,
                             name: String,
                             out_c: usize,
                             k: usize| {
            let (in_c, h, w) = *shapes.last().unwrap();
            let len = out_c * in_c * k * k + out_c;
            ops.push(Op::Conv {
                in_c,
                out_c,
                k,
                w_off: *offset,
                b_off: *offset + out_c * in_c * k * k,
            });
            layout.push(LayerSpan { name, start: *offset, len, fan_in: in_c * k * k });
            *offset += len;
            shapes.push((out_c, h, w));
            ops.push(Op::LeakyRelu);
            shapes.push((out_c, h, w));
        };

        for (s, stage) in config.stages.iter().enumerate() {
            for (b, block) in stage.blocks.iter().enumerate() {
                if block.kernel == 0 || block.kernel % 2 == 0 {
                    return Err(Error::Config(format!(
                        "stage {s} block {b}: kernel must be odd and positive"
                    )));
                }
                if block.expansion == 0 {
                    return Err(Error::Config(format!(
                        "stage {s} block {b}: expansion must be positive"
                    )));
                }
                let block_in = shapes.len() - 1;
                let in_c = shapes.last().unwrap().0;
                if block.expansion > 1 {
                    push_conv(
                        &mut ops,
                        &mut shapes,
                        &mut layout,
                        &mut offset,
                        format!("stage{s}.block{b}.expand"),
                        in_c * block.expansion,
                        1,
                    );
                }
                push_conv(
                    &mut ops,
                    &mut shapes,
                    &mut layout,
                    &mut offset,
                    format!("stage{s}.block{b}.conv"),
                    stage.channels,
                    block.kernel,
                );
                if shapes[block_in] == *shapes.last().unwrap() {
                    ops.push(Op::Residual { src: block_in });
                    shapes.push(*shapes.last().unwrap());
                }
            }
            let (c, h, w) = *shapes.last().unwrap();
            if h >= 2 && w >= 2 {
                ops.push(Op::AvgPool2);
                shapes.push((c, h / 2, w / 2));
            }
        }

        let (c, _, _) = *shapes.last().unwrap();
        ops.push(Op::GlobalAvgPool);
        shapes.push((c, 1, 1));
        let len = c * config.head + config.head;
        ops.push(Op::Linear { in_dim: c, out_dim: config.head, w_off: offset, b_off: offset + c * config.head });
        layout.push(LayerSpan { name: "head".into(), start: offset, len, fan_in: c });
        offset += len;
        shapes.push((config.head, 1, 1));

        Ok(NetworkPlan { ops, shapes, param_len: offset, layout })
    }

    pub fn param_len(&self) -> usize {
        self.param_len
    }

    pub fn layout(&self) -> &[LayerSpan] {
        &self.layout
    }

    /// Multiply-accumulate count of one forward pass (convolutions and the
    /// linear head; pooling and activations contribute none).
    pub fn macs(&self) -> u64 {
        let mut total = 0u64;
        for (i, op) in self.ops.iter().enumerate() {
            let (_, h, w) = self.shapes[i];
            match op {
                Op::Conv { in_c, out_c, k, .. } => {
                    total += (h * w * out_c * in_c * k * k) as u64;
                }
                Op::Linear { in_dim, out_dim, .. } => {
                    total += (in_dim * out_dim) as u64;
                }
                _ => {}
            }
        }
        total
    }

    pub fn workspace(&self) -> Workspace {
        let acts: Vec<Vec<f64>> = self.shapes.iter().map(|&s| vec![0.0; shape_len(s)]).collect();
        let dacts = acts.clone();
        Workspace { acts, dacts }
    }

    fn check_weights(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.param_len {
            return Err(Error::ShapeError(format!(
                "weight vector has {} parameters, plan expects {}",
                w.len(),
                self.param_len
            )));
        }
        Ok(())
    }

    fn check_input(&self, image: &[f64]) -> Result<()> {
        let want = shape_len(self.shapes[0]);
        if image.len() != want {
            return Err(Error::ShapeError(format!(
                "input has {} values, plan expects {want}",
                image.len()
            )));
        }
        Ok(())
    }

    /// Runs the network on one image, leaving all activations in `ws`.
    pub fn forward(&self, w: &[f64], image: &[f64], ws: &mut Workspace) -> Result<()> {
        self.check_weights(w)?;
        self.check_input(image)?;
        ws.acts[0].copy_from_slice(image);
        for (i, op) in self.ops.iter().enumerate() {
            let (head, tail) = ws.acts.split_at_mut(i + 1);
            let input = &head[i];
            let output = &mut tail[0];
            let (in_c, h, wd) = self.shapes[i];
            match *op {
                Op::Conv { in_c: ic, out_c, k, w_off, b_off } => {
                    debug_assert_eq!(ic, in_c);
                    conv_forward(input, output, w, ic, out_c, h, wd, k, w_off, b_off);
                }
                Op::LeakyRelu => {
                    for (o, &x) in output.iter_mut().zip(input.iter()) {
                        *o = ACT_GAIN * if x > 0.0 { x } else { LEAK * x };
                    }
                }
                Op::AvgPool2 => avgpool2_forward(input, output, in_c, h, wd),
                Op::GlobalAvgPool => {
                    let hw = (h * wd) as f64;
                    for c in 0..in_c {
                        output[c] = input[c * h * wd..(c + 1) * h * wd].iter().sum::<f64>() / hw;
                    }
                }
                Op::Linear { in_dim, out_dim, w_off, b_off } => {
                    for o in 0..out_dim {
                        let row = &w[w_off + o * in_dim..w_off + (o + 1) * in_dim];
                        let mut acc = w[b_off + o];
                        for (wi, xi) in row.iter().zip(input.iter()) {
                            acc += wi * xi;
                        }
                        output[o] = acc;
                    }
                }
                Op::Residual { src } => {
                    let skip = &head[src];
                    for ((o, &x), &s) in output.iter_mut().zip(input.iter()).zip(skip.iter()) {
                        *o = s + RES_BETA * x;
                    }
                }
            }
        }
        Ok(())
    }

    /// Backward pass. Expects the gradient w.r.t. the logits in the last
    /// `dacts` buffer and activations from a matching [`forward`] call;
    /// accumulates parameter gradients into `grad`.
    ///
    /// Every op accumulates into its input gradient buffer, with all buffers
    /// zeroed up front: a skip contributes to an earlier buffer that also
    /// receives the through-path gradient later in the reverse sweep.
    fn backward(&self, w: &[f64], ws: &mut Workspace, grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.param_len);
        let last = ws.dacts.len() - 1;
        for buf in &mut ws.dacts[..last] {
            buf.fill(0.0);
        }
        for (i, op) in self.ops.iter().enumerate().rev() {
            let (in_c, h, wd) = self.shapes[i];
            if let Op::Residual { src } = *op {
                let (dlow, dhigh) = ws.dacts.split_at_mut(i);
                let (dinput, dout) = dhigh.split_at_mut(1);
                let doutput = &dout[0];
                let dsrc = &mut dlow[src];
                for ((di, ds), &go) in
                    dinput[0].iter_mut().zip(dsrc.iter_mut()).zip(doutput.iter())
                {
                    *di += RES_BETA * go;
                    *ds += go;
                }
                continue;
            }
            let (dhead, dtail) = ws.dacts.split_at_mut(i + 1);
            let dinput = &mut dhead[i];
            let doutput = &dtail[0];
            let input = &ws.acts[i];
            match *op {
                Op::Conv { in_c: ic, out_c, k, w_off, b_off } => {
                    conv_backward(input, dinput, doutput, w, grad, ic, out_c, h, wd, k, w_off, b_off);
                }
                Op::LeakyRelu => {
                    for ((di, &x), &go) in dinput.iter_mut().zip(input.iter()).zip(doutput.iter()) {
                        *di += ACT_GAIN * if x > 0.0 { go } else { LEAK * go };
                    }
                }
                Op::AvgPool2 => {
                    let (h2, w2) = (h / 2, wd / 2);
                    for c in 0..in_c {
                        for y in 0..h2 {
                            for x in 0..w2 {
                                let g = doutput[(c * h2 + y) * w2 + x] * 0.25;
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        dinput[(c * h + 2 * y + dy) * wd + 2 * x + dx] += g;
                                    }
                                }
                            }
                        }
                    }
                }
                Op::GlobalAvgPool => {
                    let inv = 1.0 / (h * wd) as f64;
                    for c in 0..in_c {
                        let g = doutput[c] * inv;
                        for di in &mut dinput[c * h * wd..(c + 1) * h * wd] {
                            *di += g;
                        }
                    }
                }
                Op::Linear { in_dim, out_dim, w_off, b_off } => {
                    for o in 0..out_dim {
                        let go = doutput[o];
                        grad[b_off + o] += go;
                        let row = &w[w_off + o * in_dim..w_off + (o + 1) * in_dim];
                        let grow = &mut grad[w_off + o * in_dim..w_off + (o + 1) * in_dim];
                        for i2 in 0..in_dim {
                            grow[i2] += go * input[i2];
                            dinput[i2] += go * row[i2];
                        }
                    }
                }
                Op::Residual { .. } => unreachable!("handled above"),
            }
        }
    }

    /// Class prediction: argmax over logits, ties broken toward the lowest
    /// class index.
    pub fn predict(&self, w: &[f64], image: &[f64], ws: &mut Workspace) -> Result<usize> {
        self.forward(w, image, ws)?;
        Ok(argmax_lowest(ws.logits()))
    }
}

fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    input: &[f64],
    output: &mut [f64],
    w: &[f64],
    in_c: usize,
    out_c: usize,
    h: usize,
    wd: usize,
    k: usize,
    w_off: usize,
    b_off: usize,
) {
    let pad = k / 2;
    for oc in 0..out_c {
        let obase = oc * h * wd;
        output[obase..obase + h * wd].fill(w[b_off + oc]);
        for ic in 0..in_c {
            let ibase = ic * h * wd;
            let wbase = w_off + (oc * in_c + ic) * k * k;
            for dy in 0..k {
                let y_lo = pad.saturating_sub(dy);
                let y_hi = (h + pad).saturating_sub(dy).min(h);
                for dx in 0..k {
                    let wv = w[wbase + dy * k + dx];
                    let x_lo = pad.saturating_sub(dx);
                    let x_hi = (wd + pad).saturating_sub(dx).min(wd);
                    if x_lo >= x_hi || y_lo >= y_hi {
                        continue;
                    }
                    let run = x_hi - x_lo;
                    // output[y][x] += wv * input[y + dy - pad][x + dx - pad]
                    // over the in-bounds rectangle; each row is a strided
                    // axpy the optimizer can vectorize.
                    for y in y_lo..y_hi {
                        let orow = obase + y * wd + x_lo;
                        let irow = ibase + (y + dy - pad) * wd + (x_lo + dx - pad);
                        let (dst, src) = (&mut output[orow..orow + run], &input[irow..irow + run]);
                        for (d, &s) in dst.iter_mut().zip(src.iter()) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    dinput: &mut [f64],
    doutput: &[f64],
    w: &[f64],
    grad: &mut [f64],
    in_c: usize,
    out_c: usize,
    h: usize,
    wd: usize,
    k: usize,
    w_off: usize,
    b_off: usize,
) {
    let pad = k / 2;
    for oc in 0..out_c {
        let obase = oc * h * wd;
        grad[b_off + oc] += doutput[obase..obase + h * wd].iter().sum::<f64>();
        for ic in 0..in_c {
            let ibase = ic * h * wd;
            let wbase = w_off + (oc * in_c + ic) * k * k;
            for dy in 0..k {
                let y_lo = pad.saturating_sub(dy);
                let y_hi = (h + pad).saturating_sub(dy).min(h);
                for dx in 0..k {
                    let x_lo = pad.saturating_sub(dx);
                    let x_hi = (wd + pad).saturating_sub(dx).min(wd);
                    if x_lo >= x_hi || y_lo >= y_hi {
                        continue;
                    }
                    let run = x_hi - x_lo;
                    let wv = w[wbase + dy * k + dx];
                    let mut gw = 0.0;
                    // Mirror of the forward rectangle: the weight gradient is
                    // a dot product of the two rows, the input gradient an
                    // axpy with the flipped roles.
                    for y in y_lo..y_hi {
                        let orow = obase + y * wd + x_lo;
                        let irow = ibase + (y + dy - pad) * wd + (x_lo + dx - pad);
                        let go_row = &doutput[orow..orow + run];
                        let in_row = &input[irow..irow + run];
                        let di_row = &mut dinput[irow..irow + run];
                        for ((&g, &s), d) in go_row.iter().zip(in_row.iter()).zip(di_row.iter_mut()) {
                            gw += g * s;
                            *d += g * wv;
                        }
                    }
                    grad[wbase + dy * k + dx] += gw;
                }
            }
        }
    }
}

fn avgpool2_forward(input: &[f64], output: &mut [f64], c: usize, h: usize, wd: usize) {
    let (h2, w2) = (h / 2, wd / 2);
    for ch in 0..c {
        for y in 0..h2 {
            for x in 0..w2 {
                let base = (ch * h + 2 * y) * wd + 2 * x;
                output[(ch * h2 + y) * w2 + x] =
                    0.25 * (input[base] + input[base + 1] + input[base + wd] + input[base + wd + 1]);
            }
        }
    }
}

/// Number of trainable parameters of a configuration.
pub fn param_count(config: &NetworkConfig) -> Result<usize> {
    Ok(NetworkPlan::new(config)?.param_len())
}

/// Analytic multiply-accumulate count of one forward pass.
pub fn macs(config: &NetworkConfig) -> Result<u64> {
    Ok(NetworkPlan::new(config)?.macs())
}

/// Initializes a network with fan-in-scaled zero-mean Gaussian parameters
/// (std 1/sqrt(fan_in) per layer, biases included). Deterministic per seed.
pub fn build_network(config: &NetworkConfig, rng_seed: u64) -> Result<WeightVector> {
    let plan = NetworkPlan::new(config)?;
    let mut rng = seed::rng(rng_seed);
    let mut values = vec![0.0; plan.param_len()];
    for span in plan.layout() {
        let std = 1.0 / (span.fan_in as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("std is positive and finite");
        for v in &mut values[span.start..span.start + span.len] {
            *v = dist.sample(&mut rng);
        }
    }
    Ok(WeightVector { values, layout: plan.layout().to_vec() })
}

fn check_batch(plan: &NetworkPlan, config: &NetworkConfig, data: &LabeledDataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InsufficientData("empty dataset".into()));
    }
    if data.resolution != config.input_resolution || data.channels != config.input_channels {
        return Err(Error::ShapeError(format!(
            "dataset is {}x{}x{}, network expects {}x{}x{}",
            data.channels,
            data.resolution,
            data.resolution,
            config.input_channels,
            config.input_resolution,
            config.input_resolution
        )));
    }
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= config.head) {
        return Err(Error::ShapeError(format!(
            "label {bad} out of range for head dimension {}",
            config.head
        )));
    }
    let _ = plan;
    Ok(())
}

/// Mean softmax cross-entropy and its exact gradient over the indexed subset.
fn loss_and_grad_indices(
    plan: &NetworkPlan,
    w: &[f64],
    data: &LabeledDataset,
    indices: &[usize],
    ws: &mut Workspace,
    grad: &mut [f64],
) -> Result<f64> {
    plan.check_weights(w)?;
    grad.fill(0.0);
    let n = indices.len() as f64;
    let mut loss = 0.0;
    for &i in indices {
        plan.forward(w, &data.images[i], ws)?;
        let logits = ws.acts.last().expect("logits buffer");
        let label = data.labels[i];
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logits.iter().map(|&l| (l - m).exp()).sum();
        loss += sum_exp.ln() + m - logits[label];
        let dlogits = ws.dacts.last_mut().expect("logit gradient buffer");
        for (d, &l) in dlogits.iter_mut().zip(logits.iter()) {
            *d = ((l - m).exp() / sum_exp) / n;
        }
        dlogits[label] -= 1.0 / n;
        plan.backward(w, ws, grad);
    }
    Ok(loss / n)
}

/// Mean cross-entropy loss and exact analytic gradient on a batch.
pub fn loss_and_grad(
    w: &WeightVector,
    config: &NetworkConfig,
    batch: &LabeledDataset,
) -> Result<(f64, WeightVector)> {
    let plan = NetworkPlan::new(config)?;
    check_batch(&plan, config, batch)?;
    let mut ws = plan.workspace();
    let mut grad = vec![0.0; plan.param_len()];
    let indices: Vec<usize> = (0..batch.len()).collect();
    let loss = loss_and_grad_indices(&plan, &w.values, batch, &indices, &mut ws, &mut grad)?;
    Ok((loss, WeightVector { values: grad, layout: plan.layout().to_vec() }))
}

/// Adaptive sharpness-aware ascent step: with `t = |w|` elementwise,
/// `eps = rho * (t^2 g) / ||t g||_2`. Returns `None` when the normalizer
/// falls below 1e-12 (the ascent is skipped rather than divided by zero).
pub fn asam_perturbation(w: &[f64], g: &[f64], rho: f64) -> Option<Vec<f64>> {
    let norm_sq: f64 = w.iter().zip(g.iter()).map(|(&wi, &gi)| {
        let t = wi.abs() * gi;
        t * t
    }).sum();
    let norm = norm_sq.sqrt();
    if norm < 1e-12 {
        return None;
    }
    Some(
        w.iter()
            .zip(g.iter())
            .map(|(&wi, &gi)| rho * wi * wi * gi / norm)
            .collect(),
    )
}

/// Trains a copy of `w` and returns it. SGD uses the classical
/// momentum/weight-decay update `v = mu v + (g + wd w); w -= lr_t v`, with
/// the raw gradient clipped to [`CLIP_NORM`]. ASAM first evaluates the
/// gradient at the adaptively perturbed point `w + eps`
/// and descends with that gradient from the unperturbed weights. The step
/// size follows [`schedule`]: a short linear warmup into a cosine decay
/// toward zero, so runs explore early and settle late instead of orbiting
/// a minimum at constant rate. Epoch-level
/// shuffling is seeded; the whole trajectory is a pure function of the
/// arguments.
/// Step-size multiplier at `step` of `total_steps`: linear warmup over the
/// first tenth of the run, then cosine decay to zero. Deep plans see chaotic
/// losses when the first steps run at full rate; ramping in keeps the early
/// trajectory inside the basin the decay phase then settles.
fn schedule(step: usize, total_steps: usize) -> f64 {
    let warmup = (total_steps as f64 * 0.1).ceil();
    let s = step as f64;
    if s < warmup {
        (s + 1.0) / warmup
    } else {
        let progress = (s - warmup) / (total_steps as f64 - warmup).max(1.0);
        0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

pub fn train(
    w: &WeightVector,
    config: &NetworkConfig,
    data: &LabeledDataset,
    tc: &TrainConfig,
) -> Result<WeightVector> {
    tc.validate()?;
    let plan = NetworkPlan::new(config)?;
    check_batch(&plan, config, data)?;
    plan.check_weights(&w.values)?;

    let mut cur = w.values.clone();
    let mut velocity = vec![0.0; cur.len()];
    let mut grad = vec![0.0; cur.len()];
    let mut perturbed = vec![0.0; cur.len()];
    let mut ws = plan.workspace();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0usize;
    let batches_per_epoch = data.len().div_ceil(tc.batch_size);
    let total_steps = (tc.epochs * batches_per_epoch).max(1);

    for epoch in 0..tc.epochs {
        let mut rng = seed::rng(seed::mix(tc.rng_seed, &[0xE70C, epoch as u64]));
        order.shuffle(&mut rng);
        for batch in order.chunks(tc.batch_size) {
            let loss = loss_and_grad_indices(&plan, &cur, data, batch, &mut ws, &mut grad)?;
            if !loss.is_finite() {
                return Err(Error::DivergenceError { step });
            }
            if tc.optimizer == Optimizer::Asam && tc.rho > 0.0 {
                if let Some(eps) = asam_perturbation(&cur, &grad, tc.rho) {
                    for ((p, &c), &e) in perturbed.iter_mut().zip(cur.iter()).zip(eps.iter()) {
                        *p = c + e;
                    }
                    let ascent_loss =
                        loss_and_grad_indices(&plan, &perturbed, data, batch, &mut ws, &mut grad)?;
                    if !ascent_loss.is_finite() {
                        return Err(Error::DivergenceError { step });
                    }
                }
            }
            let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gnorm > CLIP_NORM {
                let scale = CLIP_NORM / gnorm;
                for g in grad.iter_mut() {
                    *g *= scale;
                }
            }
            for ((v, g), &c) in velocity.iter_mut().zip(grad.iter_mut()).zip(cur.iter()) {
                *g += tc.weight_decay * c;
                *v = tc.momentum * *v + *g;
            }
            let lr = tc.learning_rate * schedule(step, total_steps);
            for (c, &v) in cur.iter_mut().zip(velocity.iter()) {
                *c -= lr * v;
            }
            step += 1;
        }
    }
    Ok(WeightVector { values: cur, layout: plan.layout().to_vec() })
}

/// Top-1 classification error: the fraction of samples whose argmax logit
/// (ties toward the lowest class index) differs from the label.
pub fn eval_error(w: &WeightVector, config: &NetworkConfig, data: &LabeledDataset) -> Result<f64> {
    let plan = NetworkPlan::new(config)?;
    check_batch(&plan, config, data)?;
    let mut ws = plan.workspace();
    eval_error_plan(&plan, &w.values, data, &mut ws)
}

/// Same as [`eval_error`] but reusing a compiled plan and workspace, for
/// callers that evaluate many weight vectors against one architecture.
pub(crate) fn eval_error_plan(
    plan: &NetworkPlan,
    w: &[f64],
    data: &LabeledDataset,
    ws: &mut Workspace,
) -> Result<f64> {
    let mut wrong = 0usize;
    for i in 0..data.len() {
        if plan.predict(w, &data.images[i], ws)? != data.labels[i] {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search_space::{BlockConfig, NetworkConfig, StageConfig};
    use approx::assert_abs_diff_eq;

    fn tiny_config() -> NetworkConfig {
        NetworkConfig {
            input_resolution: 6,
            input_channels: 1,
            stages: vec![StageConfig {
                channels: 3,
                blocks: vec![BlockConfig { kernel: 3, expansion: 2 }],
            }],
            head: 2,
        }
    }

    fn tiny_data(n: usize, config: &NetworkConfig, seed: u64) -> LabeledDataset {
        let mut rng = seed::rng(seed);
        use rand::Rng;
        let px = config.input_channels * config.input_resolution * config.input_resolution;
        let images = (0..n).map(|_| (0..px).map(|_| rng.gen::<f64>()).collect()).collect();
        let labels = (0..n).map(|_| rng.gen_range(0..config.head)).collect();
        LabeledDataset {
            channels: config.input_channels,
            resolution: config.input_resolution,
            images,
            labels,
            split: Split::Train,
        }
    }

    #[test]
    fn mlp_2_3_1_has_13_parameters() {
        // A 1x1-resolution network with 1x1 kernels is exactly an MLP:
        // 2 inputs -> 3 hidden -> 1 output, biases included.
        let config = NetworkConfig {
            input_resolution: 1,
            input_channels: 2,
            stages: vec![StageConfig {
                channels: 3,
                blocks: vec![BlockConfig { kernel: 1, expansion: 1 }],
            }],
            head: 1,
        };
        assert_eq!(param_count(&config).unwrap(), 13);
    }

    #[test]
    fn conv_1_to_4_contributes_40_parameters() {
        let config = NetworkConfig {
            input_resolution: 8,
            input_channels: 1,
            stages: vec![StageConfig {
                channels: 4,
                blocks: vec![BlockConfig { kernel: 3, expansion: 1 }],
            }],
            head: 2,
        };
        // 3x3 conv 1 -> 4 with bias: 9*4 + 4 = 40; head: 4*2 + 2 = 10.
        assert_eq!(param_count(&config).unwrap(), 50);
        let w = build_network(&config, 0).unwrap();
        assert_eq!(w.values.len(), 50);
        let conv_span = &w.layout[0];
        assert_eq!(conv_span.len, 40);
    }

    #[test]
    fn adding_a_block_increases_param_count() {
        let mut config = tiny_config();
        let base = param_count(&config).unwrap();
        config.stages[0].blocks.push(BlockConfig { kernel: 3, expansion: 1 });
        assert!(param_count(&config).unwrap() > base);
    }

    #[test]
    fn build_network_is_deterministic_and_seed_sensitive() {
        let config = tiny_config();
        let a = build_network(&config, 7).unwrap();
        let b = build_network(&config, 7).unwrap();
        let c = build_network(&config, 8).unwrap();
        assert_eq!(a.values, b.values);
        assert_ne!(a.values, c.values);
        a.validate().unwrap();
    }

    #[test]
    fn zero_weights_give_uniform_loss() {
        let config = tiny_config();
        let plan = NetworkPlan::new(&config).unwrap();
        let w = WeightVector { values: vec![0.0; plan.param_len()], layout: plan.layout().to_vec() };
        let data = tiny_data(5, &config, 1);
        let (loss, _) = loss_and_grad(&w, &config, &data).unwrap();
        assert_abs_diff_eq!(loss, (config.head as f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn duplicating_the_batch_keeps_loss() {
        let config = tiny_config();
        let w = build_network(&config, 3).unwrap();
        let data = tiny_data(4, &config, 2);
        let mut doubled = data.clone();
        doubled.images.extend(data.images.iter().cloned());
        doubled.labels.extend(data.labels.iter().cloned());
        let (l1, g1) = loss_and_grad(&w, &config, &data).unwrap();
        let (l2, g2) = loss_and_grad(&w, &config, &doubled).unwrap();
        assert_abs_diff_eq!(l1, l2, epsilon = 1e-12);
        for (a, b) in g1.values.iter().zip(g2.values.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let config = tiny_config();
        let w = build_network(&config, 11).unwrap();
        assert!(w.values.len() <= 500);
        let data = tiny_data(3, &config, 12);
        let (_, grad) = loss_and_grad(&w, &config, &data).unwrap();
        let h = 1e-5;
        let mut numeric = vec![0.0; w.values.len()];
        for i in 0..w.values.len() {
            let mut wp = w.clone();
            wp.values[i] += h;
            let (lp, _) = loss_and_grad(&wp, &config, &data).unwrap();
            wp.values[i] = w.values[i] - h;
            let (lm, _) = loss_and_grad(&wp, &config, &data).unwrap();
            numeric[i] = (lp - lm) / (2.0 * h);
        }
        let diff: f64 = grad
            .values
            .iter()
            .zip(numeric.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let ga: f64 = grad.values.iter().map(|x| x * x).sum::<f64>().sqrt();
        let gn: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rel = diff / ga.max(gn).max(1e-12);
        assert!(rel < 1e-4, "relative gradient error {rel}");
    }

    #[test]
    fn gradient_matches_finite_differences_with_skips() {
        // Two blocks per stage: the second block of each stage preserves
        // channels, so the plan carries identity skips.
        let config = NetworkConfig {
            input_resolution: 6,
            input_channels: 1,
            stages: vec![StageConfig {
                channels: 2,
                blocks: vec![
                    BlockConfig { kernel: 3, expansion: 1 },
                    BlockConfig { kernel: 3, expansion: 2 },
                ],
            }],
            head: 2,
        };
        let w = build_network(&config, 31).unwrap();
        let data = tiny_data(3, &config, 32);
        let (_, grad) = loss_and_grad(&w, &config, &data).unwrap();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..w.values.len() {
            let mut wp = w.clone();
            wp.values[i] += h;
            let (lp, _) = loss_and_grad(&wp, &config, &data).unwrap();
            wp.values[i] = w.values[i] - h;
            let (lm, _) = loss_and_grad(&wp, &config, &data).unwrap();
            let num = (lp - lm) / (2.0 * h);
            worst = worst.max((grad.values[i] - num).abs());
        }
        assert!(worst < 1e-6, "worst gradient error {worst}");
    }

    #[test]
    fn zero_weight_block_is_identity_through_skip() {
        // With the extra block's parameters at zero, its conv emits zeros and
        // the skip passes the block input through unchanged, so the deeper
        // network computes exactly the same logits as the shallow one.
        let shallow = NetworkConfig {
            input_resolution: 5,
            input_channels: 1,
            stages: vec![StageConfig {
                channels: 3,
                blocks: vec![BlockConfig { kernel: 3, expansion: 1 }],
            }],
            head: 2,
        };
        let mut deep = shallow.clone();
        deep.stages[0].blocks.push(BlockConfig { kernel: 3, expansion: 1 });

        let ws_shallow = build_network(&shallow, 9).unwrap();
        let plan_deep = NetworkPlan::new(&deep).unwrap();
        let mut vals = vec![0.0; plan_deep.param_len()];
        for span in plan_deep.layout() {
            if span.name == "stage0.block1.conv" {
                continue;
            }
            let src = ws_shallow
                .layout
                .iter()
                .find(|s| s.name == span.name)
                .expect("shared layer");
            assert_eq!(span.len, src.len);
            vals[span.start..span.start + span.len]
                .copy_from_slice(&ws_shallow.values[src.start..src.start + src.len]);
        }

        let plan_shallow = NetworkPlan::new(&shallow).unwrap();
        let mut a = plan_shallow.workspace();
        let mut b = plan_deep.workspace();
        let image: Vec<f64> = (0..25).map(|i| (i as f64) / 25.0).collect();
        plan_shallow.forward(&ws_shallow.values, &image, &mut a).unwrap();
        plan_deep.forward(&vals, &image, &mut b).unwrap();
        assert_eq!(a.logits(), b.logits());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let config = tiny_config();
        let w = build_network(&config, 0).unwrap();
        let mut data = tiny_data(3, &config, 0);
        data.resolution = 5;
        assert!(matches!(loss_and_grad(&w, &config, &data), Err(Error::ShapeError(_))));
    }

    #[test]
    fn zero_epochs_is_identity() {
        let config = tiny_config();
        let w = build_network(&config, 1).unwrap();
        let data = tiny_data(6, &config, 4);
        let tc = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let out = train(&w, &config, &data, &tc).unwrap();
        assert_eq!(out.values, w.values);
    }

    #[test]
    fn asam_with_zero_rho_matches_sgd() {
        let config = tiny_config();
        let w = build_network(&config, 5).unwrap();
        let data = tiny_data(8, &config, 6);
        let base = TrainConfig {
            epochs: 5,
            batch_size: 4,
            rng_seed: 9,
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let sgd = train(&w, &config, &data, &TrainConfig { optimizer: Optimizer::Sgd, ..base.clone() }).unwrap();
        let asam0 = train(
            &w,
            &config,
            &data,
            &TrainConfig { optimizer: Optimizer::Asam, rho: 0.0, ..base },
        )
        .unwrap();
        assert_eq!(sgd.values, asam0.values);
    }

    #[test]
    fn asam_scalar_perturbation() {
        // w = 2, g = 1, rho = 2: eps = 2 * (4 * 1) / |2 * 1| = 4.
        let eps = asam_perturbation(&[2.0], &[1.0], 2.0).unwrap();
        assert_abs_diff_eq!(eps[0], 4.0, epsilon = 1e-15);
    }

    #[test]
    fn asam_perturbation_scales_with_weights() {
        let w = [0.3, -1.2, 0.7];
        let g = [0.5, 0.1, -0.4];
        let base = asam_perturbation(&w, &g, 2.0).unwrap();
        let scaled_w: Vec<f64> = w.iter().map(|x| x * 3.0).collect();
        let scaled = asam_perturbation(&scaled_w, &g, 2.0).unwrap();
        for (s, b) in scaled.iter().zip(base.iter()) {
            assert_abs_diff_eq!(*s, 3.0 * b, epsilon = 1e-12);
        }
    }

    #[test]
    fn asam_skips_ascent_at_zero_weights() {
        assert!(asam_perturbation(&[0.0, 0.0], &[1.0, 1.0], 2.0).is_none());
    }

    #[test]
    fn divergence_reports_step_index() {
        let config = tiny_config();
        let w = build_network(&config, 2).unwrap();
        let data = tiny_data(6, &config, 3);
        let tc = TrainConfig {
            learning_rate: 1e12,
            epochs: 50,
            batch_size: 2,
            ..TrainConfig::default()
        };
        match train(&w, &config, &data, &tc) {
            Err(Error::DivergenceError { step }) => assert!(step > 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn train_is_deterministic() {
        let config = tiny_config();
        let w = build_network(&config, 4).unwrap();
        let data = tiny_data(10, &config, 5);
        let tc = TrainConfig {
            epochs: 3,
            batch_size: 4,
            rng_seed: 77,
            optimizer: Optimizer::Asam,
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let a = train(&w, &config, &data, &tc).unwrap();
        let b = train(&w, &config, &data, &tc).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn eval_error_constant_predictor_is_half_on_balanced_set() {
        let config = tiny_config();
        let plan = NetworkPlan::new(&config).unwrap();
        // All-zero weights give identical logits; ties resolve to class 0.
        let w = WeightVector { values: vec![0.0; plan.param_len()], layout: plan.layout().to_vec() };
        let mut data = tiny_data(8, &config, 7);
        data.labels = vec![0, 1, 0, 1, 0, 1, 0, 1];
        assert_abs_diff_eq!(eval_error(&w, &config, &data).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn eval_error_perfect_and_single_sample() {
        let config = tiny_config();
        let w = build_network(&config, 21).unwrap();
        let mut data = tiny_data(1, &config, 22);
        let plan = NetworkPlan::new(&config).unwrap();
        let mut ws = plan.workspace();
        data.labels[0] = plan.predict(&w.values, &data.images[0], &mut ws).unwrap();
        assert_eq!(eval_error(&w, &config, &data).unwrap(), 0.0);
    }

    #[test]
    fn macs_count_conv_and_head() {
        // 1x1-resolution MLP: conv contributes 1*1*(2*3)=6 MACs, head 3.
        let config = NetworkConfig {
            input_resolution: 1,
            input_channels: 2,
            stages: vec![StageConfig {
                channels: 3,
                blocks: vec![BlockConfig { kernel: 1, expansion: 1 }],
            }],
            head: 1,
        };
        assert_eq!(macs(&config).unwrap(), 6 + 3);
    }

    #[test]
    fn overfits_random_labels() {
        // Memorization sanity: a two-stage net hits zero training error on
        // 20 random-labeled images within 500 epochs for most seeds.
        let config = NetworkConfig {
            input_resolution: 8,
            input_channels: 1,
            stages: vec![
                StageConfig {
                    channels: 6,
                    blocks: vec![BlockConfig { kernel: 5, expansion: 2 }],
                },
                StageConfig {
                    channels: 12,
                    blocks: vec![BlockConfig { kernel: 3, expansion: 2 }],
                },
            ],
            head: 2,
        };
        let mut passes = 0;
        for s in 0..3u64 {
            let data = tiny_data(20, &config, 100 + s);
            let w = build_network(&config, 200 + s).unwrap();
            let tc = TrainConfig {
                epochs: 500,
                batch_size: 20,
                learning_rate: 0.05,
                weight_decay: 0.0,
                rng_seed: s,
                ..TrainConfig::default()
            };
            let trained = train(&w, &config, &data, &tc).unwrap();
            if eval_error(&trained, &config, &data).unwrap() == 0.0 {
                passes += 1;
            }
        }
        assert!(passes >= 2, "only {passes}/3 seeds memorized the batch");
    }
}
