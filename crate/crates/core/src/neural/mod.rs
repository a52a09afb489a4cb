//! Fully connected ReLU network with exact backpropagation and Adam.
//!
//! Parameters live in one flat vector; layer `l` occupies a weight block
//! `out × in` (row-major) followed by its `out` biases. Gradients and Adam
//! moments share the same layout, so the optimizer is a plain loop.

mod checkpoint;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `3 → 64 → 128 → 64 → 64 → 2`.
pub const DEFAULT_DIMS: [usize; 6] = [3, 64, 128, 64, 64, 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("network needs at least an input and an output layer")]
    TooFewLayers,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MLPParams {
    pub layer_dims: Vec<usize>,
    /// All weights and biases, layer by layer.
    pub values: Vec<f64>,
    pub seed: u64,
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl MLPParams {
    /// Glorot-uniform weights, zero biases.
    pub fn glorot(dims: &[usize], seed: u64) -> Result<Self, NeuralError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(NeuralError::TooFewLayers);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(param_count(dims));
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            values.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)));
            values.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(MLPParams {
            layer_dims: dims.to_vec(),
            values,
            seed,
        })
    }

    /// Parameters from explicit per-layer `(weights, biases)` blocks.
    pub fn from_layers(dims: &[usize], layers: &[(Vec<f64>, Vec<f64>)]) -> Result<Self, NeuralError> {
        if dims.len() < 2 || layers.len() != dims.len() - 1 {
            return Err(NeuralError::TooFewLayers);
        }
        let mut values = Vec::with_capacity(param_count(dims));
        for (l, (w, b)) in layers.iter().enumerate() {
            if w.len() != dims[l] * dims[l + 1] || b.len() != dims[l + 1] {
                return Err(NeuralError::Shape(format!("layer {l} blocks do not match dims")));
            }
            values.extend_from_slice(w);
            values.extend_from_slice(b);
        }
        Ok(MLPParams {
            layer_dims: dims.to_vec(),
            values,
            seed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layer_count(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Offset of layer `l`'s weight block; its biases follow at `+ in*out`.
    fn offset(&self, l: usize) -> usize {
        param_count(&self.layer_dims[..=l])
    }

    pub fn weights(&self, l: usize) -> &[f64] {
        let (i, o) = (self.layer_dims[l], self.layer_dims[l + 1]);
        let s = self.offset(l);
        &self.values[s..s + i * o]
    }

    pub fn biases(&self, l: usize) -> &[f64] {
        let (i, o) = (self.layer_dims[l], self.layer_dims[l + 1]);
        let s = self.offset(l) + i * o;
        &self.values[s..s + o]
    }
}

/// Network with the default architecture.
pub fn init_params(seed: u64) -> MLPParams {
    MLPParams::glorot(&DEFAULT_DIMS, seed).expect("default dims are valid")
}

/// Row-major inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Batch {
    pub fn new(inputs: Vec<f64>, targets: Vec<f64>, input_dim: usize, output_dim: usize) -> Result<Self, NeuralError> {
        if input_dim == 0 || output_dim == 0 || inputs.len() % input_dim != 0 || targets.len() % output_dim != 0 {
            return Err(NeuralError::Shape("ragged batch".into()));
        }
        if inputs.len() / input_dim != targets.len() / output_dim {
            return Err(NeuralError::Shape(format!(
                "{} input rows vs {} target rows",
                inputs.len() / input_dim,
                targets.len() / output_dim
            )));
        }
        if inputs.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(NeuralError::Shape("batch contains non-finite values".into()));
        }
        Ok(Batch {
            inputs,
            targets,
            input_dim,
            output_dim,
        })
    }

    pub fn rows(&self) -> usize {
        self.inputs.len() / self.input_dim
    }

    /// Concatenation of `self` with itself.
    pub fn duplicated(&self) -> Batch {
        let mut b = self.clone();
        b.inputs.extend_from_slice(&self.inputs);
        b.targets.extend_from_slice(&self.targets);
        b
    }

    fn check(&self, p: &MLPParams) -> Result<(), NeuralError> {
        if self.rows() == 0 {
            return Err(NeuralError::EmptyBatch);
        }
        if self.input_dim != p.input_dim() || self.output_dim != p.output_dim() {
            return Err(NeuralError::Shape(format!(
                "batch is {}→{} but network is {}→{}",
                self.input_dim,
                self.output_dim,
                p.input_dim(),
                p.output_dim()
            )));
        }
        Ok(())
    }
}

/// Affine map of each input coordinate from `[lo, hi]` onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl InputScaling {
    pub fn identity(dim: usize) -> Self {
        InputScaling {
            lo: vec![-1.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .enumerate()
            .map(|(k, &v)| {
                let d = self.lo.len();
                let (lo, hi) = (self.lo[k % d], self.hi[k % d]);
                if hi > lo {
                    2.0 * (v - lo) / (hi - lo) - 1.0
                } else {
                    v - lo
                }
            })
            .collect()
    }
}

/// `C = A · B (+ C)` for row-major `A: m×k`; `b_t` selects `B = Wᵀ` for a
/// row-major `W: n×k`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], accumulate: bool) {
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: slice lengths cover m*k, k*n and m*n with the given strides.
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Pre-activations of every layer for a batch; the last entry is the output.
struct Trace {
    rows: usize,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

fn forward_trace(p: &MLPParams, inputs: &[f64], rows: usize) -> Trace {
    let layers = p.layer_count();
    let mut pre = Vec::with_capacity(layers);
    let mut post: Vec<Vec<f64>> = Vec::with_capacity(layers);
    for l in 0..layers {
        let (din, dout) = (p.layer_dims[l], p.layer_dims[l + 1]);
        let input = if l == 0 { inputs } else { &post[l - 1][..] };
        let mut z = Vec::with_capacity(rows * dout);
        for _ in 0..rows {
            z.extend_from_slice(p.biases(l));
        }
        gemm(rows, din, dout, input, false, p.weights(l), true, &mut z, true);
        if l + 1 < layers {
            post.push(z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect());
        }
        pre.push(z);
    }
    Trace { rows, pre, post }
}

/// Network outputs for `rows` row-major inputs.
pub fn forward_batch(p: &MLPParams, inputs: &[f64]) -> Vec<f64> {
    let rows = inputs.len() / p.input_dim();
    forward_trace(p, inputs, rows).pre.pop().unwrap()
}

/// Output for one input vector; same arithmetic as a one-row batch.
pub fn forward(p: &MLPParams, input: &[f64]) -> Vec<f64> {
    forward_batch(p, input)
}

/// Per-output-component mean squared errors; the loss is their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct LossParts {
    pub components: Vec<f64>,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.components.iter().sum()
    }
}

fn loss_parts(outputs: &[f64], b: &Batch) -> LossParts {
    let d = b.output_dim;
    let rows = b.rows() as f64;
    let mut comps = vec![0.0; d];
    for (o, t) in outputs.chunks_exact(d).zip(b.targets.chunks_exact(d)) {
        for c in 0..d {
            let r = o[c] - t[c];
            comps[c] += r * r;
        }
    }
    LossParts {
        components: comps.into_iter().map(|s| s / rows).collect(),
    }
}

pub fn loss(p: &MLPParams, b: &Batch) -> Result<LossParts, NeuralError> {
    b.check(p)?;
    Ok(loss_parts(&forward_batch(p, &b.inputs), b))
}

/// Loss and its exact gradient with respect to every parameter.
pub fn loss_and_grad(p: &MLPParams, b: &Batch) -> Result<(LossParts, Vec<f64>), NeuralError> {
    b.check(p)?;
    let trace = forward_trace(p, &b.inputs, b.rows());
    let rows = trace.rows;
    let layers = p.layer_count();
    let out = &trace.pre[layers - 1];
    let parts = loss_parts(out, b);

    let scale = 2.0 / rows as f64;
    let mut delta: Vec<f64> = out.iter().zip(&b.targets).map(|(o, t)| scale * (o - t)).collect();
    let mut grad = vec![0.0; p.len()];
    for l in (0..layers).rev() {
        let (din, dout) = (p.layer_dims[l], p.layer_dims[l + 1]);
        let input = if l == 0 { &b.inputs[..] } else { &trace.post[l - 1][..] };
        let off = p.offset(l);
        let (gw, gb) = grad[off..off + din * dout + dout].split_at_mut(din * dout);
        // dW = deltaᵀ · input
        gemm(dout, rows, din, &delta, true, input, false, gw, false);
        for row in delta.chunks_exact(dout) {
            for (g, d) in gb.iter_mut().zip(row) {
                *g += d;
            }
        }
        if l > 0 {
            let mut prev = vec![0.0; rows * din];
            gemm(rows, dout, din, &delta, false, p.weights(l), false, &mut prev, false);
            for (d, &z) in prev.iter_mut().zip(&trace.pre[l - 1]) {
                if z <= 0.0 {
                    *d = 0.0;
                }
            }
            delta = prev;
        }
    }
    Ok((parts, grad))
}

pub fn grad(p: &MLPParams, b: &Batch) -> Result<Vec<f64>, NeuralError> {
    loss_and_grad(p, b).map(|(_, g)| g)
}

/// Adam moments and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `p` in place.
pub fn adam_step(p: &mut MLPParams, g: &[f64], s: &mut AdamState) -> Result<(), NeuralError> {
    if g.len() != p.len() || s.m.len() != p.len() || s.v.len() != p.len() {
        return Err(NeuralError::Shape(format!(
            "{} params, {} gradients, {} moments",
            p.len(),
            g.len(),
            s.m.len()
        )));
    }
    s.step_count += 1;
    let t = s.step_count as i32;
    let c1 = 1.0 - s.beta1.powi(t);
    let c2 = 1.0 - s.beta2.powi(t);
    for i in 0..p.values.len() {
        let gi = g[i];
        s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * gi;
        s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * gi * gi;
        let m_hat = s.m[i] / c1;
        let v_hat = s.v[i] / c2;
        p.values[i] -= s.lr * m_hat / (v_hat.sqrt() + s.eps_hat);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_threshold")]
    pub loss_threshold: f64,
    /// Epochs over which the best loss must improve by `plateau_tol` (relative).
    #[serde(default = "default_plateau_window")]
    pub plateau_window: usize,
    #[serde(default = "default_plateau_tol")]
    pub plateau_tol: f64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Supplied by the surrounding run configuration.
    #[serde(skip)]
    pub seed: u64,
}

fn default_max_epochs() -> usize {
    100_000
}
fn default_threshold() -> f64 {
    1e-3
}
fn default_plateau_window() -> usize {
    2000
}
fn default_plateau_tol() -> f64 {
    1e-6
}
fn default_lr() -> f64 {
    1e-3
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: default_max_epochs(),
            loss_threshold: default_threshold(),
            plateau_window: default_plateau_window(),
            plateau_tol: default_plateau_tol(),
            lr: default_lr(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Threshold,
    Plateau,
    MaxEpochs,
}

/// Window length for the monotone-envelope check.
pub const ENVELOPE_WINDOW: usize = 500;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest loss seen, from epoch `best_epoch`.
    pub params: MLPParams,
    /// Total loss before each update.
    pub history: Vec<f64>,
    /// Loss of `params`.
    pub final_loss: LossParts,
    /// Number of optimizer steps taken.
    pub epochs: usize,
    pub best_epoch: usize,
    pub stop: StopReason,
    /// Some block minimum of the history rose above the previous block's.
    pub unstable: bool,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("training diverged at epoch {epoch} (loss not finite)")]
    Diverged { epoch: usize, history: Vec<f64> },
}

/// True if minima of consecutive `window`-epoch blocks ever increase.
pub fn envelope_violated(history: &[f64], window: usize) -> bool {
    let mins: Vec<f64> = history
        .chunks(window.max(1))
        .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    mins.windows(2).any(|w| w[1] > w[0])
}

/// Full-batch Adam from a Glorot initialization seeded by `cfg.seed`.
pub fn train(b: &Batch, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let dims: Vec<usize> = if b.input_dim == DEFAULT_DIMS[0] && b.output_dim == DEFAULT_DIMS[5] {
        DEFAULT_DIMS.to_vec()
    } else {
        let mut d = DEFAULT_DIMS.to_vec();
        d[0] = b.input_dim;
        d[5] = b.output_dim;
        d
    };
    let params = MLPParams::glorot(&dims, cfg.seed)?;
    train_from(params, b, cfg)
}

/// Same as [`train`], starting from the given parameters.
pub fn train_from(mut params: MLPParams, b: &Batch, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    b.check(&params)?;
    let mut state = AdamState::new(params.len(), cfg.lr);
    let mut history = Vec::new();
    let mut best = Vec::new();
    let mut kept = (params.clone(), LossParts { components: Vec::new() }, 0);
    let mut epoch = 0;
    loop {
        let (parts, g) = loss_and_grad(&params, b)?;
        let total = parts.total();
        if !total.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::Diverged { epoch, history });
        }
        history.push(total);
        let prev_best = best.last().copied().unwrap_or(f64::INFINITY);
        best.push(f64::min(prev_best, total));
        if total < prev_best {
            kept.0.values.copy_from_slice(&params.values);
            kept.1 = parts.clone();
            kept.2 = epoch;
        }

        let stop = if total < cfg.loss_threshold {
            Some(StopReason::Threshold)
        } else if epoch >= cfg.max_epochs {
            Some(StopReason::MaxEpochs)
        } else if cfg.plateau_window > 0 && epoch >= cfg.plateau_window {
            let then = best[epoch - cfg.plateau_window];
            let now = best[epoch];
            ((then - now) < cfg.plateau_tol * then).then_some(StopReason::Plateau)
        } else {
            None
        };
        if let Some(stop) = stop {
            let unstable = envelope_violated(&history, ENVELOPE_WINDOW);
            if unstable {
                log::warn!("loss envelope rose between {ENVELOPE_WINDOW}-epoch windows");
            }
            let (params, final_loss, best_epoch) = kept;
            return Ok(TrainOutcome {
                params,
                history,
                final_loss,
                epochs: epoch,
                best_epoch,
                stop,
                unstable,
            });
        }
        adam_step(&mut params, &g, &mut state)?;
        epoch += 1;
    }
}
