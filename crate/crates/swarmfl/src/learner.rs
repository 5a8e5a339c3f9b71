//! Trajectory-prediction model: an LSTM layer plus a dense output layer,
//! trained with mini-batch SGD and backpropagation through time.
//!
//! Samples are 2-D position sequences. [`encode`] converts absolute positions
//! into successive displacement vectors, which makes the model
//! translation-invariant: the first `input_horizon` displacements form the
//! input sequence and the following `target_horizon` displacements the
//! prediction target. Prediction is autoregressive — each predicted
//! displacement is fed back as the next input.
//!
//! All math is `f64` with a fixed summation order, so training and inference
//! are deterministic for a given `(weights, data, config, seed)`.
//!
//! # Canonical weight layout
//!
//! A [`WeightVector`] is a flat array in this fixed order (gate order within
//! each `4·hidden` block is input gate, forget gate, cell candidate, output
//! gate):
//!
//! 1. input kernel `W_x`, input-major: `[input_dim][4·hidden]`
//! 2. recurrent kernel `U_h`, hidden-major: `[hidden][4·hidden]`
//! 3. gate biases `b`: `[4·hidden]`
//! 4. dense kernel `W_d`, hidden-major: `[hidden][output_dim]`
//! 5. dense bias `b_d`: `[output_dim]`
//!
//! On the wire (chain transactions, fixture files) weights are 32-bit
//! little-endian floats in this same order.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{self, Domain};

/// Architecture of the trajectory predictor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_input_dim")]
    pub input_dim: usize,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_output_dim")]
    pub output_dim: usize,
    /// Number of displacement steps consumed before predicting.
    #[serde(default = "default_input_horizon")]
    pub input_horizon: usize,
    /// Number of displacement steps predicted autoregressively.
    #[serde(default = "default_target_horizon")]
    pub target_horizon: usize,
}

fn default_input_dim() -> usize {
    2
}
fn default_hidden_dim() -> usize {
    25
}
fn default_output_dim() -> usize {
    2
}
fn default_input_horizon() -> usize {
    5
}
fn default_target_horizon() -> usize {
    4
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim: 2,
            hidden_dim: 25,
            output_dim: 2,
            input_horizon: 5,
            target_horizon: 4,
        }
    }
}

impl ModelConfig {
    /// Reduced architecture for gradient checks and fast tests.
    pub fn reduced(hidden_dim: usize) -> Self {
        ModelConfig {
            hidden_dim,
            ..ModelConfig::default()
        }
    }

    /// Total number of trainable weights.
    pub fn n_weights(&self) -> usize {
        let (i, h, o) = (self.input_dim, self.hidden_dim, self.output_dim);
        4 * (h * (i + h) + h) + (h * o + o)
    }

    /// Points per trajectory sample: one more than the displacement count.
    pub fn sample_points(&self) -> usize {
        self.input_horizon + self.target_horizon + 1
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.input_dim != 2 || self.output_dim != 2 {
            return Err(crate::Error::Config(
                "model input_dim and output_dim must be 2 (x,y displacements)".into(),
            ));
        }
        if self.hidden_dim == 0 || self.input_horizon == 0 || self.target_horizon == 0 {
            return Err(crate::Error::Config("model dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// SGD hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
}

fn default_batch_size() -> usize {
    20
}
fn default_epochs() -> usize {
    20
}
fn default_learning_rate() -> f64 {
    0.001
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 20,
            epochs: 20,
            learning_rate: 0.001,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || !(self.learning_rate > 0.0) {
            return Err(crate::Error::Config(
                "train config requires batch_size >= 1, epochs >= 1, learning_rate > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Flat parameter vector in the canonical layout.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn zeros(n: usize) -> Self {
        WeightVector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Wire encoding: 32-bit little-endian floats.
    pub fn to_f32(&self) -> Vec<f32> {
        self.0.iter().map(|&v| v as f32).collect()
    }

    pub fn from_f32(values: &[f32]) -> Self {
        WeightVector(values.iter().map(|&v| v as f64).collect())
    }
}

/// Mean absolute deviation between two weight vectors.
///
/// Panics on length mismatch; vector lengths are validated before any
/// weights reach the contract.
pub fn distance(a: &WeightVector, b: &WeightVector) -> f64 {
    assert_eq!(a.len(), b.len(), "weight vectors differ in length");
    mean_abs_diff(&a.0, &b.0)
}

pub(crate) fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += (x - y).abs();
    }
    acc / a.len() as f64
}

/// One training sample: flat input and target displacement sequences
/// (`input_horizon * 2` and `target_horizon * 2` values).
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// Converts an absolute position sequence into displacement input/target
/// sequences. Requires exactly `cfg.sample_points()` positions.
pub fn encode(cfg: &ModelConfig, positions: &[(f64, f64)]) -> EncodedSample {
    assert_eq!(
        positions.len(),
        cfg.sample_points(),
        "trajectory must have {} points",
        cfg.sample_points()
    );
    let mut input = Vec::with_capacity(cfg.input_horizon * 2);
    let mut target = Vec::with_capacity(cfg.target_horizon * 2);
    for i in 0..positions.len() - 1 {
        let dx = positions[i + 1].0 - positions[i].0;
        let dy = positions[i + 1].1 - positions[i].1;
        if i < cfg.input_horizon {
            input.push(dx);
            input.push(dy);
        } else {
            target.push(dx);
            target.push(dy);
        }
    }
    EncodedSample { input, target }
}

/// Layer-dependent uniform initialization (fan-based symmetric bounds),
/// biases zero. Deterministic per seed.
pub fn init_weights(cfg: &ModelConfig, seed: u64) -> WeightVector {
    let mut r = rng::stream(seed, Domain::InitWeights, 0);
    init_weights_from(cfg, &mut r)
}

pub fn init_weights_from(cfg: &ModelConfig, r: &mut ChaCha8Rng) -> WeightVector {
    let (i, h, o) = (cfg.input_dim, cfg.hidden_dim, cfg.output_dim);
    let mut w = Vec::with_capacity(cfg.n_weights());
    let wx_limit = (6.0 / (i + 4 * h) as f64).sqrt();
    for _ in 0..i * 4 * h {
        w.push(r.gen_range(-wx_limit..wx_limit));
    }
    let uh_limit = (6.0 / (h + 4 * h) as f64).sqrt();
    for _ in 0..h * 4 * h {
        w.push(r.gen_range(-uh_limit..uh_limit));
    }
    w.extend(std::iter::repeat(0.0).take(4 * h));
    let wd_limit = (6.0 / (h + o) as f64).sqrt();
    for _ in 0..h * o {
        w.push(r.gen_range(-wd_limit..wd_limit));
    }
    w.extend(std::iter::repeat(0.0).take(o));
    WeightVector(w)
}

/// Offsets of the canonical layout sections.
struct Layout {
    in_dim: usize,
    h: usize,
    out: usize,
    wx: usize,
    uh: usize,
    b: usize,
    wd: usize,
    bd: usize,
}

impl Layout {
    fn of(cfg: &ModelConfig) -> Layout {
        let (i, h, o) = (cfg.input_dim, cfg.hidden_dim, cfg.output_dim);
        let wx = 0;
        let uh = wx + i * 4 * h;
        let b = uh + h * 4 * h;
        let wd = b + 4 * h;
        let bd = wd + h * o;
        Layout {
            in_dim: i,
            h,
            out: o,
            wx,
            uh,
            b,
            wd,
            bd,
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-sample forward activations kept for backpropagation.
struct Cache {
    /// Inputs actually consumed per LSTM step (real, then fed-back).
    xs: Vec<f64>,
    /// Post-activation gates per step: `[i f g o]` blocks of `hidden` each.
    gates: Vec<f64>,
    cs: Vec<f64>,
    tanh_cs: Vec<f64>,
    hs: Vec<f64>,
    /// Predictions, `target_horizon * out`.
    ys: Vec<f64>,
}

/// Number of LSTM steps unrolled per sample.
fn n_steps(cfg: &ModelConfig) -> usize {
    cfg.input_horizon + cfg.target_horizon - 1
}

fn forward_cached(cfg: &ModelConfig, w: &[f64], input: &[f64], cache: &mut Cache) {
    let l = Layout::of(cfg);
    let (h, g4) = (l.h, 4 * l.h);
    let steps = n_steps(cfg);
    debug_assert_eq!(input.len(), cfg.input_horizon * l.in_dim);

    cache.xs.clear();
    cache.gates.clear();
    cache.cs.clear();
    cache.tanh_cs.clear();
    cache.hs.clear();
    cache.ys.clear();

    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    let mut pre = vec![0.0; g4];

    for s in 0..steps {
        // Step input: real displacement, or the previous prediction fed back.
        let x_start = cache.xs.len();
        if s < cfg.input_horizon {
            cache
                .xs
                .extend_from_slice(&input[s * l.in_dim..(s + 1) * l.in_dim]);
        } else {
            let m = s - cfg.input_horizon; // prediction index fed back
            let y = &cache.ys[m * l.out..(m + 1) * l.out];
            cache.xs.extend_from_slice(y);
        }

        pre.copy_from_slice(&w[l.b..l.b + g4]);
        for k in 0..l.in_dim {
            let xv = cache.xs[x_start + k];
            let row = &w[l.wx + k * g4..l.wx + (k + 1) * g4];
            for r in 0..g4 {
                pre[r] += xv * row[r];
            }
        }
        for k in 0..h {
            let hv = h_prev[k];
            let row = &w[l.uh + k * g4..l.uh + (k + 1) * g4];
            for r in 0..g4 {
                pre[r] += hv * row[r];
            }
        }

        let base = cache.gates.len();
        cache.gates.resize(base + g4, 0.0);
        let gates = &mut cache.gates[base..];
        for j in 0..h {
            gates[j] = sigmoid(pre[j]); // input gate
            gates[h + j] = sigmoid(pre[h + j]); // forget gate
            gates[2 * h + j] = pre[2 * h + j].tanh(); // cell candidate
            gates[3 * h + j] = sigmoid(pre[3 * h + j]); // output gate
        }
        for j in 0..h {
            let c = gates[h + j] * c_prev[j] + gates[j] * gates[2 * h + j];
            let tc = c.tanh();
            let hv = gates[3 * h + j] * tc;
            debug_assert!(c.is_finite() && hv.is_finite());
            cache.cs.push(c);
            cache.tanh_cs.push(tc);
            cache.hs.push(hv);
            c_prev[j] = c;
            h_prev[j] = hv;
        }

        // Predictions start once the input horizon has been consumed.
        if s >= cfg.input_horizon - 1 {
            for d in 0..l.out {
                let mut y = w[l.bd + d];
                for j in 0..h {
                    y += w[l.wd + j * l.out + d] * h_prev[j];
                }
                debug_assert!(y.is_finite());
                cache.ys.push(y);
            }
        }
    }
    debug_assert_eq!(cache.ys.len(), cfg.target_horizon * l.out);
}

/// Forward pass: returns the predicted displacement sequence
/// (`target_horizon * 2` values).
pub fn forward(cfg: &ModelConfig, w: &WeightVector, input: &[f64]) -> Vec<f64> {
    assert_eq!(w.len(), cfg.n_weights(), "weight vector length mismatch");
    let mut cache = Cache {
        xs: Vec::new(),
        gates: Vec::new(),
        cs: Vec::new(),
        tanh_cs: Vec::new(),
        hs: Vec::new(),
        ys: Vec::new(),
    };
    forward_cached(cfg, &w.0, input, &mut cache);
    cache.ys
}

/// Accumulates `scale * dL_sample/dw` into `grad`, where the per-sample loss
/// is the mean squared error over target steps and coordinates.
fn backward(
    cfg: &ModelConfig,
    w: &[f64],
    cache: &Cache,
    target: &[f64],
    scale: f64,
    grad: &mut [f64],
) -> f64 {
    let l = Layout::of(cfg);
    let (h, g4, out) = (l.h, 4 * l.h, l.out);
    let steps = n_steps(cfg);
    let t_out = cfg.target_horizon;
    debug_assert_eq!(target.len(), t_out * out);

    // Per-sample loss and direct dL/dy.
    let denom = (t_out * out) as f64;
    let mut sample_loss = 0.0;
    let mut dy_direct = vec![0.0; t_out * out];
    for m in 0..t_out * out {
        let e = cache.ys[m] - target[m];
        sample_loss += e * e;
        dy_direct[m] = 2.0 * e / denom;
    }
    sample_loss /= denom;

    let mut dh_carry = vec![0.0; h];
    let mut dc_carry = vec![0.0; h];
    let mut dx_pending = vec![0.0; l.in_dim]; // grad into the fed-back input
    let mut have_pending = false;
    let mut dpre = vec![0.0; g4];
    let mut dy = vec![0.0; out];

    for s in (0..steps).rev() {
        // Dense backprop for the prediction emitted at this step.
        if s >= cfg.input_horizon - 1 {
            let m = s + 1 - cfg.input_horizon;
            for d in 0..out {
                dy[d] = dy_direct[m * out + d];
            }
            if have_pending {
                // x_{s+1} = y_m: add the gradient that flowed into that input.
                for d in 0..out {
                    dy[d] += dx_pending[d];
                }
                have_pending = false;
            }
            let hs = &cache.hs[s * h..(s + 1) * h];
            for d in 0..out {
                let dyd = dy[d] * scale;
                grad[l.bd + d] += dyd;
                for j in 0..h {
                    grad[l.wd + j * out + d] += hs[j] * dyd;
                }
            }
            for j in 0..h {
                let mut acc = 0.0;
                for d in 0..out {
                    acc += w[l.wd + j * out + d] * dy[d];
                }
                dh_carry[j] += acc;
            }
        }

        let gates = &cache.gates[s * g4..(s + 1) * g4];
        let tanh_c = &cache.tanh_cs[s * h..(s + 1) * h];
        let c_prev_slice = if s > 0 {
            Some(&cache.cs[(s - 1) * h..s * h])
        } else {
            None
        };
        for j in 0..h {
            let gi = gates[j];
            let gf = gates[h + j];
            let gg = gates[2 * h + j];
            let go = gates[3 * h + j];
            let tc = tanh_c[j];
            let cp = c_prev_slice.map_or(0.0, |c| c[j]);

            let dh = dh_carry[j];
            let dc_total = dc_carry[j] + dh * go * (1.0 - tc * tc);
            dpre[j] = dc_total * gg * gi * (1.0 - gi);
            dpre[h + j] = dc_total * cp * gf * (1.0 - gf);
            dpre[2 * h + j] = dc_total * gi * (1.0 - gg * gg);
            dpre[3 * h + j] = dh * tc * go * (1.0 - go);
            dc_carry[j] = dc_total * gf;
        }

        let xs = &cache.xs[s * l.in_dim..(s + 1) * l.in_dim];
        for k in 0..l.in_dim {
            let xv = xs[k] * scale;
            let row = &mut grad[l.wx + k * g4..l.wx + (k + 1) * g4];
            for r in 0..g4 {
                row[r] += xv * dpre[r];
            }
        }
        {
            let hp_zero = vec![0.0; h];
            let h_prev = if s > 0 {
                &cache.hs[(s - 1) * h..s * h]
            } else {
                &hp_zero[..]
            };
            for k in 0..h {
                let hv = h_prev[k] * scale;
                let row = &mut grad[l.uh + k * g4..l.uh + (k + 1) * g4];
                for r in 0..g4 {
                    row[r] += hv * dpre[r];
                }
            }
        }
        for r in 0..g4 {
            grad[l.b + r] += dpre[r] * scale;
        }

        // Gradient into this step's input; only fed-back inputs consume it.
        if s >= cfg.input_horizon {
            for k in 0..l.in_dim {
                let mut acc = 0.0;
                let row = &w[l.wx + k * g4..l.wx + (k + 1) * g4];
                for r in 0..g4 {
                    acc += row[r] * dpre[r];
                }
                dx_pending[k] = acc;
            }
            have_pending = true;
        }

        // dh_prev through the recurrent kernel.
        for k in 0..h {
            let mut acc = 0.0;
            let row = &w[l.uh + k * g4..l.uh + (k + 1) * g4];
            for r in 0..g4 {
                acc += row[r] * dpre[r];
            }
            dh_carry[k] = acc;
        }
    }
    sample_loss
}

/// Mean squared error of the model over encoded samples (mean over samples,
/// target steps, and coordinates). Caller must guard against empty data.
pub fn loss(cfg: &ModelConfig, w: &WeightVector, data: &[EncodedSample]) -> f64 {
    assert!(!data.is_empty(), "loss is undefined on empty data");
    let denom = (cfg.target_horizon * cfg.output_dim) as f64;
    let mut total = 0.0;
    for sample in data {
        let ys = forward(cfg, w, &sample.input);
        let mut acc = 0.0;
        for (y, t) in ys.iter().zip(sample.target.iter()) {
            let e = y - t;
            acc += e * e;
        }
        total += acc / denom;
    }
    total / data.len() as f64
}

/// Gradient of the batch-mean loss at `w`; exposed for gradient checking.
pub fn batch_gradient(
    cfg: &ModelConfig,
    w: &WeightVector,
    batch: &[&EncodedSample],
) -> (Vec<f64>, f64) {
    let mut grad = vec![0.0; cfg.n_weights()];
    let mut cache = Cache {
        xs: Vec::new(),
        gates: Vec::new(),
        cs: Vec::new(),
        tanh_cs: Vec::new(),
        hs: Vec::new(),
        ys: Vec::new(),
    };
    let scale = 1.0 / batch.len() as f64;
    let mut batch_loss = 0.0;
    for sample in batch {
        forward_cached(cfg, &w.0, &sample.input, &mut cache);
        batch_loss += backward(cfg, &w.0, &cache, &sample.target, scale, &mut grad);
    }
    (grad, batch_loss * scale)
}

/// Mini-batch SGD: `epochs` passes over seeded-shuffled batches of
/// `batch_size` (final short batch allowed), one full-gradient step per
/// batch. Returns the updated weights and the sample count used.
pub fn train(
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    w: &WeightVector,
    data: &[EncodedSample],
    seed: u64,
) -> (WeightVector, usize) {
    assert!(!data.is_empty(), "training requires at least one sample");
    assert_eq!(w.len(), cfg.n_weights(), "weight vector length mismatch");
    let mut weights = w.0.clone();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = rng::stream(seed, Domain::Train, 0);
    let mut grad = vec![0.0; cfg.n_weights()];
    let mut cache = Cache {
        xs: Vec::new(),
        gates: Vec::new(),
        cs: Vec::new(),
        tanh_cs: Vec::new(),
        hs: Vec::new(),
        ys: Vec::new(),
    };

    for _epoch in 0..tcfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(tcfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &idx in batch {
                let sample = &data[idx];
                forward_cached(cfg, &weights, &sample.input, &mut cache);
                backward(cfg, &weights, &cache, &sample.target, scale, &mut grad);
            }
            for (wv, g) in weights.iter_mut().zip(grad.iter()) {
                *wv -= tcfg.learning_rate * g;
            }
        }
    }
    let out = WeightVector(weights);
    assert!(out.all_finite(), "training produced non-finite weights");
    (out, data.len())
}
