//! Forward and backward passes of the convolutional network.
//!
//! Parameters live in one flat `Vec<f64>`; [`Layout`] records where each
//! block starts. Per layer the order is weights then biases. Conv weights are
//! indexed `[filter][in_channel][tap]`, dense weights `[out][in]`.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub window_len: usize,
    pub conv_stages: usize,
    pub filters: usize,
    pub kernel: usize,
    pub hidden: usize,
    pub num_classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvLayout {
    pub w: usize,
    pub b: usize,
    pub in_ch: usize,
    /// Input (and pre-pool output) length.
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub conv: Vec<ConvLayout>,
    pub flat: usize,
    pub d1_w: usize,
    pub d1_b: usize,
    pub d2_w: usize,
    pub d2_b: usize,
    pub total: usize,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel {} must be odd", self.kernel)));
        }
        if self.filters == 0 || self.hidden == 0 {
            return Err(Error::Config("filters and hidden width must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.num_classes)));
        }
        if self.conv_stages == 0 || self.window_len >> self.conv_stages == 0 {
            return Err(Error::Config(format!(
                "{} conv stages do not fit a window of {}",
                self.conv_stages, self.window_len
            )));
        }
        Ok(())
    }

    pub(crate) fn layout(&self) -> Layout {
        let mut off = 0;
        let mut conv = Vec::with_capacity(self.conv_stages);
        let mut len = self.window_len;
        let mut in_ch = 2;
        for _ in 0..self.conv_stages {
            let w = off;
            off += self.filters * in_ch * self.kernel;
            let b = off;
            off += self.filters;
            conv.push(ConvLayout { w, b, in_ch, len });
            in_ch = self.filters;
            len /= 2;
        }
        let flat = self.filters * len;
        let d1_w = off;
        let d1_b = d1_w + self.hidden * flat;
        let d2_w = d1_b + self.hidden;
        let d2_b = d2_w + self.num_classes * self.hidden;
        let total = d2_b + self.num_classes;
        Layout {
            conv,
            flat,
            d1_w,
            d1_b,
            d2_w,
            d2_b,
            total,
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout().total
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let xc = x.chunks_exact(4);
    let yc = y.chunks_exact(4);
    let tail: f64 = xc.remainder().iter().zip(yc.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in xc.zip(yc) {
        for j in 0..4 {
            acc[j] += a[j] * b[j];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct Cache {
    /// Zero-padded input of each conv stage, `in_ch x (len + kernel - 1)`.
    padded: Vec<Vec<f64>>,
    /// Winning pre-pool position per pooled output, or `u32::MAX` when the
    /// ReLU clipped it.
    argmax: Vec<Vec<u32>>,
    conv_out: Vec<f64>,
    pub flat: Vec<f64>,
    pub hidden: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Cache {
    pub fn new(arch: &Architecture) -> Self {
        let layout = arch.layout();
        let pad = arch.kernel - 1;
        Cache {
            padded: layout.conv.iter().map(|c| vec![0.0; c.in_ch * (c.len + pad)]).collect(),
            argmax: layout
                .conv
                .iter()
                .map(|c| vec![0; arch.filters * (c.len / 2)])
                .collect(),
            conv_out: vec![0.0; arch.filters * arch.window_len],
            flat: vec![0.0; layout.flat],
            hidden: vec![0.0; arch.hidden],
            probs: vec![0.0; arch.num_classes],
        }
    }
}

/// Scratch space for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct GradScratch {
    dconv: Vec<f64>,
    dpad: Vec<f64>,
    dpooled: Vec<f64>,
    dflat: Vec<f64>,
    dhidden: Vec<f64>,
    dlogits: Vec<f64>,
}

impl GradScratch {
    pub fn new(arch: &Architecture) -> Self {
        let layout = arch.layout();
        let max_pad = layout
            .conv
            .iter()
            .map(|c| c.in_ch * (c.len + arch.kernel - 1))
            .max()
            .unwrap_or(0);
        GradScratch {
            dconv: vec![0.0; arch.filters * arch.window_len],
            dpad: vec![0.0; max_pad],
            dpooled: vec![0.0; arch.filters * arch.window_len / 2],
            dflat: vec![0.0; layout.flat],
            dhidden: vec![0.0; arch.hidden],
            dlogits: vec![0.0; arch.num_classes],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    params: Vec<f64>,
}

impl Network {
    /// He-normal weights (fan-in scaled, unit gain on the output layer), zero biases.
    pub fn init(arch: Architecture, seed_value: u64) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        let mut params = vec![0.0; layout.total];
        let mut rng = seed::rng(seed_value);
        let mut fill = |block: &mut [f64], fan_in: usize, gain: f64| {
            let n = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("positive std");
            block.iter_mut().for_each(|w| *w = n.sample(&mut rng));
        };
        for c in &layout.conv {
            let fan_in = c.in_ch * arch.kernel;
            fill(&mut params[c.w..c.b], fan_in, 2.0);
        }
        fill(&mut params[layout.d1_w..layout.d1_b], layout.flat, 2.0);
        fill(&mut params[layout.d2_w..layout.d2_b], arch.hidden, 1.0);
        Ok(Network { arch, params })
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.num_params() {
            return Err(Error::Validation(format!(
                "expected {} parameters, got {}",
                arch.num_params(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Validation("non-finite parameter".into()));
        }
        Ok(Network { arch, params })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Runs the network on one `2 x window_len` input (I plane then Q plane).
    pub(crate) fn forward(&self, input: &[f64], cache: &mut Cache) {
        let arch = &self.arch;
        let layout = arch.layout();
        let p = &self.params;
        let k = arch.kernel;
        let half = k / 2;
        let f_n = arch.filters;

        // Stage 0 input.
        {
            let len = arch.window_len;
            let pad = &mut cache.padded[0];
            for c in 0..2 {
                let row = &mut pad[c * (len + k - 1)..(c + 1) * (len + k - 1)];
                row[..half].fill(0.0);
                row[half..half + len].copy_from_slice(&input[c * len..(c + 1) * len]);
                row[half + len..].fill(0.0);
            }
        }

        for (s, cl) in layout.conv.iter().enumerate() {
            let len = cl.len;
            let row_len = len + k - 1;
            let out_len = len / 2;
            let conv_out = &mut cache.conv_out[..f_n * len];
            for f in 0..f_n {
                let out = &mut conv_out[f * len..(f + 1) * len];
                out.fill(p[cl.b + f]);
                for c in 0..cl.in_ch {
                    let row = &cache.padded[s][c * row_len..(c + 1) * row_len];
                    let wbase = cl.w + (f * cl.in_ch + c) * k;
                    for tap in 0..k {
                        axpy(p[wbase + tap], &row[tap..tap + len], out);
                    }
                }
            }
            // ReLU + max-pool 2, written into the next stage's padded input or `flat`.
            let argmax = &mut cache.argmax[s];
            let last = s + 1 == layout.conv.len();
            for f in 0..f_n {
                let out = &conv_out[f * len..(f + 1) * len];
                for j in 0..out_len {
                    let (a, b) = (out[2 * j], out[2 * j + 1]);
                    let (v, idx) = if b > a { (b, 2 * j + 1) } else { (a, 2 * j) };
                    let (v, idx) = if v > 0.0 { (v, idx as u32) } else { (0.0, u32::MAX) };
                    argmax[f * out_len + j] = idx;
                    if last {
                        cache.flat[f * out_len + j] = v;
                    } else {
                        let next_row = out_len + k - 1;
                        cache.padded[s + 1][f * next_row + half + j] = v;
                    }
                }
                if !last {
                    let next_row = out_len + k - 1;
                    let row = &mut cache.padded[s + 1][f * next_row..(f + 1) * next_row];
                    row[..half].fill(0.0);
                    row[half + out_len..].fill(0.0);
                }
            }
        }

        for h in 0..arch.hidden {
            let w = &p[layout.d1_w + h * layout.flat..layout.d1_w + (h + 1) * layout.flat];
            cache.hidden[h] = (p[layout.d1_b + h] + dot(w, &cache.flat)).max(0.0);
        }
        for t in 0..arch.num_classes {
            let w = &p[layout.d2_w + t * arch.hidden..layout.d2_w + (t + 1) * arch.hidden];
            cache.probs[t] = p[layout.d2_b + t] + dot(w, &cache.hidden);
        }
        softmax_in_place(&mut cache.probs);
    }

    /// Pool winners (with ReLU clipping) and hidden-unit activity for one
    /// input. The loss is smooth in the parameters wherever this is constant.
    pub(crate) fn activation_pattern(&self, input: &[f64]) -> Vec<u32> {
        let mut cache = Cache::new(&self.arch);
        self.forward(input, &mut cache);
        let mut out: Vec<u32> = cache.argmax.concat();
        out.extend(cache.hidden.iter().map(|&h| u32::from(h > 0.0)));
        out
    }

    /// Accumulates the cross-entropy gradient for `label` into `grad`, using
    /// the activations of the preceding [`Network::forward`] call. Returns the loss.
    pub(crate) fn backward(&self, cache: &Cache, label: usize, grad: &mut [f64], scratch: &mut GradScratch) -> f64 {
        let arch = &self.arch;
        let layout = arch.layout();
        let p = &self.params;
        let k = arch.kernel;
        let half = k / 2;
        let f_n = arch.filters;
        let loss = -cache.probs[label].max(1e-300).ln();

        let dlogits = &mut scratch.dlogits;
        dlogits.copy_from_slice(&cache.probs);
        dlogits[label] -= 1.0;

        scratch.dhidden.fill(0.0);
        for t in 0..arch.num_classes {
            let g = dlogits[t];
            grad[layout.d2_b + t] += g;
            let off = layout.d2_w + t * arch.hidden;
            axpy(g, &cache.hidden, &mut grad[off..off + arch.hidden]);
            axpy(g, &p[off..off + arch.hidden], &mut scratch.dhidden);
        }
        for (dh, &h) in scratch.dhidden.iter_mut().zip(&cache.hidden) {
            if h <= 0.0 {
                *dh = 0.0;
            }
        }

        scratch.dflat.fill(0.0);
        for h in 0..arch.hidden {
            let g = scratch.dhidden[h];
            if g == 0.0 {
                continue;
            }
            grad[layout.d1_b + h] += g;
            let off = layout.d1_w + h * layout.flat;
            axpy(g, &cache.flat, &mut grad[off..off + layout.flat]);
            axpy(g, &p[off..off + layout.flat], &mut scratch.dflat);
        }

        // Gradient w.r.t. the pooled output of the current stage.
        let mut dpooled_len = layout.flat;
        scratch.dpooled[..dpooled_len].copy_from_slice(&scratch.dflat);

        for (s, cl) in layout.conv.iter().enumerate().rev() {
            let len = cl.len;
            let row_len = len + k - 1;
            let out_len = len / 2;
            debug_assert_eq!(dpooled_len, f_n * out_len);

            let dconv = &mut scratch.dconv[..f_n * len];
            dconv.fill(0.0);
            for (i, &idx) in cache.argmax[s].iter().enumerate() {
                if idx != u32::MAX {
                    let f = i / out_len;
                    dconv[f * len + idx as usize] = scratch.dpooled[i];
                }
            }

            let need_input_grad = s > 0;
            let dpad = &mut scratch.dpad[..cl.in_ch * row_len];
            if need_input_grad {
                dpad.fill(0.0);
            }
            for f in 0..f_n {
                let d = &dconv[f * len..(f + 1) * len];
                grad[cl.b + f] += d.iter().sum::<f64>();
                for c in 0..cl.in_ch {
                    let row = &cache.padded[s][c * row_len..(c + 1) * row_len];
                    let wbase = cl.w + (f * cl.in_ch + c) * k;
                    for tap in 0..k {
                        grad[wbase + tap] += dot(d, &row[tap..tap + len]);
                        if need_input_grad {
                            axpy(p[wbase + tap], d, &mut dpad[c * row_len + tap..c * row_len + tap + len]);
                        }
                    }
                }
            }
            if need_input_grad {
                for c in 0..cl.in_ch {
                    scratch.dpooled[c * len..(c + 1) * len]
                        .copy_from_slice(&dpad[c * row_len + half..c * row_len + half + len]);
                }
                dpooled_len = cl.in_ch * len;
            }
        }
        loss
    }

    /// Class probabilities for one input.
    pub fn probabilities(&self, input: &[f64]) -> Vec<f64> {
        let mut cache = Cache::new(&self.arch);
        self.forward(input, &mut cache);
        cache.probs
    }

    /// Mean loss and its gradient over `batch` of (input, label) pairs.
    pub fn loss_and_gradient(&self, batch: &[(&[f64], usize)]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut cache = Cache::new(&self.arch);
        let mut scratch = GradScratch::new(&self.arch);
        let mut loss = 0.0;
        for &(x, y) in batch {
            self.forward(x, &mut cache);
            loss += self.backward(&cache, y, &mut grad, &mut scratch);
        }
        let n = batch.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }

    /// Mean loss over `batch` without gradients.
    pub fn loss(&self, batch: &[(&[f64], usize)]) -> f64 {
        let mut cache = Cache::new(&self.arch);
        let total: f64 = batch
            .iter()
            .map(|&(x, y)| {
                self.forward(x, &mut cache);
                -cache.probs[y].max(1e-300).ln()
            })
            .sum();
        total / batch.len().max(1) as f64
    }
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}
