//! CombiNet: a six-layer regressor from the last four normalized boxes to the
//! next target center.
//!
//! Layers 1-4 run a 1-D convolution over the time axis and a fully connected
//! unit side by side on the same input and average the two outputs. The
//! averaged vector is viewed as `window x conv_channels` so that the next
//! convolution sees it as a short sequence again. Layers 5 and 6 are fully
//! connected. A leaky rectifier follows layers 1-5; layer 6 is linear.
//!
//! All parameters live in one flat vector. [`Layout`] records where each
//! tensor starts, which keeps the optimizer, the finite-difference checker and
//! the model file format oblivious to the layer structure.

use alloc::vec::Vec;
use core::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{normalize, BBox, ImageDims, NormBBox};

/// Frames of history the network consumes.
pub const WINDOW: usize = 4;
/// Number of averaged conv/dense blocks.
pub const BLOCKS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CombiNetError {
    #[error("invalid architecture: {0}")]
    Architecture(&'static str),
    #[error("parameter vector has {got} entries, architecture needs {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("parameter {0} is not finite")]
    NonFiniteParam(usize),
    #[error("empty box history")]
    EmptyHistory,
    #[error("empty training set")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    TrainConfig(&'static str),
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
}

/// Sizes of every layer. `hidden` is always `window * conv_channels`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Architecture {
    pub in_channels: usize,
    pub conv_channels: usize,
    pub kernel: usize,
    pub outputs: usize,
    pub leaky_slope: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            in_channels: 4,
            conv_channels: 16,
            kernel: 3,
            outputs: 2,
            leaky_slope: 0.01,
        }
    }
}

impl Architecture {
    pub fn hidden(&self) -> usize {
        WINDOW * self.conv_channels
    }

    pub fn validate(&self) -> Result<(), CombiNetError> {
        if self.in_channels != 4 {
            return Err(CombiNetError::Architecture("each frame contributes 4 channels"));
        }
        if self.conv_channels == 0 {
            return Err(CombiNetError::Architecture("conv_channels must be positive"));
        }
        if self.kernel % 2 == 0 || self.kernel > 2 * WINDOW - 1 {
            return Err(CombiNetError::Architecture("kernel must be odd and at most 2*window-1"));
        }
        if self.outputs != 2 && self.outputs != 4 {
            return Err(CombiNetError::Architecture("outputs must be 2 (center) or 4 (box)"));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(CombiNetError::Architecture("leaky_slope must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockLayout {
    /// Channels of this block's input when viewed as `window x channels`.
    pub in_channels: usize,
    /// `[conv_channels][kernel][in_channels]`.
    pub conv_w: Range<usize>,
    pub conv_b: Range<usize>,
    /// `[hidden][window * in_channels]`.
    pub dense_w: Range<usize>,
    pub dense_b: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub blocks: [BlockLayout; BLOCKS],
    /// `[hidden][hidden]`.
    pub fc5_w: Range<usize>,
    pub fc5_b: Range<usize>,
    /// `[outputs][hidden]`.
    pub fc6_w: Range<usize>,
    pub fc6_b: Range<usize>,
    pub total: usize,
}

impl Layout {
    pub fn new(arch: &Architecture) -> Self {
        let mut cursor = 0;
        let mut take = |len: usize| {
            let r = cursor..cursor + len;
            cursor += len;
            r
        };
        let h = arch.hidden();
        let cc = arch.conv_channels;
        let mut block = |cin: usize| BlockLayout {
            in_channels: cin,
            conv_w: take(cc * arch.kernel * cin),
            conv_b: take(cc),
            dense_w: take(h * WINDOW * cin),
            dense_b: take(h),
        };
        let blocks = [block(arch.in_channels), block(cc), block(cc), block(cc)];
        let fc5_w = take(h * h);
        let fc5_b = take(h);
        let fc6_w = take(arch.outputs * h);
        let fc6_b = take(arch.outputs);
        Self {
            blocks,
            fc5_w,
            fc5_b,
            fc6_w,
            fc6_b,
            total: cursor,
        }
    }

    /// `(weights, bias, fan_in)` for every parameterized unit.
    fn units(&self, arch: &Architecture) -> Vec<(Range<usize>, Range<usize>, usize)> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.push((b.conv_w.clone(), b.conv_b.clone(), arch.kernel * b.in_channels));
            out.push((b.dense_w.clone(), b.dense_b.clone(), WINDOW * b.in_channels));
        }
        out.push((self.fc5_w.clone(), self.fc5_b.clone(), arch.hidden()));
        out.push((self.fc6_w.clone(), self.fc6_b.clone(), arch.hidden()));
        out
    }
}

/// Last four boxes, oldest first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathWindow(pub [NormBBox; WINDOW]);

impl PathWindow {
    /// Time-major `[frame][cx, cy, nw, nh]`.
    pub fn features(&self) -> [f64; WINDOW * 4] {
        let mut out = [0.0; WINDOW * 4];
        for (t, b) in self.0.iter().enumerate() {
            out[t * 4..t * 4 + 4].copy_from_slice(&b.to_array());
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(NormBBox::is_valid)
    }

    pub fn last(&self) -> NormBBox {
        self.0[WINDOW - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSample {
    pub input: PathWindow,
    /// Ground truth for the frame after the window; the loss uses its center
    /// (and its size for four-output models).
    pub target: NormBBox,
}

impl TrainSample {
    fn target_vec(&self, outputs: usize) -> [f64; 4] {
        let t = self.target.to_array();
        let mut out = [0.0; 4];
        out[..outputs].copy_from_slice(&t[..outputs]);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombiNetModel {
    arch: Architecture,
    layout: Layout,
    params: Vec<f64>,
}

impl CombiNetModel {
    pub fn zeros(arch: Architecture) -> Result<Self, CombiNetError> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        let params = alloc::vec![0.0; layout.total];
        Ok(Self {
            arch,
            layout,
            params,
        })
    }

    /// Weights drawn from `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, biases zero.
    /// The wider bound offsets the variance lost when each block averages its
    /// conv and dense units.
    pub fn random(arch: Architecture, seed: u64) -> Result<Self, CombiNetError> {
        let mut model = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (w, b, fan_in) in model.layout.units(&arch) {
            let bound = libm::sqrt(6.0 / fan_in as f64);
            for p in &mut model.params[w] {
                *p = rng.random_range(-bound..bound);
            }
            model.params[b].iter_mut().for_each(|p| *p = 0.0);
        }
        Ok(model)
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self, CombiNetError> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        if params.len() != layout.total {
            return Err(CombiNetError::ParamCount {
                expected: layout.total,
                got: params.len(),
            });
        }
        Ok(Self {
            arch,
            layout,
            params,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn check_finite(&self) -> Result<(), CombiNetError> {
        match self.params.iter().position(|p| !p.is_finite()) {
            Some(i) => Err(CombiNetError::NonFiniteParam(i)),
            None => Ok(()),
        }
    }

    /// Predicted next center, clamped into the unit square.
    pub fn forward(&self, window: &PathWindow) -> Result<(f64, f64), CombiNetError> {
        self.check_finite()?;
        let mut ws = Workspace::new(&self.arch);
        self.forward_raw(&window.features(), &mut ws);
        let y = ws.output();
        Ok((y[0].clamp(0.0, 1.0), y[1].clamp(0.0, 1.0)))
    }

    /// Unclamped outputs (2 or 4 values).
    pub fn forward_unclamped(&self, window: &PathWindow) -> Vec<f64> {
        let mut ws = Workspace::new(&self.arch);
        self.forward_raw(&window.features(), &mut ws);
        ws.output().to_vec()
    }

    fn forward_raw(&self, input: &[f64], ws: &mut Workspace) {
        let p = &self.params;
        let h = self.arch.hidden();
        let cc = self.arch.conv_channels;
        let k = self.arch.kernel;
        let slope = self.arch.leaky_slope;
        ws.acts[0].copy_from_slice(input);
        for (l, blk) in self.layout.blocks.iter().enumerate() {
            let (before, after) = ws.acts.split_at_mut(l + 1);
            let x = &before[l];
            let a = &mut after[0];
            let cin = blk.in_channels;
            let patch_len = k * cin;
            im2col(x, cin, k, &mut ws.patches[l]);
            let conv_w = &p[blk.conv_w.clone()];
            let conv_b = &p[blk.conv_b.clone()];
            let dense_w = &p[blk.dense_w.clone()];
            let dense_b = &p[blk.dense_b.clone()];
            let z = &mut ws.pre[l];
            let din = WINDOW * cin;
            for o in 0..h {
                let dense = dense_b[o] + dot(&dense_w[o * din..(o + 1) * din], x);
                let (t, co) = (o / cc, o % cc);
                let patch = &ws.patches[l][t * patch_len..(t + 1) * patch_len];
                let conv = conv_b[co] + dot(&conv_w[co * patch_len..(co + 1) * patch_len], patch);
                z[o] = 0.5 * (conv + dense);
                a[o] = leaky(z[o], slope);
            }
        }
        let a4 = &ws.acts[BLOCKS];
        let w5 = &p[self.layout.fc5_w.clone()];
        let b5 = &p[self.layout.fc5_b.clone()];
        for o in 0..h {
            ws.pre[BLOCKS][o] = b5[o] + dot(&w5[o * h..(o + 1) * h], a4);
            ws.a5[o] = leaky(ws.pre[BLOCKS][o], slope);
        }
        let w6 = &p[self.layout.fc6_w.clone()];
        let b6 = &p[self.layout.fc6_b.clone()];
        for o in 0..self.arch.outputs {
            ws.y[o] = b6[o] + dot(&w6[o * h..(o + 1) * h], &ws.a5);
        }
    }

    /// Accumulates `dL/dθ` for upstream gradient `dy` into `grad`, using the
    /// activations left in `ws` by the preceding forward pass.
    fn backward(&self, ws: &mut Workspace, dy: &[f64], grad: &mut [f64]) {
        let p = &self.params;
        let h = self.arch.hidden();
        let cc = self.arch.conv_channels;
        let k = self.arch.kernel;
        let slope = self.arch.leaky_slope;
        let lay = &self.layout;

        // layer 6
        let w6 = &p[lay.fc6_w.clone()];
        ws.da.iter_mut().for_each(|v| *v = 0.0);
        for (o, &g) in dy.iter().enumerate() {
            grad[lay.fc6_b.start + o] += g;
            axpy(g, &ws.a5, &mut grad[lay.fc6_w.start + o * h..lay.fc6_w.start + (o + 1) * h]);
            axpy(g, &w6[o * h..(o + 1) * h], &mut ws.da);
        }
        // layer 5
        for o in 0..h {
            ws.dz[o] = ws.da[o] * leaky_grad(ws.pre[BLOCKS][o], slope);
        }
        let w5 = &p[lay.fc5_w.clone()];
        ws.dx.iter_mut().for_each(|v| *v = 0.0);
        for o in 0..h {
            let g = ws.dz[o];
            grad[lay.fc5_b.start + o] += g;
            axpy(g, &ws.acts[BLOCKS], &mut grad[lay.fc5_w.start + o * h..lay.fc5_w.start + (o + 1) * h]);
            axpy(g, &w5[o * h..(o + 1) * h], &mut ws.dx[..h]);
        }
        core::mem::swap(&mut ws.da, &mut ws.dx);

        // averaged blocks, last to first
        for l in (0..BLOCKS).rev() {
            let blk = &lay.blocks[l];
            let cin = blk.in_channels;
            let din = WINDOW * cin;
            let patch_len = k * cin;
            for o in 0..h {
                ws.dz[o] = 0.5 * ws.da[o] * leaky_grad(ws.pre[l][o], slope);
            }
            let x = &ws.acts[l];
            let conv_w = &p[blk.conv_w.clone()];
            let dense_w = &p[blk.dense_w.clone()];
            ws.dx[..din].iter_mut().for_each(|v| *v = 0.0);
            ws.dpatch[..WINDOW * patch_len].iter_mut().for_each(|v| *v = 0.0);
            for o in 0..h {
                let g = ws.dz[o];
                // dense unit
                grad[blk.dense_b.start + o] += g;
                let dw = blk.dense_w.start + o * din;
                axpy(g, x, &mut grad[dw..dw + din]);
                axpy(g, &dense_w[o * din..(o + 1) * din], &mut ws.dx[..din]);
                // conv unit
                let (t, co) = (o / cc, o % cc);
                grad[blk.conv_b.start + co] += g;
                let patch = &ws.patches[l][t * patch_len..(t + 1) * patch_len];
                let cw = blk.conv_w.start + co * patch_len;
                axpy(g, patch, &mut grad[cw..cw + patch_len]);
                axpy(
                    g,
                    &conv_w[co * patch_len..(co + 1) * patch_len],
                    &mut ws.dpatch[t * patch_len..(t + 1) * patch_len],
                );
            }
            col2im_add(&ws.dpatch[..WINDOW * patch_len], cin, k, &mut ws.dx[..din]);
            if l > 0 {
                ws.da[..din].copy_from_slice(&ws.dx[..din]);
            }
        }
    }

    /// Batch-mean squared error over the model outputs plus
    /// `weight_decay / 2 * ||θ||²`, with its gradient.
    pub fn loss_and_gradient(&self, samples: &[TrainSample], weight_decay: f64) -> (f64, Vec<f64>) {
        let mut grad = alloc::vec![0.0; self.layout.total];
        let mut ws = Workspace::new(&self.arch);
        let data = self.accumulate(samples, &mut ws, &mut grad);
        let mut reg = 0.0;
        for (g, &p) in grad.iter_mut().zip(&self.params) {
            *g += weight_decay * p;
            reg += p * p;
        }
        (data + 0.5 * weight_decay * reg, grad)
    }

    /// Data term only (mean over batch and outputs); gradient accumulated into
    /// `grad` with the `1/B` factor applied.
    fn accumulate(&self, samples: &[TrainSample], ws: &mut Workspace, grad: &mut [f64]) -> f64 {
        let m = self.arch.outputs;
        let scale = 1.0 / (samples.len() * m) as f64;
        let mut loss = 0.0;
        let mut dy = [0.0; 4];
        for s in samples {
            self.forward_raw(&s.input.features(), ws);
            let t = s.target_vec(m);
            for o in 0..m {
                let r = ws.y[o] - t[o];
                loss += r * r;
                dy[o] = 2.0 * r * scale;
            }
            self.backward(ws, &dy[..m], grad);
        }
        loss * scale
    }

    /// Smallest `|pre-activation|` over every rectified unit for `window`.
    /// Finite differences straddle the kink when this is below the step size.
    pub fn kink_margin(&self, window: &PathWindow) -> f64 {
        let mut ws = Workspace::new(&self.arch);
        self.forward_raw(&window.features(), &mut ws);
        ws.pre.iter().flatten().fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }

    /// Data-term mean squared error, no regularizer.
    pub fn mse(&self, samples: &[TrainSample]) -> f64 {
        let mut ws = Workspace::new(&self.arch);
        let m = self.arch.outputs;
        let mut loss = 0.0;
        for s in samples {
            self.forward_raw(&s.input.features(), &mut ws);
            let t = s.target_vec(m);
            loss += (0..m).map(|o| (ws.y[o] - t[o]) * (ws.y[o] - t[o])).sum::<f64>();
        }
        loss / (samples.len() * m) as f64
    }
}

/// Per-sample scratch buffers for forward and backward passes.
struct Workspace {
    /// Block inputs: the raw window, then the output of blocks 1-4.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of blocks 1-4 and of layer 5.
    pre: Vec<Vec<f64>>,
    patches: Vec<Vec<f64>>,
    a5: Vec<f64>,
    y: [f64; 4],
    outputs: usize,
    da: Vec<f64>,
    dz: Vec<f64>,
    dx: Vec<f64>,
    dpatch: Vec<f64>,
}

impl Workspace {
    fn new(arch: &Architecture) -> Self {
        let h = arch.hidden();
        let mut acts = alloc::vec![alloc::vec![0.0; h]; BLOCKS + 1];
        acts[0] = alloc::vec![0.0; WINDOW * arch.in_channels];
        let patches = (0..BLOCKS)
            .map(|l| {
                let cin = if l == 0 { arch.in_channels } else { arch.conv_channels };
                alloc::vec![0.0; WINDOW * arch.kernel * cin]
            })
            .collect();
        let widest = h.max(WINDOW * arch.in_channels);
        Self {
            acts,
            pre: alloc::vec![alloc::vec![0.0; h]; BLOCKS + 1],
            patches,
            a5: alloc::vec![0.0; h],
            y: [0.0; 4],
            outputs: arch.outputs,
            da: alloc::vec![0.0; widest],
            dz: alloc::vec![0.0; h],
            dx: alloc::vec![0.0; widest],
            dpatch: alloc::vec![0.0; WINDOW * arch.kernel * arch.conv_channels.max(arch.in_channels)],
        }
    }

    fn output(&self) -> &[f64] {
        &self.y[..self.outputs]
    }
}

#[inline]
fn leaky(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        slope * z
    }
}

#[inline]
fn leaky_grad(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        slope
    }
}

/// Dot product with four independent accumulators (fixed order, so results
/// are reproducible while the dependency chain stays short).
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `patches[t][k][c] = x[t + k - pad][c]`, zero outside the window.
fn im2col(x: &[f64], cin: usize, kernel: usize, patches: &mut [f64]) {
    let pad = kernel / 2;
    let patch_len = kernel * cin;
    for t in 0..WINDOW {
        for k in 0..kernel {
            let dst = &mut patches[t * patch_len + k * cin..t * patch_len + (k + 1) * cin];
            let src = (t + k).checked_sub(pad).filter(|&s| s < WINDOW);
            match src {
                Some(s) => dst.copy_from_slice(&x[s * cin..(s + 1) * cin]),
                None => dst.iter_mut().for_each(|v| *v = 0.0),
            }
        }
    }
}

fn col2im_add(dpatches: &[f64], cin: usize, kernel: usize, dx: &mut [f64]) {
    let pad = kernel / 2;
    let patch_len = kernel * cin;
    for t in 0..WINDOW {
        for k in 0..kernel {
            if let Some(s) = (t + k).checked_sub(pad).filter(|&s| s < WINDOW) {
                let src = &dpatches[t * patch_len + k * cin..t * patch_len + (k + 1) * cin];
                for (d, v) in dx[s * cin..(s + 1) * cin].iter_mut().zip(src) {
                    *d += v;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    /// `lr0` for the first epoch, then `decay_base^epoch`.
    Literal,
    /// `lr0 * decay_base^epoch`.
    Multiplicative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub lr0: f64,
    pub lr_decay_base: f64,
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16384,
            momentum: 0.9,
            weight_decay: 0.001,
            epochs: 1000,
            lr0: 0.4,
            lr_decay_base: 0.99,
            schedule: LrSchedule::Literal,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CombiNetError> {
        if self.batch_size == 0 {
            return Err(CombiNetError::TrainConfig("batch_size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(CombiNetError::TrainConfig("momentum must lie in [0, 1)"));
        }
        if self.epochs == 0 {
            return Err(CombiNetError::TrainConfig("epochs must be >= 1"));
        }
        if !(self.lr0 > 0.0) || !(self.lr_decay_base > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(CombiNetError::TrainConfig("lr0, lr_decay_base must be positive and weight_decay >= 0"));
        }
        Ok(())
    }

    /// Learning rate used during `epoch` (0-based).
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let decay = libm::pow(self.lr_decay_base, epoch as f64);
        match self.schedule {
            LrSchedule::Literal if epoch == 0 => self.lr0,
            LrSchedule::Literal => decay,
            LrSchedule::Multiplicative => self.lr0 * decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: CombiNetModel,
    /// Mean regularized batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub learning_rates: Vec<f64>,
}

/// Mini-batch SGD with momentum (`v ← μv + g`, `θ ← θ - lr·v`), L2 penalty in
/// the loss, seeded reshuffling every epoch.
pub fn train(dataset: &[TrainSample], arch: Architecture, cfg: &TrainConfig) -> Result<TrainReport, CombiNetError> {
    train_with(dataset, CombiNetModel::random(arch, cfg.seed)?, cfg, |_, _| {})
}

/// [`train`] from a given starting model; `on_epoch(epoch, loss)` runs after
/// every epoch.
pub fn train_with(
    dataset: &[TrainSample],
    mut model: CombiNetModel,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport, CombiNetError> {
    if dataset.is_empty() {
        return Err(CombiNetError::EmptyDataset);
    }
    cfg.validate()?;
    let n_params = model.layout.total;
    let mut velocity = alloc::vec![0.0; n_params];
    let mut grad = alloc::vec![0.0; n_params];
    let mut ws = Workspace::new(&model.arch);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_c0de);
    let mut batch = Vec::with_capacity(cfg.batch_size.min(dataset.len()));
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut learning_rates = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        learning_rates.push(lr);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| dataset[i]));
            grad.iter_mut().for_each(|g| *g = 0.0);
            let data = model.accumulate(&batch, &mut ws, &mut grad);
            let mut reg = 0.0;
            for ((g, v), p) in grad.iter_mut().zip(&mut velocity).zip(&mut model.params) {
                *g += cfg.weight_decay * *p;
                reg += *p * *p;
                *v = cfg.momentum * *v + *g;
                *p -= lr * *v;
            }
            let loss = data + 0.5 * cfg.weight_decay * reg;
            if !loss.is_finite() {
                return Err(CombiNetError::Diverged { epoch, batch: bi });
            }
            epoch_loss += loss;
            batches += 1;
        }
        let mean = epoch_loss / batches as f64;
        epoch_losses.push(mean);
        on_epoch(epoch, mean);
    }
    model.check_finite()?;
    Ok(TrainReport {
        model,
        epoch_losses,
        learning_rates,
    })
}

/// Largest relative difference between `analytic` and central finite
/// differences of the regularized loss at `sample`, over every parameter.
///
/// The relative error of one entry is `|a - n| / max(|a|, |n|, 1e-4)`. The
/// floor keeps near-zero entries from amplifying the ~1e-11 rounding noise of
/// the difference quotient. Results are only meaningful when no
/// pre-activation sits within `epsilon`-scale reach of the rectifier kink
/// (see [`CombiNetModel::kink_margin`]).
pub fn gradient_check_against(
    model: &CombiNetModel,
    sample: &TrainSample,
    weight_decay: f64,
    epsilon: f64,
    analytic: &[f64],
) -> f64 {
    let batch = [*sample];
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let norm: f64 = model.params.iter().map(|p| p * p).sum();
    for i in 0..model.params.len() {
        let orig = probe.params[i];
        // the squared norm is updated for the one moved parameter, not resummed
        let rest = norm - orig * orig;
        let loss = |probe: &CombiNetModel, v: f64| probe.mse(&batch) + 0.5 * weight_decay * (rest + v * v);
        probe.params[i] = orig + epsilon;
        let up = loss(&probe, orig + epsilon);
        probe.params[i] = orig - epsilon;
        let down = loss(&probe, orig - epsilon);
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(1e-4);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}

/// [`gradient_check_against`] using the model's own backpropagation.
pub fn gradient_check(model: &CombiNetModel, sample: &TrainSample, weight_decay: f64, epsilon: f64) -> f64 {
    let (_, analytic) = model.loss_and_gradient(core::slice::from_ref(sample), weight_decay);
    gradient_check_against(model, sample, weight_decay, epsilon, &analytic)
}

/// `2·last - previous`, clamped into the unit square.
pub fn linear_extrapolation(prev: (f64, f64), last: (f64, f64)) -> (f64, f64) {
    (
        (2.0 * last.0 - prev.0).clamp(0.0, 1.0),
        (2.0 * last.1 - prev.1).clamp(0.0, 1.0),
    )
}

/// Next-center prediction from whatever history exists: the network once four
/// boxes are known, linear extrapolation from two or three, the box itself
/// from one.
pub fn predict_or_extrapolate(model: &CombiNetModel, history: &[NormBBox]) -> Result<(f64, f64), CombiNetError> {
    match history.len() {
        0 => Err(CombiNetError::EmptyHistory),
        1 => Ok(history[0].center()),
        n if n < WINDOW => Ok(linear_extrapolation(history[n - 2].center(), history[n - 1].center())),
        n => {
            let mut w = [NormBBox::default(); WINDOW];
            w.copy_from_slice(&history[n - WINDOW..]);
            model.forward(&PathWindow(w))
        }
    }
}

/// Training pairs from annotated sequences.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowSet {
    pub samples: Vec<TrainSample>,
    /// Sequences shorter than five frames.
    pub skipped_short: usize,
}

/// Sliding five-frame windows: four input boxes, fifth box as target.
/// `None` frames (absent or occluded, or boxes entirely outside the image)
/// break windows.
pub fn load_windows(sequences: &[(ImageDims, Vec<Option<BBox>>)]) -> WindowSet {
    let mut out = WindowSet::default();
    for (dims, boxes) in sequences {
        if boxes.len() < WINDOW + 1 {
            out.skipped_short += 1;
            log::warn!("skipping sequence with {} frames (< {})", boxes.len(), WINDOW + 1);
            continue;
        }
        let normed: Vec<Option<NormBBox>> = boxes
            .iter()
            .map(|b| b.and_then(|b| normalize(b, *dims).ok()))
            .collect();
        for w in normed.windows(WINDOW + 1) {
            if w.iter().all(Option::is_some) {
                let mut input = [NormBBox::default(); WINDOW];
                for (dst, src) in input.iter_mut().zip(w) {
                    *dst = src.unwrap();
                }
                out.samples.push(TrainSample {
                    input: PathWindow(input),
                    target: w[WINDOW].unwrap(),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn small_arch() -> Architecture {
        Architecture {
            conv_channels: 4,
            ..Architecture::default()
        }
    }

    fn window(centers: [(f64, f64); 4]) -> PathWindow {
        PathWindow(centers.map(|(x, y)| NormBBox::new(x, y, 0.1, 0.1)))
    }

    fn random_sample(rng: &mut ChaCha8Rng) -> TrainSample {
        let mut boxes = [NormBBox::default(); 5];
        for b in &mut boxes {
            *b = NormBBox::new(
                rng.random_range(0.1..0.9),
                rng.random_range(0.1..0.9),
                rng.random_range(0.05..0.3),
                rng.random_range(0.05..0.3),
            );
        }
        TrainSample {
            input: PathWindow([boxes[0], boxes[1], boxes[2], boxes[3]]),
            target: boxes[4],
        }
    }

    /// Straight-line reference implementation: explicit loops over the time
    /// axis with padding checks, no im2col and no flat-buffer tricks.
    fn reference_forward(model: &CombiNetModel, win: &PathWindow) -> Vec<f64> {
        let arch = model.architecture();
        let lay = model.layout();
        let p = model.params();
        let h = arch.hidden();
        let cc = arch.conv_channels;
        let kern = arch.kernel as isize;
        let lr = |z: f64| if z > 0.0 { z } else { arch.leaky_slope * z };
        let mut x: Vec<f64> = win.features().to_vec();
        for blk in &lay.blocks {
            let cin = blk.in_channels;
            let mut out = vec![0.0; h];
            for t in 0..WINDOW as isize {
                for co in 0..cc {
                    let mut conv = p[blk.conv_b.start + co];
                    for k in 0..kern {
                        let s = t + k - kern / 2;
                        if s < 0 || s >= WINDOW as isize {
                            continue;
                        }
                        for ci in 0..cin {
                            let w = p[blk.conv_w.start + (co * kern as usize + k as usize) * cin + ci];
                            conv += w * x[s as usize * cin + ci];
                        }
                    }
                    let o = t as usize * cc + co;
                    let mut dense = p[blk.dense_b.start + o];
                    for i in 0..x.len() {
                        dense += p[blk.dense_w.start + o * x.len() + i] * x[i];
                    }
                    out[o] = lr((conv + dense) / 2.0);
                }
            }
            x = out;
        }
        let mut a5 = vec![0.0; h];
        for o in 0..h {
            let mut z = p[lay.fc5_b.start + o];
            for i in 0..h {
                z += p[lay.fc5_w.start + o * h + i] * x[i];
            }
            a5[o] = lr(z);
        }
        (0..arch.outputs)
            .map(|o| {
                let mut z = p[lay.fc6_b.start + o];
                for i in 0..h {
                    z += p[lay.fc6_w.start + o * h + i] * a5[i];
                }
                z
            })
            .collect()
    }

    #[test]
    fn default_architecture_is_small() {
        let m = CombiNetModel::zeros(Architecture::default()).unwrap();
        assert!(m.params().len() < 40_000, "{}", m.params().len());
        assert_eq!(m.layout().total, m.params().len());
    }

    #[test]
    fn zero_model_outputs_final_bias() {
        let mut m = CombiNetModel::zeros(Architecture::default()).unwrap();
        let w = window([(0.2, 0.3); 4]);
        assert_eq!(m.forward(&w).unwrap(), (0.0, 0.0));
        let b6 = m.layout().fc6_b.clone();
        m.params_mut()[b6.start] = 0.25;
        m.params_mut()[b6.start + 1] = 1.7;
        assert_eq!(m.forward(&w).unwrap(), (0.25, 1.0));
    }

    #[test]
    fn forward_matches_reference_implementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..5 {
            for arch in [Architecture::default(), small_arch(), Architecture { kernel: 5, outputs: 4, ..small_arch() }] {
                let m = CombiNetModel::random(arch, seed).unwrap();
                let s = random_sample(&mut rng);
                let fast = m.forward_unclamped(&s.input);
                let slow = reference_forward(&m, &s.input);
                for (a, b) in fast.iter().zip(&slow) {
                    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let m = CombiNetModel::random(Architecture::default(), 3).unwrap();
        let w = window([(0.1, 0.2), (0.15, 0.25), (0.2, 0.3), (0.25, 0.35)]);
        assert_eq!(m.forward(&w).unwrap(), m.clone().forward(&w).unwrap());
    }

    #[test]
    fn forward_rejects_non_finite_params() {
        let mut m = CombiNetModel::zeros(Architecture::default()).unwrap();
        m.params_mut()[17] = f64::NAN;
        assert_eq!(m.forward(&window([(0.5, 0.5); 4])), Err(CombiNetError::NonFiniteParam(17)));
    }

    #[test]
    fn gradient_check_random_small_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..5 {
            let m = CombiNetModel::random(small_arch(), seed).unwrap();
            let s = random_sample(&mut rng);
            let err = gradient_check(&m, &s, 0.001, 1e-5);
            assert!(err < 1e-6, "seed {seed}: {err}");
        }
    }

    #[test]
    fn gradient_check_full_size_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = CombiNetModel::random(Architecture::default(), 99).unwrap();
        // 320 rectified units: draw until no unit sits next to the kink
        let s = loop {
            let s = random_sample(&mut rng);
            if m.kink_margin(&s.input) > 1e-3 {
                break s;
            }
        };
        let err = gradient_check(&m, &s, 0.001, 1e-5);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn gradient_check_zero_model_sees_only_regularizer() {
        let m = CombiNetModel::zeros(small_arch()).unwrap();
        let s = TrainSample {
            input: window([(0.5, 0.5); 4]),
            target: NormBBox::new(0.0, 0.0, 0.1, 0.1),
        };
        let (_, g) = m.loss_and_gradient(&[s], 0.001);
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(gradient_check(&m, &s, 0.001, 1e-5) < 1e-6);
    }

    #[test]
    fn gradient_check_detects_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = CombiNetModel::random(small_arch(), 1).unwrap();
        let s = random_sample(&mut rng);
        let (_, mut g) = m.loss_and_gradient(&[s], 0.001);
        let i = (0..g.len()).max_by(|&a, &b| g[a].abs().partial_cmp(&g[b].abs()).unwrap()).unwrap();
        g[i] *= 2.0;
        assert!(gradient_check_against(&m, &s, 0.001, 1e-5, &g) > 0.1);
    }

    #[test]
    fn predict_or_extrapolate_bootstrap() {
        let m = CombiNetModel::random(Architecture::default(), 0).unwrap();
        let b = |cx: f64| NormBBox::new(cx, 0.5, 0.1, 0.1);
        assert_eq!(predict_or_extrapolate(&m, &[]), Err(CombiNetError::EmptyHistory));
        assert_eq!(predict_or_extrapolate(&m, &[b(0.5)]).unwrap(), (0.5, 0.5));
        let (x, y) = predict_or_extrapolate(&m, &[b(0.40), b(0.44)]).unwrap();
        assert!((x - 0.48).abs() < 1e-12 && (y - 0.5).abs() < 1e-12);
        let hist = [b(0.1), b(0.2), b(0.3), b(0.4), b(0.45)];
        let direct = m.forward(&PathWindow([hist[1], hist[2], hist[3], hist[4]])).unwrap();
        assert_eq!(predict_or_extrapolate(&m, &hist).unwrap(), direct);
    }

    #[test]
    fn window_counts() {
        let dims = ImageDims::new(100, 100);
        let bx = Some(BBox::new(10.0, 10.0, 20.0, 20.0));
        let five = load_windows(&[(dims, vec![bx; 5])]);
        assert_eq!(five.samples.len(), 1);
        assert_eq!(load_windows(&[(dims, vec![bx; 100])]).samples.len(), 96);
        let mut gap = vec![bx; 10];
        gap[5] = None;
        assert_eq!(load_windows(&[(dims, gap)]).samples.len(), 1);
        let short = load_windows(&[(dims, vec![bx; 4]), (dims, vec![bx; 6])]);
        assert_eq!(short.skipped_short, 1);
        assert_eq!(short.samples.len(), 2);
    }

    #[test]
    fn literal_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.learning_rate(0), 0.4);
        for e in 1..50 {
            assert_eq!(cfg.learning_rate(e), libm::pow(0.99, e as f64));
        }
        let m = TrainConfig {
            schedule: LrSchedule::Multiplicative,
            ..cfg
        };
        assert!((m.learning_rate(2) - 0.4 * 0.99 * 0.99).abs() < 1e-15);
    }

    #[test]
    fn training_rejects_empty_and_bad_config() {
        assert_eq!(
            train(&[], Architecture::default(), &TrainConfig::default()).unwrap_err(),
            CombiNetError::EmptyDataset
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data = [random_sample(&mut rng)];
        let bad = TrainConfig {
            momentum: 1.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&data, small_arch(), &bad), Err(CombiNetError::TrainConfig(_))));
    }

    #[test]
    fn training_reports_divergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data: Vec<_> = (0..64).map(|_| random_sample(&mut rng)).collect();
        let cfg = TrainConfig {
            lr0: 1e6,
            schedule: LrSchedule::Multiplicative,
            epochs: 5,
            batch_size: 8,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&data, small_arch(), &cfg), Err(CombiNetError::Diverged { .. })));
    }

    proptest! {
        #[test]
        fn clamped_outputs_for_any_parameters(seed in any::<u64>(), scale in 0.1f64..50.0) {
            let mut m = CombiNetModel::random(small_arch(), seed).unwrap();
            m.params_mut().iter_mut().for_each(|p| *p *= scale);
            let (x, y) = m.forward(&window([(0.3, 0.3), (0.4, 0.4), (0.5, 0.5), (0.6, 0.6)])).unwrap();
            prop_assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
        }
    }
}
