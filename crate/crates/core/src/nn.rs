//! Small convolutional building blocks with hand-written backward passes.
//!
//! Parameters live in one flat `f32` arena per model; layers hold offset
//! ranges into it. Forward passes cache whatever the backward pass needs in
//! explicit tape structs owned by the caller. Activations are single
//! precision: the networks are trained and differentiated in f32, while the
//! surrounding physics stays in f64.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;

use crate::latent::{Latent, LatentShape};
use crate::rng::SeedRng;

/// A `channels x height x width` activation tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct T3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl T3 {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w, data: vec![0.0; c * h * w] }
    }

    pub fn from_latent(z: &Latent) -> Self {
        let s = z.shape();
        Self {
            c: s.channels,
            h: s.height,
            w: s.width,
            data: z.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_latent(&self) -> Latent {
        let shape = LatentShape { channels: self.c, height: self.h, width: self.w };
        Latent::new(shape, self.data.iter().map(|&v| v as f64).collect())
            .expect("activation tensors are finite")
    }

    pub fn add_assign(&mut self, other: &T3) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Offset allocator for a model's parameter arena.
#[derive(Debug, Default)]
pub struct ParamLayout {
    next: usize,
}

impl ParamLayout {
    pub fn alloc(&mut self, n: usize) -> Range<usize> {
        let start = self.next;
        self.next += n;
        start..self.next
    }

    pub fn total(&self) -> usize {
        self.next
    }
}

/// 3x3 convolution, zero padding 1, stride 1 or 2.
#[derive(Debug, Clone)]
pub struct Conv3x3 {
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
    w: Range<usize>,
    b: Range<usize>,
}

impl Conv3x3 {
    pub fn new(layout: &mut ParamLayout, in_ch: usize, out_ch: usize, stride: usize) -> Self {
        assert!(stride == 1 || stride == 2);
        let w = layout.alloc(out_ch * in_ch * 9);
        let b = layout.alloc(out_ch);
        Self { in_ch, out_ch, stride, w, b }
    }

    /// He-uniform weight init, zero bias. `gain = 0` zero-initializes the
    /// whole layer (used for output heads).
    pub fn init_params(&self, params: &mut [f32], rng: &mut SeedRng, gain: f32) {
        let limit = gain * libm::sqrtf(6.0 / (self.in_ch as f32 * 9.0));
        for p in params[self.w.clone()].iter_mut() {
            *p = rng.gen_range(-1.0f32..1.0) * limit;
        }
        params[self.b.clone()].fill(0.0);
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        if self.stride == 1 {
            (h, w)
        } else {
            ((h + 1) / 2, (w + 1) / 2)
        }
    }

    pub fn forward(&self, params: &[f32], x: &T3) -> T3 {
        debug_assert_eq!(x.c, self.in_ch);
        let (oh, ow) = self.out_size(x.h, x.w);
        let mut out = T3::zeros(self.out_ch, oh, ow);
        let weights = &params[self.w.clone()];
        let bias = &params[self.b.clone()];
        if self.stride == 1 {
            for oc in 0..self.out_ch {
                let o_base = oc * oh * ow;
                out.data[o_base..o_base + oh * ow].fill(bias[oc]);
                for ic in 0..self.in_ch {
                    let x_base = ic * x.h * x.w;
                    for ky in 0..3usize {
                        for kx in 0..3usize {
                            let wv = weights[((oc * self.in_ch + ic) * 3 + ky) * 3 + kx];
                            if wv == 0.0 {
                                continue;
                            }
                            let dy = ky as isize - 1;
                            let dx = kx as isize - 1;
                            for oy in 0..oh {
                                let iy = oy as isize + dy;
                                if iy < 0 || iy >= x.h as isize {
                                    continue;
                                }
                                let (x0, x1) = col_range(ow, dx);
                                let orow = &mut out.data
                                    [o_base + oy * ow + x0..o_base + oy * ow + x1];
                                let xrow_base = x_base + iy as usize * x.w;
                                let xrow = &x.data[(xrow_base as isize + x0 as isize + dx)
                                    as usize
                                    ..(xrow_base as isize + x1 as isize + dx) as usize];
                                for (o, xv) in orow.iter_mut().zip(xrow) {
                                    *o += wv * xv;
                                }
                            }
                        }
                    }
                }
            }
        } else {
            for oc in 0..self.out_ch {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[oc];
                        for ic in 0..self.in_ch {
                            for ky in 0..3usize {
                                let iy = (oy * 2 + ky) as isize - 1;
                                if iy < 0 || iy >= x.h as isize {
                                    continue;
                                }
                                for kx in 0..3usize {
                                    let ix = (ox * 2 + kx) as isize - 1;
                                    if ix < 0 || ix >= x.w as isize {
                                        continue;
                                    }
                                    acc += weights[((oc * self.in_ch + ic) * 3 + ky) * 3 + kx]
                                        * x.data[(ic * x.h + iy as usize) * x.w + ix as usize];
                                }
                            }
                        }
                        out.data[(oc * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    /// Gradient with respect to the input, given upstream `dy` and the input
    /// spatial size.
    pub fn backward_input(&self, params: &[f32], dy: &T3, in_h: usize, in_w: usize) -> T3 {
        debug_assert_eq!(dy.c, self.out_ch);
        let mut dx = T3::zeros(self.in_ch, in_h, in_w);
        let weights = &params[self.w.clone()];
        if self.stride == 1 {
            for oc in 0..self.out_ch {
                let dy_base = oc * dy.h * dy.w;
                for ic in 0..self.in_ch {
                    let dx_base = ic * in_h * in_w;
                    for ky in 0..3usize {
                        for kx in 0..3usize {
                            let wv = weights[((oc * self.in_ch + ic) * 3 + ky) * 3 + kx];
                            if wv == 0.0 {
                                continue;
                            }
                            let dyo = ky as isize - 1;
                            let dxo = kx as isize - 1;
                            // dx[iy][ix] += w * dy[iy - dyo][ix - dxo]
                            for iy in 0..in_h {
                                let sy = iy as isize - dyo;
                                if sy < 0 || sy >= dy.h as isize {
                                    continue;
                                }
                                let (x0, x1) = col_range(in_w, -dxo);
                                let drow = &mut dx.data
                                    [dx_base + iy * in_w + x0..dx_base + iy * in_w + x1];
                                let srow_base = dy_base + sy as usize * dy.w;
                                let srow = &dy.data[(srow_base as isize + x0 as isize - dxo)
                                    as usize
                                    ..(srow_base as isize + x1 as isize - dxo) as usize];
                                for (d, s) in drow.iter_mut().zip(srow) {
                                    *d += wv * s;
                                }
                            }
                        }
                    }
                }
            }
        } else {
            for oc in 0..self.out_ch {
                for oy in 0..dy.h {
                    for ox in 0..dy.w {
                        let g = dy.data[(oc * dy.h + oy) * dy.w + ox];
                        if g == 0.0 {
                            continue;
                        }
                        for ic in 0..self.in_ch {
                            for ky in 0..3usize {
                                let iy = (oy * 2 + ky) as isize - 1;
                                if iy < 0 || iy >= in_h as isize {
                                    continue;
                                }
                                for kx in 0..3usize {
                                    let ix = (ox * 2 + kx) as isize - 1;
                                    if ix < 0 || ix >= in_w as isize {
                                        continue;
                                    }
                                    dx.data[(ic * in_h + iy as usize) * in_w + ix as usize] +=
                                        weights[((oc * self.in_ch + ic) * 3 + ky) * 3 + kx] * g;
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    /// Accumulate weight and bias gradients into `grads`.
    pub fn backward_params(&self, x: &T3, dy: &T3, grads: &mut [f32]) {
        let (wg_range, bg_range) = (self.w.clone(), self.b.clone());
        if self.stride == 1 {
            for oc in 0..self.out_ch {
                let dy_base = oc * dy.h * dy.w;
                let mut bacc = 0.0f32;
                for v in &dy.data[dy_base..dy_base + dy.h * dy.w] {
                    bacc += v;
                }
                grads[bg_range.start + oc] += bacc;
                for ic in 0..self.in_ch {
                    let x_base = ic * x.h * x.w;
                    for ky in 0..3usize {
                        for kx in 0..3usize {
                            let dyo = ky as isize - 1;
                            let dxo = kx as isize - 1;
                            let mut acc = 0.0f32;
                            for oy in 0..dy.h {
                                let iy = oy as isize + dyo;
                                if iy < 0 || iy >= x.h as isize {
                                    continue;
                                }
                                let (x0, x1) = col_range(dy.w, dxo);
                                let drow = &dy.data[dy_base + oy * dy.w + x0
                                    ..dy_base + oy * dy.w + x1];
                                let xrow_base = x_base + iy as usize * x.w;
                                let xrow = &x.data[(xrow_base as isize + x0 as isize + dxo)
                                    as usize
                                    ..(xrow_base as isize + x1 as isize + dxo) as usize];
                                for (d, xv) in drow.iter().zip(xrow) {
                                    acc += d * xv;
                                }
                            }
                            grads[wg_range.start + ((oc * self.in_ch + ic) * 3 + ky) * 3 + kx] +=
                                acc;
                        }
                    }
                }
            }
        } else {
            for oc in 0..self.out_ch {
                let mut bacc = 0.0f32;
                for oy in 0..dy.h {
                    for ox in 0..dy.w {
                        let g = dy.data[(oc * dy.h + oy) * dy.w + ox];
                        bacc += g;
                        if g == 0.0 {
                            continue;
                        }
                        for ic in 0..self.in_ch {
                            for ky in 0..3usize {
                                let iy = (oy * 2 + ky) as isize - 1;
                                if iy < 0 || iy >= x.h as isize {
                                    continue;
                                }
                                for kx in 0..3usize {
                                    let ix = (ox * 2 + kx) as isize - 1;
                                    if ix < 0 || ix >= x.w as isize {
                                        continue;
                                    }
                                    grads[wg_range.start
                                        + ((oc * self.in_ch + ic) * 3 + ky) * 3 + kx] += g
                                        * x.data[(ic * x.h + iy as usize) * x.w + ix as usize];
                                }
                            }
                        }
                    }
                }
                grads[bg_range.start + oc] += bacc;
            }
        }
    }
}

#[inline]
fn col_range(n: usize, shift: isize) -> (usize, usize) {
    // valid output columns ox such that 0 <= ox + shift < n
    let lo = if shift < 0 { (-shift) as usize } else { 0 };
    let hi = if shift > 0 { n - shift as usize } else { n };
    (lo.min(n), hi.max(lo).min(n))
}

/// Dense layer used for time-embedding projections.
#[derive(Debug, Clone)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    w: Range<usize>,
    b: Range<usize>,
}

impl Linear {
    pub fn new(layout: &mut ParamLayout, in_dim: usize, out_dim: usize) -> Self {
        let w = layout.alloc(out_dim * in_dim);
        let b = layout.alloc(out_dim);
        Self { in_dim, out_dim, w, b }
    }

    pub fn init_params(&self, params: &mut [f32], rng: &mut SeedRng) {
        let limit = libm::sqrtf(6.0 / self.in_dim as f32);
        for p in params[self.w.clone()].iter_mut() {
            *p = rng.gen_range(-1.0f32..1.0) * limit;
        }
        params[self.b.clone()].fill(0.0);
    }

    /// Zero init: the layer starts as a no-op contribution.
    pub fn init_zero(&self, params: &mut [f32]) {
        params[self.w.clone()].fill(0.0);
        params[self.b.clone()].fill(0.0);
    }

    pub fn forward(&self, params: &[f32], x: &[f32]) -> Vec<f32> {
        debug_assert_eq!(x.len(), self.in_dim);
        let weights = &params[self.w.clone()];
        let bias = &params[self.b.clone()];
        (0..self.out_dim)
            .map(|o| {
                let row = &weights[o * self.in_dim..(o + 1) * self.in_dim];
                bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f32>()
            })
            .collect()
    }

    pub fn backward_params(&self, x: &[f32], dy: &[f32], grads: &mut [f32]) {
        for o in 0..self.out_dim {
            grads[self.b.start + o] += dy[o];
            let row = &mut grads[self.w.start + o * self.in_dim..self.w.start + (o + 1) * self.in_dim];
            for (g, v) in row.iter_mut().zip(x) {
                *g += dy[o] * v;
            }
        }
    }

    /// `W^T dy`, accumulated into `dx`.
    pub fn backward_input_into(&self, params: &[f32], dy: &[f32], dx: &mut [f32]) {
        let weights = &params[self.w.clone()];
        for o in 0..self.out_dim {
            let row = &weights[o * self.in_dim..(o + 1) * self.in_dim];
            for (d, w) in dx.iter_mut().zip(row) {
                *d += dy[o] * w;
            }
        }
    }
}

#[inline]
pub fn silu_vec(x: &[f32]) -> Vec<f32> {
    x.iter().map(|&v| v * sigmoid(v)).collect()
}

#[inline]
pub fn silu_backward_vec(pre: &[f32], dy: &[f32]) -> Vec<f32> {
    pre.iter()
        .zip(dy)
        .map(|(&v, &g)| {
            let s = sigmoid(v);
            g * s * (1.0 + v * (1.0 - s))
        })
        .collect()
}

/// Two-layer SiLU MLP applied to the sinusoidal embedding before the
/// per-block projections; gives the conditioning path enough expressive power
/// to represent noise-level-dependent gains.
#[derive(Debug, Clone)]
pub struct TimeMlp {
    pub l1: Linear,
    pub l2: Linear,
}

pub struct TimeMlpTape {
    pub raw: Vec<f32>,
    pre1: Vec<f32>,
    h1: Vec<f32>,
    pre2: Vec<f32>,
}

impl TimeMlp {
    pub fn new(layout: &mut ParamLayout, embed_dim: usize, hidden: usize) -> Self {
        Self { l1: Linear::new(layout, embed_dim, hidden), l2: Linear::new(layout, hidden, hidden) }
    }

    pub fn init_params(&self, params: &mut [f32], rng: &mut SeedRng) {
        self.l1.init_params(params, rng);
        self.l2.init_params(params, rng);
    }

    pub fn out_dim(&self) -> usize {
        self.l2.out_dim
    }

    pub fn forward(&self, params: &[f32], raw: &[f32]) -> (Vec<f32>, TimeMlpTape) {
        let pre1 = self.l1.forward(params, raw);
        let h1 = silu_vec(&pre1);
        let pre2 = self.l2.forward(params, &h1);
        let out = silu_vec(&pre2);
        (out, TimeMlpTape { raw: raw.to_vec(), pre1, h1, pre2 })
    }

    pub fn backward_params(&self, tape: &TimeMlpTape, d_out: &[f32], grads: &mut [f32], params: &[f32]) {
        let dpre2 = silu_backward_vec(&tape.pre2, d_out);
        self.l2.backward_params(&tape.h1, &dpre2, grads);
        let mut dh1 = vec![0.0f32; tape.h1.len()];
        self.l2.backward_input_into(params, &dpre2, &mut dh1);
        let dpre1 = silu_backward_vec(&tape.pre1, &dh1);
        self.l1.backward_params(&tape.raw, &dpre1, grads);
    }
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + libm::expf(-x))
}

/// SiLU activation, returning the output; the pre-activation is what the
/// backward pass needs.
pub fn silu(x: &T3) -> T3 {
    T3 { c: x.c, h: x.h, w: x.w, data: x.data.iter().map(|&v| v * sigmoid(v)).collect() }
}

/// `dy * silu'(pre)`.
pub fn silu_backward(pre: &T3, dy: &T3) -> T3 {
    let data = pre
        .data
        .iter()
        .zip(&dy.data)
        .map(|(&v, &g)| {
            let s = sigmoid(v);
            g * s * (1.0 + v * (1.0 - s))
        })
        .collect();
    T3 { c: pre.c, h: pre.h, w: pre.w, data }
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2(x: &T3) -> T3 {
    let (oh, ow) = (x.h * 2, x.w * 2);
    let mut out = T3::zeros(x.c, oh, ow);
    for c in 0..x.c {
        for y in 0..oh {
            for xx in 0..ow {
                out.data[(c * oh + y) * ow + xx] = x.data[(c * x.h + y / 2) * x.w + xx / 2];
            }
        }
    }
    out
}

/// Adjoint of nearest-neighbour upsampling: sum over each 2x2 block.
pub fn upsample2_backward(dy: &T3) -> T3 {
    let (ih, iw) = (dy.h / 2, dy.w / 2);
    let mut dx = T3::zeros(dy.c, ih, iw);
    for c in 0..dy.c {
        for y in 0..dy.h {
            for x in 0..dy.w {
                dx.data[(c * ih + y / 2) * iw + x / 2] += dy.data[(c * dy.h + y) * dy.w + x];
            }
        }
    }
    dx
}

/// Sinusoidal embedding of an integer timestep.
pub fn sinusoidal_embedding(t: usize, dim: usize) -> Vec<f32> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = libm::exp(-libm::log(10000.0) * i as f64 / (half.max(2) - 1) as f64);
        out.push(libm::sinf((t as f64 * freq) as f32));
    }
    for i in 0..dim - half {
        let freq = libm::exp(-libm::log(10000.0) * i as f64 / (half.max(2) - 1) as f64);
        out.push(libm::cosf((t as f64 * freq) as f32));
    }
    out
}

/// Residual block with multiplicative time conditioning:
/// `x + conv2(silu(conv1(x) * (1 + scale) + shift))` where `(scale, shift)`
/// are per-channel projections of the shared time embedding. The
/// multiplicative path lets the block express noise-level-dependent gain,
/// which a bias alone cannot.
#[derive(Debug, Clone)]
pub struct ResBlock {
    pub conv1: Conv3x3,
    pub conv2: Conv3x3,
    pub temb: Linear, // embed_dim -> 2 * channels: [scale; shift]
    channels: usize,
}

/// Activations cached by [`ResBlock::forward`].
pub struct ResBlockTape {
    pub x: T3,
    conv1_out: T3,
    pre: T3,
    hidden: T3,
    emb: Vec<f32>,
    scale: Vec<f32>,
}

impl ResBlock {
    pub fn new(layout: &mut ParamLayout, channels: usize, embed_dim: usize) -> Self {
        Self {
            conv1: Conv3x3::new(layout, channels, channels, 1),
            conv2: Conv3x3::new(layout, channels, channels, 1),
            temb: Linear::new(layout, embed_dim, 2 * channels),
            channels,
        }
    }

    pub fn init_params(&self, params: &mut [f32], rng: &mut SeedRng) {
        self.conv1.init_params(params, rng, 1.0);
        self.conv2.init_params(params, rng, 1.0);
        // zero-init conditioning: blocks start time-independent
        self.temb.init_zero(params);
    }

    pub fn forward(&self, params: &[f32], x: &T3, emb: &[f32]) -> (T3, ResBlockTape) {
        let conv1_out = self.conv1.forward(params, x);
        let film = self.temb.forward(params, emb);
        let (scale, shift) = film.split_at(self.channels);
        let plane = conv1_out.h * conv1_out.w;
        let mut pre = conv1_out.clone();
        for c in 0..pre.c {
            let (s, b) = (1.0 + scale[c], shift[c]);
            for v in pre.data[c * plane..(c + 1) * plane].iter_mut() {
                *v = *v * s + b;
            }
        }
        let hidden = silu(&pre);
        let mut out = self.conv2.forward(params, &hidden);
        out.add_assign(x);
        let tape = ResBlockTape {
            x: x.clone(),
            conv1_out,
            pre,
            hidden,
            emb: emb.to_vec(),
            scale: scale.to_vec(),
        };
        (out, tape)
    }

    /// Input gradient; parameter gradients accumulate when `grads` is given,
    /// and the embedding cotangent accumulates into `d_emb` when training the
    /// shared conditioning trunk.
    pub fn backward(
        &self,
        params: &[f32],
        tape: &ResBlockTape,
        dy: &T3,
        mut grads: Option<&mut [f32]>,
        d_emb: Option<&mut [f32]>,
    ) -> T3 {
        if let Some(g) = grads.as_deref_mut() {
            self.conv2.backward_params(&tape.hidden, dy, g);
        }
        let dh = self.conv2.backward_input(params, dy, tape.hidden.h, tape.hidden.w);
        let dpre = silu_backward(&tape.pre, &dh);
        let plane = dpre.h * dpre.w;
        let mut da = dpre.clone();
        for c in 0..da.c {
            let s = 1.0 + tape.scale[c];
            for v in da.data[c * plane..(c + 1) * plane].iter_mut() {
                *v *= s;
            }
        }
        if let Some(g) = grads.as_deref_mut() {
            let mut dfilm = vec![0.0f32; 2 * self.channels];
            for c in 0..self.channels {
                let dp = &dpre.data[c * plane..(c + 1) * plane];
                let a = &tape.conv1_out.data[c * plane..(c + 1) * plane];
                dfilm[c] = dp.iter().zip(a).map(|(d, v)| d * v).sum();
                dfilm[self.channels + c] = dp.iter().sum();
            }
            self.temb.backward_params(&tape.emb, &dfilm, g);
            if let Some(de) = d_emb {
                self.temb.backward_input_into(params, &dfilm, de);
            }
            self.conv1.backward_params(&tape.x, &da, g);
        }
        let mut dx = self.conv1.backward_input(params, &da, tape.x.h, tape.x.w);
        dx.add_assign(dy);
        dx
    }
}
