//! Windowed multi-head self-attention and the residual Swin blocks built
//! from it. Feature maps are `[H, W, C]` with H along time and W along
//! frequency.

use crate::autograd::{Bound, ParamId, Tensor, Var};
use crate::error::{Error, Result};

use super::layers::{conv_hwc, Builder, Conv2d, LayerNorm, Linear};

const MASKED: f64 = -1e9;
const MLP_RATIO: usize = 2;

/// Split `[H, W, C]` into `[(H/w)(W/w), w*w, C]` non-overlapping windows,
/// row-major over window positions.
pub fn window_partition<'t>(x: Var<'t>, w: usize) -> Result<Var<'t>> {
    let s = x.shape();
    if s.len() != 3 || w == 0 || s[0] % w != 0 || s[1] % w != 0 {
        return Err(Error::shape(format!("cannot partition {s:?} into {w}x{w} windows")));
    }
    let (h, wd, c) = (s[0], s[1], s[2]);
    x.reshape(&[h / w, w, wd / w, w, c])?
        .permute(&[0, 2, 1, 3, 4])?
        .reshape(&[(h / w) * (wd / w), w * w, c])
}

/// Inverse of [`window_partition`] for an `h x wd` map.
pub fn window_reverse<'t>(windows: Var<'t>, w: usize, h: usize, wd: usize) -> Result<Var<'t>> {
    let s = windows.shape();
    if s.len() != 3 || w == 0 || h % w != 0 || wd % w != 0 || s[0] != (h / w) * (wd / w) || s[1] != w * w {
        return Err(Error::shape(format!("windows {s:?} do not tile a {h}x{wd} map with w={w}")));
    }
    let c = s[2];
    windows
        .reshape(&[h / w, wd / w, w, w, c])?
        .permute(&[0, 2, 1, 3, 4])?
        .reshape(&[h, wd, c])
}

/// Additive mask `[nW, 1, N, N]` for a map of `h x wd` valid cells padded to
/// `hp x wp` and cyclically shifted by `(-sh, -sw)`. Keys that are padding or
/// that wrapped around from the opposite edge of the map are excluded.
fn attention_mask(h: usize, wd: usize, hp: usize, wp: usize, w: usize, sh: usize, sw: usize) -> Option<Tensor> {
    if sh == 0 && sw == 0 && h == hp && wd == wp {
        return None;
    }
    let n = w * w;
    let nw = (hp / w) * (wp / w);
    let mut label = vec![0usize; hp * wp];
    let mut pad = vec![false; hp * wp];
    for r in 0..hp {
        for c in 0..wp {
            let i = r * wp + c;
            label[i] = usize::from(sh > 0 && r >= hp - sh) * 2 + usize::from(sw > 0 && c >= wp - sw);
            pad[i] = (r + sh) % hp >= h || (c + sw) % wp >= wd;
        }
    }
    let mut mask = vec![0.0; nw * n * n];
    for wr in 0..hp / w {
        for wc in 0..wp / w {
            let win = wr * (wp / w) + wc;
            let cell = |t: usize| (wr * w + t / w) * wp + wc * w + t % w;
            for qi in 0..n {
                for kj in 0..n {
                    let (a, b) = (cell(qi), cell(kj));
                    if pad[b] || label[a] != label[b] {
                        mask[(win * n + qi) * n + kj] = MASKED;
                    }
                }
            }
        }
    }
    Some(Tensor::new(vec![nw, 1, n, n], mask).expect("mask shape"))
}

/// Multi-head self-attention inside `w x w` windows with a learned
/// per-head bias over window positions.
#[derive(Debug, Clone)]
pub struct WindowAttention {
    pub dim: usize,
    pub heads: usize,
    pub window: usize,
    pub qkv: Linear,
    pub proj: Linear,
    pub bias: ParamId,
}

impl WindowAttention {
    pub fn new(bld: &mut Builder, name: &str, dim: usize, heads: usize, window: usize) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!("dim {dim} is not divisible by {heads} heads")));
        }
        if window == 0 {
            return Err(Error::Config("window size must be positive".into()));
        }
        let n = window * window;
        Ok(Self {
            dim,
            heads,
            window,
            qkv: Linear::new(bld, &format!("{name}.qkv"), dim, 3 * dim),
            proj: Linear::new(bld, &format!("{name}.proj"), dim, dim),
            bias: bld.constant(&format!("{name}.bias"), &[heads, n, n], 0.0),
        })
    }

    /// Attend within windows after a cyclic shift by `-shift` on both axes
    /// (skipped along an axis no longer than one window), then undo the
    /// shift. Maps whose sides are not window multiples are zero-padded and
    /// the padding is masked out of every key set.
    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>, shift: usize) -> Result<Var<'t>> {
        let s = x.shape();
        if s.len() != 3 || s[2] != self.dim {
            return Err(Error::shape(format!("attention expects [H, W, {}], got {s:?}", self.dim)));
        }
        let w = self.window;
        if shift >= w {
            return Err(Error::invalid(format!("shift {shift} must be below window {w}")));
        }
        let (h, wd, c) = (s[0], s[1], s[2]);
        let (hp, wp) = (h.div_ceil(w) * w, wd.div_ceil(w) * w);
        let sh = if hp > w { shift } else { 0 };
        let sw = if wp > w { shift } else { 0 };

        let mut y = x.pad(0, 0, hp - h)?.pad(1, 0, wp - wd)?;
        if sh > 0 {
            y = y.roll(0, -(sh as isize))?;
        }
        if sw > 0 {
            y = y.roll(1, -(sw as isize))?;
        }
        let win = window_partition(y, w)?;
        let nw = win.shape()[0];
        let n = w * w;
        let d = c / self.heads;
        let qkv = self.qkv.forward(p, win)?;
        let head_split = |i: usize| -> Result<Var<'t>> {
            qkv.slice(2, i * c..(i + 1) * c)?
                .reshape(&[nw, n, self.heads, d])?
                .permute(&[0, 2, 1, 3])?
                .reshape(&[nw * self.heads, n, d])
        };
        let (q, k, v) = (head_split(0)?, head_split(1)?, head_split(2)?);
        let mut scores = q
            .matmul(k.transpose()?)?
            .scale(1.0 / (d as f64).sqrt())
            .reshape(&[nw, self.heads, n, n])?
            .add(p.get(self.bias))?;
        if let Some(mask) = attention_mask(h, wd, hp, wp, w, sh, sw) {
            scores = scores.add(x.tape().constant(mask))?;
        }
        let attn = scores.softmax()?.reshape(&[nw * self.heads, n, n])?;
        let out = attn
            .matmul(v)?
            .reshape(&[nw, self.heads, n, d])?
            .permute(&[0, 2, 1, 3])?
            .reshape(&[nw, n, c])?;
        let out = self.proj.forward(p, out)?;
        let mut y = window_reverse(out, w, hp, wp)?;
        if sh > 0 {
            y = y.roll(0, sh as isize)?;
        }
        if sw > 0 {
            y = y.roll(1, sw as isize)?;
        }
        y.slice(0, 0..h)?.slice(1, 0..wd)
    }
}

/// Pre-norm transformer layer: windowed attention then a GELU MLP, each
/// with a residual connection.
#[derive(Debug, Clone)]
pub struct SwinLayer {
    pub norm1: LayerNorm,
    pub attn: WindowAttention,
    pub norm2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
    pub shift: usize,
}

impl SwinLayer {
    pub fn new(bld: &mut Builder, name: &str, dim: usize, heads: usize, window: usize, shift: usize) -> Result<Self> {
        Ok(Self {
            norm1: LayerNorm::new(bld, &format!("{name}.norm1"), dim),
            attn: WindowAttention::new(bld, &format!("{name}.attn"), dim, heads, window)?,
            norm2: LayerNorm::new(bld, &format!("{name}.norm2"), dim),
            fc1: Linear::new(bld, &format!("{name}.fc1"), dim, MLP_RATIO * dim),
            fc2: Linear::new(bld, &format!("{name}.fc2"), MLP_RATIO * dim, dim),
            shift,
        })
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let a = self.attn.forward(p, self.norm1.forward(p, x)?, self.shift)?;
        let x = x.add(a)?;
        let m = self.fc1.forward(p, self.norm2.forward(p, x)?)?.gelu();
        x.add(self.fc2.forward(p, m)?)
    }
}

/// Residual Swin transformer block: alternating unshifted and half-window
/// shifted layers, a 3x3 convolution, and a skip around the whole stack.
#[derive(Debug, Clone)]
pub struct Rstb {
    pub layers: Vec<SwinLayer>,
    pub conv: Conv2d,
}

impl Rstb {
    pub fn new(bld: &mut Builder, name: &str, dim: usize, depth: usize, heads: usize, window: usize) -> Result<Self> {
        let layers = (0..depth)
            .map(|i| {
                let shift = if i % 2 == 1 { window / 2 } else { 0 };
                SwinLayer::new(bld, &format!("{name}.layer{i}"), dim, heads, window, shift)
            })
            .collect::<Result<_>>()?;
        let conv = Conv2d::new(bld, &format!("{name}.conv"), dim, dim, (3, 3), (1, 1), (1, 1));
        Ok(Self { layers, conv })
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let mut y = x;
        for layer in &self.layers {
            y = layer.forward(p, y)?;
        }
        x.add(conv_hwc(&self.conv, p, y)?)
    }
}
