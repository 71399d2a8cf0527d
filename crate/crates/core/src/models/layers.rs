//! Parameterized building blocks shared by the generator and discriminators.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Bound, ParamId, ParamStore, Tensor, Var};
use crate::error::Result;

/// Registers freshly initialized parameters.
pub struct Builder<'a> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    /// Uniform in `[-bound, bound]`.
    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> ParamId {
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-bound..=bound)).collect();
        self.store.add(name, Tensor::new(shape.to_vec(), data).expect("shape matches data"))
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> ParamId {
        self.store.add(name, Tensor::full(shape, value))
    }
}

/// `y = x W + b` over the last axis.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(bld: &mut Builder, name: &str, din: usize, dout: usize) -> Self {
        let bound = 1.0 / (din as f64).sqrt();
        Self {
            w: bld.uniform(&format!("{name}.w"), &[din, dout], bound),
            b: bld.uniform(&format!("{name}.b"), &[dout], bound),
        }
    }

    pub fn zeros(bld: &mut Builder, name: &str, din: usize, dout: usize) -> Self {
        Self {
            w: bld.constant(&format!("{name}.w"), &[din, dout], 0.0),
            b: bld.constant(&format!("{name}.b"), &[dout], 0.0),
        }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        x.matmul(p.get(self.w))?.add(p.get(self.b))
    }
}

/// Layer normalization over the last axis with learned scale and shift.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(bld: &mut Builder, name: &str, dim: usize) -> Self {
        Self {
            gamma: bld.constant(&format!("{name}.gamma"), &[dim], 1.0),
            beta: bld.constant(&format!("{name}.beta"), &[dim], 0.0),
        }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        x.layer_norm(Self::EPS)?.mul(p.get(self.gamma))?.add(p.get(self.beta))
    }
}

/// 2-D convolution on `[C, H, W]` maps.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl Conv2d {
    pub fn new(
        bld: &mut Builder,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Self {
        let bound = 1.0 / ((cin * kernel.0 * kernel.1) as f64).sqrt();
        Self {
            w: bld.uniform(&format!("{name}.w"), &[cout, cin, kernel.0, kernel.1], bound),
            b: bld.uniform(&format!("{name}.b"), &[cout], bound),
            stride,
            padding,
        }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        x.conv2d(p.get(self.w), Some(p.get(self.b)), self.stride, self.padding)
    }
}

/// 1-D convolution on `[C, L]` signals.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1d {
    pub fn new(bld: &mut Builder, name: &str, cin: usize, cout: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        let bound = 1.0 / ((cin * kernel) as f64).sqrt();
        Self {
            w: bld.uniform(&format!("{name}.w"), &[cout, cin, kernel], bound),
            b: bld.uniform(&format!("{name}.b"), &[cout], bound),
            stride,
            padding,
        }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        x.conv1d(p.get(self.w), Some(p.get(self.b)), self.stride, self.padding)
    }
}

/// Convolution over an `[H, W, C]` map, returning `[H', W', C']`.
pub fn conv_hwc<'t>(conv: &Conv2d, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
    let y = conv.forward(p, x.permute(&[2, 0, 1])?)?;
    y.permute(&[1, 2, 0])
}
