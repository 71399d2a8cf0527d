//! Elementwise arithmetic (with numpy-style broadcasting), unary
//! nonlinearities and reductions.

use std::rc::Rc;

use super::tensor::{broadcast_index, broadcast_shape};
use super::Var;
use crate::error::{Error, Result};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

fn reduce_to(src_len: usize, index: &[usize], g: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; src_len];
    for (&i, v) in index.iter().zip(g) {
        out[i] += v;
    }
    out
}

impl<'t> Var<'t> {
    fn binary(self, other: Var<'t>, kind: Binary) -> Result<Var<'t>> {
        let (sa, sb) = (self.shape(), other.shape());
        let a = self.data();
        let b = other.data();
        let f = |x: f64, y: f64| match kind {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
            Binary::Div => x / y,
        };
        if sa == sb {
            let out: Vec<f64> = a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect();
            return Ok(self.tape.op(
                sa,
                out,
                &[self, other],
                Box::new(move |g, needs| {
                    let ga = needs[0].then(|| match kind {
                        Binary::Add | Binary::Sub => g.to_vec(),
                        Binary::Mul => g.iter().zip(b.iter()).map(|(g, y)| g * y).collect(),
                        Binary::Div => g.iter().zip(b.iter()).map(|(g, y)| g / y).collect(),
                    });
                    let gb = needs[1].then(|| match kind {
                        Binary::Add => g.to_vec(),
                        Binary::Sub => g.iter().map(|g| -g).collect(),
                        Binary::Mul => g.iter().zip(a.iter()).map(|(g, x)| g * x).collect(),
                        Binary::Div => g
                            .iter()
                            .zip(a.iter().zip(b.iter()))
                            .map(|(g, (x, y))| -g * x / (y * y))
                            .collect(),
                    });
                    vec![ga, gb]
                }),
            ));
        }
        let shape = broadcast_shape(&sa, &sb)?;
        let ia = Rc::new(broadcast_index(&sa, &shape));
        let ib = Rc::new(broadcast_index(&sb, &shape));
        let out: Vec<f64> = ia.iter().zip(ib.iter()).map(|(&i, &j)| f(a[i], b[j])).collect();
        let (la, lb) = (a.len(), b.len());
        Ok(self.tape.op(
            shape,
            out,
            &[self, other],
            Box::new(move |g, needs| {
                let ga = needs[0].then(|| {
                    let local: Vec<f64> = match kind {
                        Binary::Add | Binary::Sub => g.to_vec(),
                        Binary::Mul => g.iter().zip(ib.iter()).map(|(g, &j)| g * b[j]).collect(),
                        Binary::Div => g.iter().zip(ib.iter()).map(|(g, &j)| g / b[j]).collect(),
                    };
                    reduce_to(la, &ia, &local)
                });
                let gb = needs[1].then(|| {
                    let local: Vec<f64> = match kind {
                        Binary::Add => g.to_vec(),
                        Binary::Sub => g.iter().map(|g| -g).collect(),
                        Binary::Mul => g.iter().zip(ia.iter()).map(|(g, &i)| g * a[i]).collect(),
                        Binary::Div => g
                            .iter()
                            .zip(ia.iter().zip(ib.iter()))
                            .map(|(g, (&i, &j))| -g * a[i] / (b[j] * b[j]))
                            .collect(),
                    };
                    reduce_to(lb, &ib, &local)
                });
                vec![ga, gb]
            }),
        ))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Binary::Add)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Binary::Sub)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Binary::Mul)
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Binary::Div)
    }

    /// Elementwise map with derivative `df(x, y)` expressed through the
    /// input `x` and output `y`.
    fn unary(self, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64 + 'static) -> Var<'t> {
        let x = self.data();
        let y: Rc<Vec<f64>> = Rc::new(x.iter().map(|&v| f(v)).collect());
        let y_out = y.as_ref().clone();
        self.tape.op(
            self.shape(),
            y_out,
            &[self],
            Box::new(move |g, _| {
                vec![Some(
                    g.iter()
                        .zip(x.iter().zip(y.iter()))
                        .map(|(g, (&x, &y))| g * df(x, y))
                        .collect(),
                )]
            }),
        )
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(move |x| c * x, move |_, _| c)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary(move |x| x + c, |_, _| 1.0)
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(f64::exp, |_, y| y)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(f64::ln, |x, _| 1.0 / x)
    }

    pub fn sqrt(self) -> Var<'t> {
        self.unary(f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn square(self) -> Var<'t> {
        self.unary(|x| x * x, |x, _| 2.0 * x)
    }

    pub fn sinh(self) -> Var<'t> {
        self.unary(f64::sinh, |x, _| x.cosh())
    }

    /// `x^p` for a constant exponent.
    pub fn powf(self, p: f64) -> Var<'t> {
        self.unary(move |x| x.powf(p), move |x, _| p * x.powf(p - 1.0))
    }

    /// Subgradient 0 at the origin.
    pub fn abs(self) -> Var<'t> {
        self.unary(f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(|x| 1.0 / (1.0 + (-x).exp()), |_, y| y * (1.0 - y))
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        self.unary(
            move |x| if x > 0.0 { x } else { slope * x },
            move |x, _| if x > 0.0 { 1.0 } else { slope },
        )
    }

    /// Tanh approximation of GELU.
    pub fn gelu(self) -> Var<'t> {
        self.unary(
            |x| 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()),
            |x, _| {
                let inner = GELU_C * (x + 0.044715 * x * x * x);
                let t = inner.tanh();
                let dinner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
            },
        )
    }

    /// `max(x, c)`; the gradient is zero where the floor is active.
    pub fn clamp_min(self, c: f64) -> Var<'t> {
        self.unary(move |x| x.max(c), move |x, _| if x >= c { 1.0 } else { 0.0 })
    }

    pub fn sum(self) -> Var<'t> {
        let x = self.data();
        let n = x.len();
        let s: f64 = x.iter().sum();
        self.tape.op(
            vec![],
            vec![s],
            &[self],
            Box::new(move |g, _| vec![Some(vec![g[0]; n])]),
        )
    }

    pub fn mean(self) -> Result<Var<'t>> {
        let n = self.numel();
        if n == 0 {
            return Err(Error::shape("mean of an empty tensor"));
        }
        Ok(self.sum().scale(1.0 / n as f64))
    }

    /// Sum over one axis, removing it.
    pub fn sum_axis(self, axis: usize) -> Result<Var<'t>> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(Error::shape(format!("axis {axis} out of range for {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let x = self.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let src = &x[(o * len + a) * inner..(o * len + a + 1) * inner];
                for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut new_shape = shape.clone();
        new_shape.remove(axis);
        Ok(self.tape.op(
            new_shape,
            out,
            &[self],
            Box::new(move |g, _| {
                let mut gx = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for a in 0..len {
                        gx[(o * len + a) * inner..(o * len + a + 1) * inner]
                            .copy_from_slice(&g[o * inner..(o + 1) * inner]);
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    pub fn mean_axis(self, axis: usize) -> Result<Var<'t>> {
        let len = *self
            .shape()
            .get(axis)
            .ok_or_else(|| Error::shape(format!("axis {axis} out of range")))?;
        Ok(self.sum_axis(axis)?.scale(1.0 / len as f64))
    }

    /// Softmax over the last axis.
    pub fn softmax(self) -> Result<Var<'t>> {
        let shape = self.shape();
        let n = *shape.last().ok_or_else(|| Error::shape("softmax of a scalar"))?;
        let x = self.data();
        let mut y = vec![0.0; x.len()];
        for (row, out) in x.chunks(n).zip(y.chunks_mut(n)) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (o, &v) in out.iter_mut().zip(row) {
                *o = (v - m).exp();
                z += *o;
            }
            out.iter_mut().for_each(|o| *o /= z);
        }
        let y = Rc::new(y);
        let y_out = y.as_ref().clone();
        Ok(self.tape.op(
            shape,
            y_out,
            &[self],
            Box::new(move |g, _| {
                let mut gx = vec![0.0; g.len()];
                for ((gr, yr), out) in g.chunks(n).zip(y.chunks(n)).zip(gx.chunks_mut(n)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((o, &gi), &yi) in out.iter_mut().zip(gr).zip(yr) {
                        *o = yi * (gi - dot);
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Normalize the last axis to zero mean and unit variance (no affine).
    pub fn layer_norm(self, eps: f64) -> Result<Var<'t>> {
        let shape = self.shape();
        let n = *shape.last().ok_or_else(|| Error::shape("layer norm of a scalar"))?;
        let x = self.data();
        let rows = x.len() / n;
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; rows];
        for (r, (row, out)) in x.chunks(n).zip(xhat.chunks_mut(n)).enumerate() {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for (o, &v) in out.iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
        }
        let xhat = Rc::new(xhat);
        let out = xhat.as_ref().clone();
        Ok(self.tape.op(
            shape,
            out,
            &[self],
            Box::new(move |g, _| {
                let mut gx = vec![0.0; g.len()];
                let nf = n as f64;
                for (r, ((gr, xr), out)) in g
                    .chunks(n)
                    .zip(xhat.chunks(n))
                    .zip(gx.chunks_mut(n))
                    .enumerate()
                {
                    let mg = gr.iter().sum::<f64>() / nf;
                    let mgx = gr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / nf;
                    for ((o, &gi), &xi) in out.iter_mut().zip(gr).zip(xr) {
                        *o = inv_std[r] * (gi - mg - xi * mgx);
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }
}
