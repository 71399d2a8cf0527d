//! Matrix products, direct convolutions and average pooling.

use rayon::prelude::*;

use super::Var;
use crate::error::{Error, Result};

const PAR_THRESHOLD: usize = 1 << 15;

/// `C[m,n] = sum_k A[m,k] B[k,n]`
fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    let row = |(i, crow): (usize, &mut [f64])| {
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD && n > 0 {
        c.par_chunks_mut(n).enumerate().for_each(row);
    } else if n > 0 {
        c.chunks_mut(n).enumerate().for_each(row);
    }
    c
}

/// `C[m,n] = sum_k A[m,k] B[n,k]`
fn mm_bt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    let row = |(i, crow): (usize, &mut [f64])| {
        let arow = &a[i * k..(i + 1) * k];
        for (j, cv) in crow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            *cv = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    };
    if m * k * n >= PAR_THRESHOLD && n > 0 {
        c.par_chunks_mut(n).enumerate().for_each(row);
    } else if n > 0 {
        c.chunks_mut(n).enumerate().for_each(row);
    }
    c
}

/// `C[m,n] = sum_k A[k,m] B[k,n]`
fn mm_at(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    let row = |(i, crow): (usize, &mut [f64])| {
        for p in 0..k {
            let av = a[p * m + i];
            if av == 0.0 {
                continue;
            }
            for (cv, bv) in crow.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *cv += av * bv;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD && n > 0 {
        c.par_chunks_mut(n).enumerate().for_each(row);
    } else if n > 0 {
        c.chunks_mut(n).enumerate().for_each(row);
    }
    c
}

#[derive(Clone, Copy)]
struct ConvGeom {
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    /// Output positions `o` with `0 <= o*s + k - p < len`.
    fn valid(o_len: usize, len: usize, s: usize, k: usize, p: usize) -> std::ops::Range<usize> {
        let lo = if k >= p { 0 } else { (p - k).div_ceil(s) };
        let hi = if len + p > k { (len + p - k - 1) / s + 1 } else { 0 };
        lo.min(o_len)..hi.min(o_len).max(lo.min(o_len))
    }

    fn forward(&self, x: &[f64], wt: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
        let g = *self;
        let plane = g.oh * g.ow;
        let mut out = vec![0.0; g.cout * plane];
        out.par_chunks_mut(plane.max(1)).enumerate().for_each(|(co, o)| {
            if let Some(b) = bias {
                o.iter_mut().for_each(|v| *v = b[co]);
            }
            for ci in 0..g.cin {
                let xp = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
                for ki in 0..g.kh {
                    let ys = Self::valid(g.oh, g.h, g.sh, ki, g.ph);
                    for kj in 0..g.kw {
                        let wv = wt[((co * g.cin + ci) * g.kh + ki) * g.kw + kj];
                        if wv == 0.0 {
                            continue;
                        }
                        let xs = Self::valid(g.ow, g.w, g.sw, kj, g.pw);
                        if xs.is_empty() {
                            continue;
                        }
                        let off = xs.start * g.sw + kj - g.pw;
                        for oy in ys.clone() {
                            let iy = oy * g.sh + ki - g.ph;
                            let orow = &mut o[oy * g.ow + xs.start..oy * g.ow + xs.end];
                            let xrow = &xp[iy * g.w + off..(iy + 1) * g.w];
                            if g.sw == 1 {
                                for (ov, xv) in orow.iter_mut().zip(xrow) {
                                    *ov += wv * xv;
                                }
                            } else {
                                for (ov, xv) in orow.iter_mut().zip(xrow.iter().step_by(g.sw)) {
                                    *ov += wv * xv;
                                }
                            }
                        }
                    }
                }
            }
        });
        out
    }

    fn grad_input(&self, gout: &[f64], wt: &[f64]) -> Vec<f64> {
        let g = *self;
        let plane = g.oh * g.ow;
        let mut gx = vec![0.0; g.cin * g.h * g.w];
        gx.par_chunks_mut((g.h * g.w).max(1)).enumerate().for_each(|(ci, gxp)| {
            for co in 0..g.cout {
                let go = &gout[co * plane..(co + 1) * plane];
                for ki in 0..g.kh {
                    let ys = Self::valid(g.oh, g.h, g.sh, ki, g.ph);
                    for kj in 0..g.kw {
                        let wv = wt[((co * g.cin + ci) * g.kh + ki) * g.kw + kj];
                        if wv == 0.0 {
                            continue;
                        }
                        let xs = Self::valid(g.ow, g.w, g.sw, kj, g.pw);
                        if xs.is_empty() {
                            continue;
                        }
                        let off = xs.start * g.sw + kj - g.pw;
                        for oy in ys.clone() {
                            let iy = oy * g.sh + ki - g.ph;
                            let grow = &go[oy * g.ow + xs.start..oy * g.ow + xs.end];
                            let xrow = &mut gxp[iy * g.w + off..(iy + 1) * g.w];
                            if g.sw == 1 {
                                for (xv, gv) in xrow.iter_mut().zip(grow) {
                                    *xv += wv * gv;
                                }
                            } else {
                                for (xv, gv) in xrow.iter_mut().step_by(g.sw).zip(grow) {
                                    *xv += wv * gv;
                                }
                            }
                        }
                    }
                }
            }
        });
        gx
    }

    fn grad_weight(&self, gout: &[f64], x: &[f64]) -> Vec<f64> {
        let g = *self;
        let plane = g.oh * g.ow;
        let per_out = g.cin * g.kh * g.kw;
        let mut gw = vec![0.0; g.cout * per_out];
        gw.par_chunks_mut(per_out.max(1)).enumerate().for_each(|(co, gwc)| {
            let go = &gout[co * plane..(co + 1) * plane];
            for ci in 0..g.cin {
                let xp = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
                for ki in 0..g.kh {
                    let ys = Self::valid(g.oh, g.h, g.sh, ki, g.ph);
                    for kj in 0..g.kw {
                        let xs = Self::valid(g.ow, g.w, g.sw, kj, g.pw);
                        let mut acc = 0.0;
                        if !xs.is_empty() {
                            let off = xs.start * g.sw + kj - g.pw;
                            for oy in ys.clone() {
                                let iy = oy * g.sh + ki - g.ph;
                                let grow = &go[oy * g.ow + xs.start..oy * g.ow + xs.end];
                                let xrow = &xp[iy * g.w + off..(iy + 1) * g.w];
                                if g.sw == 1 {
                                    acc += grow.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
                                } else {
                                    acc += grow.iter().zip(xrow.iter().step_by(g.sw)).map(|(a, b)| a * b).sum::<f64>();
                                }
                            }
                        }
                        gwc[(ci * g.kh + ki) * g.kw + kj] = acc;
                    }
                }
            }
        });
        gw
    }
}

impl<'t> Var<'t> {
    /// `[.., M, K] x [.., K, N]` with matching batch dims, or `[.., M, K] x [K, N]`.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() < 2 || sb.len() < 2 {
            return Err(Error::shape(format!("matmul needs rank >= 2: {sa:?} x {sb:?}")));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        let shared_b = sb.len() == 2;
        if k != k2 || (!shared_b && sa[..sa.len() - 2] != sb[..sb.len() - 2]) {
            return Err(Error::shape(format!("matmul shape mismatch: {sa:?} x {sb:?}")));
        }
        let batch: usize = sa[..sa.len() - 2].iter().product();
        let a = self.data();
        let b = other.data();
        let mut out_shape = sa[..sa.len() - 2].to_vec();
        out_shape.extend([m, n]);

        if shared_b {
            // Fold the batch into rows.
            let out = mm(&a, &b, batch * m, k, n);
            let rows = batch * m;
            return Ok(self.tape.op(
                out_shape,
                out,
                &[self, other],
                Box::new(move |g, needs| {
                    let ga = needs[0].then(|| mm_bt(g, &b, rows, n, k));
                    let gb = needs[1].then(|| mm_at(&a, g, k, rows, n));
                    vec![ga, gb]
                }),
            ));
        }

        let (sza, szb, szc) = (m * k, k * n, m * n);
        let mut out = vec![0.0; batch * szc];
        let (av, bv): (&[f64], &[f64]) = (&a, &b);
        out.par_chunks_mut(szc.max(1)).enumerate().for_each(|(i, c)| {
            c.copy_from_slice(&mm(&av[i * sza..(i + 1) * sza], &bv[i * szb..(i + 1) * szb], m, k, n));
        });
        Ok(self.tape.op(
            out_shape,
            out,
            &[self, other],
            Box::new(move |g, needs| {
                let (a, b): (&[f64], &[f64]) = (&a, &b);
                let ga = needs[0].then(|| {
                    let mut ga = vec![0.0; batch * sza];
                    ga.par_chunks_mut(sza.max(1)).enumerate().for_each(|(i, o)| {
                        o.copy_from_slice(&mm_bt(&g[i * szc..(i + 1) * szc], &b[i * szb..(i + 1) * szb], m, n, k));
                    });
                    ga
                });
                let gb = needs[1].then(|| {
                    let mut gb = vec![0.0; batch * szb];
                    gb.par_chunks_mut(szb.max(1)).enumerate().for_each(|(i, o)| {
                        o.copy_from_slice(&mm_at(&a[i * sza..(i + 1) * sza], &g[i * szc..(i + 1) * szc], k, m, n));
                    });
                    gb
                });
                vec![ga, gb]
            }),
        ))
    }

    /// 2-D convolution of a `[C_in, H, W]` map with `[C_out, C_in, kh, kw]`
    /// weights and optional `[C_out]` bias.
    pub fn conv2d(
        self,
        weight: Var<'t>,
        bias: Option<Var<'t>>,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Var<'t>> {
        let xs = self.shape();
        let ws = weight.shape();
        if xs.len() != 3 || ws.len() != 4 || ws[1] != xs[0] {
            return Err(Error::shape(format!("conv2d: input {xs:?} weight {ws:?}")));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::shape("conv2d: zero stride"));
        }
        if let Some(b) = bias {
            if b.shape() != [ws[0]] {
                return Err(Error::shape(format!("conv2d: bias {:?} for {} outputs", b.shape(), ws[0])));
            }
        }
        let (h, w) = (xs[1], xs[2]);
        let (kh, kw) = (ws[2], ws[3]);
        if h + 2 * padding.0 < kh || w + 2 * padding.1 < kw {
            return Err(Error::shape(format!(
                "conv2d: kernel {kh}x{kw} larger than padded input {h}x{w}"
            )));
        }
        let geom = ConvGeom {
            cin: xs[0],
            cout: ws[0],
            h,
            w,
            kh,
            kw,
            sh: stride.0,
            sw: stride.1,
            ph: padding.0,
            pw: padding.1,
            oh: (h + 2 * padding.0 - kh) / stride.0 + 1,
            ow: (w + 2 * padding.1 - kw) / stride.1 + 1,
        };
        let x = self.data();
        let wt = weight.data();
        let bdata = bias.map(|b| b.data());
        let out = geom.forward(&x, &wt, bdata.as_ref().map(|b| b.as_slice()));
        let mut parents = vec![self, weight];
        parents.extend(bias);
        let plane = geom.oh * geom.ow;
        Ok(self.tape.op(
            vec![geom.cout, geom.oh, geom.ow],
            out,
            &parents,
            Box::new(move |g, needs| {
                let mut grads = vec![
                    needs[0].then(|| geom.grad_input(g, &wt)),
                    needs[1].then(|| geom.grad_weight(g, &x)),
                ];
                if needs.len() > 2 {
                    grads.push(needs[2].then(|| {
                        g.chunks(plane.max(1)).map(|c| c.iter().sum()).collect()
                    }));
                }
                grads
            }),
        ))
    }

    /// 1-D convolution of a `[C_in, L]` signal with `[C_out, C_in, k]` weights.
    pub fn conv1d(self, weight: Var<'t>, bias: Option<Var<'t>>, stride: usize, padding: usize) -> Result<Var<'t>> {
        let xs = self.shape();
        let ws = weight.shape();
        if xs.len() != 2 || ws.len() != 3 {
            return Err(Error::shape(format!("conv1d: input {xs:?} weight {ws:?}")));
        }
        let x2 = self.reshape(&[xs[0], 1, xs[1]])?;
        let w2 = weight.reshape(&[ws[0], ws[1], 1, ws[2]])?;
        let y = x2.conv2d(w2, bias, (1, stride), (0, padding))?;
        let ys = y.shape();
        y.reshape(&[ys[0], ys[2]])
    }

    /// Average pooling over the last axis of `[C, L]`; padded zeros count
    /// towards the average.
    pub fn avg_pool1d(self, kernel: usize, stride: usize, padding: usize) -> Result<Var<'t>> {
        let xs = self.shape();
        if xs.len() != 2 || kernel == 0 || stride == 0 {
            return Err(Error::shape(format!("avg_pool1d on {xs:?}")));
        }
        let c = xs[0];
        let w = Var::tape(&self).constant(super::Tensor::full(&[c, 1, kernel], 1.0 / kernel as f64));
        // Depthwise: run each channel through a single-channel kernel.
        let mut outs = Vec::with_capacity(c);
        for ch in 0..c {
            let xc = self.slice(0, ch..ch + 1)?;
            let wc = w.slice(0, ch..ch + 1)?;
            outs.push(xc.conv1d(wc, None, stride, padding)?);
        }
        super::concat(&outs, 0)
    }
}
