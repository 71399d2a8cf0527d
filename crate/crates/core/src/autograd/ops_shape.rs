//! Data-movement ops: reshape, permute, slice, concat, pad, roll.

use std::ops::Range;

use super::tensor::strides;
use super::{Tape, Var};
use crate::error::{Error, Result};

/// Gather indices for a permutation: `out[i] = x[src[i]]`.
fn permute_index(shape: &[usize], perm: &[usize]) -> Vec<usize> {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let eff: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let rank = out_shape.len();
    let numel: usize = shape.iter().product();
    let mut idx = vec![0; rank];
    let mut offset = 0;
    let mut out = Vec::with_capacity(numel);
    for _ in 0..numel {
        out.push(offset);
        for d in (0..rank).rev() {
            idx[d] += 1;
            offset += eff[d];
            if idx[d] < out_shape[d] {
                break;
            }
            offset -= eff[d] * idx[d];
            idx[d] = 0;
        }
    }
    out
}

fn split_axis(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::shape(format!("axis {axis} out of range for {shape:?}")));
    }
    Ok((
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    ))
}

impl<'t> Var<'t> {
    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape()
            )));
        }
        let data = self.data().as_ref().clone();
        Ok(self.tape.op(
            shape.to_vec(),
            data,
            &[self],
            Box::new(|g, _| vec![Some(g.to_vec())]),
        ))
    }

    pub fn permute(self, perm: &[usize]) -> Result<Var<'t>> {
        let shape = self.shape();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::shape(format!("bad permutation {perm:?} for {shape:?}")));
        }
        let src = permute_index(&shape, perm);
        let x = self.data();
        let out: Vec<f64> = src.iter().map(|&i| x[i]).collect();
        let out_shape = perm.iter().map(|&p| shape[p]).collect();
        Ok(self.tape.op(
            out_shape,
            out,
            &[self],
            Box::new(move |g, _| {
                let mut gx = vec![0.0; g.len()];
                for (&i, v) in src.iter().zip(g) {
                    gx[i] = *v;
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Swap the last two axes.
    pub fn transpose(self) -> Result<Var<'t>> {
        let r = self.shape().len();
        if r < 2 {
            return Err(Error::shape("transpose needs rank >= 2"));
        }
        let mut perm: Vec<usize> = (0..r).collect();
        perm.swap(r - 2, r - 1);
        self.permute(&perm)
    }

    pub fn slice(self, axis: usize, range: Range<usize>) -> Result<Var<'t>> {
        let shape = self.shape();
        let (outer, len, inner) = split_axis(&shape, axis)?;
        if range.start > range.end || range.end > len {
            return Err(Error::shape(format!(
                "slice {range:?} out of bounds for axis {axis} of {shape:?}"
            )));
        }
        let width = range.end - range.start;
        let x = self.data();
        let mut out = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            out.extend_from_slice(&x[(o * len + range.start) * inner..(o * len + range.end) * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = width;
        let start = range.start;
        Ok(self.tape.op(
            new_shape,
            out,
            &[self],
            Box::new(move |g, _| {
                let mut gx = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    gx[(o * len + start) * inner..(o * len + start + width) * inner]
                        .copy_from_slice(&g[o * width * inner..(o + 1) * width * inner]);
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Zero-pad one axis.
    pub fn pad(self, axis: usize, before: usize, after: usize) -> Result<Var<'t>> {
        if before == 0 && after == 0 {
            return Ok(self);
        }
        let shape = self.shape();
        let (outer, len, inner) = split_axis(&shape, axis)?;
        let new_len = len + before + after;
        let x = self.data();
        let mut out = vec![0.0; outer * new_len * inner];
        for o in 0..outer {
            out[(o * new_len + before) * inner..(o * new_len + before + len) * inner]
                .copy_from_slice(&x[o * len * inner..(o + 1) * len * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = new_len;
        Ok(self.tape.op(
            new_shape,
            out,
            &[self],
            Box::new(move |g, _| {
                let mut gx = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    gx[o * len * inner..(o + 1) * len * inner].copy_from_slice(
                        &g[(o * new_len + before) * inner..(o * new_len + before + len) * inner],
                    );
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Cyclic shift along `axis`: `out[(i + shift) mod n] = x[i]`.
    pub fn roll(self, axis: usize, shift: isize) -> Result<Var<'t>> {
        let shape = self.shape();
        let (outer, len, inner) = split_axis(&shape, axis)?;
        if len == 0 {
            return Ok(self);
        }
        let s = shift.rem_euclid(len as isize) as usize;
        if s == 0 {
            return Ok(self);
        }
        let x = self.data();
        let mut out = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..len {
                let j = (i + s) % len;
                out[(o * len + j) * inner..(o * len + j + 1) * inner]
                    .copy_from_slice(&x[(o * len + i) * inner..(o * len + i + 1) * inner]);
            }
        }
        Ok(self.tape.op(
            shape,
            out,
            &[self],
            Box::new(move |g, _| {
                let mut gx = vec![0.0; g.len()];
                for o in 0..outer {
                    for i in 0..len {
                        let j = (i + s) % len;
                        gx[(o * len + i) * inner..(o * len + i + 1) * inner]
                            .copy_from_slice(&g[(o * len + j) * inner..(o * len + j + 1) * inner]);
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }
}

/// Concatenate along `axis`; all other dimensions must agree.
pub fn concat<'t>(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
    let first = parts.first().ok_or_else(|| Error::shape("concat of nothing"))?;
    let tape: &'t Tape = first.tape;
    let base = first.shape();
    let (outer, _, inner) = split_axis(&base, axis)?;
    let mut lens = Vec::with_capacity(parts.len());
    for p in parts {
        let s = p.shape();
        let same_rank = s.len() == base.len();
        if !same_rank || s.iter().enumerate().any(|(d, &v)| d != axis && v != base[d]) {
            return Err(Error::shape(format!("cannot concat {s:?} with {base:?} on axis {axis}")));
        }
        lens.push(s[axis]);
    }
    let total: usize = lens.iter().sum();
    let datas: Vec<_> = parts.iter().map(|p| p.data()).collect();
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for (d, &l) in datas.iter().zip(&lens) {
            out.extend_from_slice(&d[o * l * inner..(o + 1) * l * inner]);
        }
    }
    let mut shape = base;
    shape[axis] = total;
    Ok(tape.op(
        shape,
        out,
        parts,
        Box::new(move |g, needs| {
            let mut grads: Vec<Option<Vec<f64>>> = lens
                .iter()
                .zip(needs)
                .map(|(&l, &n)| n.then(|| vec![0.0; outer * l * inner]))
                .collect();
            for o in 0..outer {
                let mut off = o * total * inner;
                for (gp, &l) in grads.iter_mut().zip(&lens) {
                    if let Some(gp) = gp {
                        gp[o * l * inner..(o + 1) * l * inner]
                            .copy_from_slice(&g[off..off + l * inner]);
                    }
                    off += l * inner;
                }
            }
            grads
        }),
    ))
}
