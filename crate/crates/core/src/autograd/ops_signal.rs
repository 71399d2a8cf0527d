//! Differentiable signal transforms: MDCT synthesis and the framed DFT used
//! by the spectral losses. Each backward pass is the exact adjoint of its
//! forward map.

use std::sync::Arc;

use rustfft::{num_complex::Complex, FftPlanner};

use super::Var;
use crate::error::{Error, Result};
use crate::mdct::MdctPlan;
use crate::signal::FrameGrid;

impl<'t> Var<'t> {
    /// Inverse MDCT of a `[T, K]` coefficient grid into `signal_len` samples.
    pub fn imdct(self, plan: Arc<MdctPlan>, signal_len: usize) -> Result<Var<'t>> {
        let shape = self.shape();
        let k = plan.bins();
        let grid = FrameGrid::new(plan.frame_len())?;
        if shape.len() != 2 || shape[1] != k || shape[0] != grid.num_frames(signal_len) {
            return Err(Error::shape(format!(
                "imdct: {shape:?} does not match {k} bins and {} frames",
                grid.num_frames(signal_len)
            )));
        }
        let y = plan.synthesize(&self.data(), signal_len)?;
        Ok(self.tape.op(
            vec![signal_len],
            y,
            &[self],
            Box::new(move |g, _| {
                // Adjoint of overlap-add synthesis is windowed analysis
                // scaled by the synthesis gain 2/K.
                let (mut coeffs, _) = plan.analyze(g);
                let scale = 2.0 / k as f64;
                coeffs.iter_mut().for_each(|c| *c *= scale);
                vec![Some(coeffs)]
            }),
        ))
    }

    /// Framed DFT of a 1-D signal. The signal is zero-padded by `fft/2` on
    /// both sides, frames start every `hop` samples and a periodic Hann
    /// window of `win` samples is centered in each `fft`-point frame.
    /// Returns `[2, T, fft/2 + 1]` holding real and imaginary parts.
    pub fn stft(self, fft: usize, hop: usize, win: usize) -> Result<Var<'t>> {
        let shape = self.shape();
        if shape.len() != 1 || shape[0] == 0 {
            return Err(Error::shape(format!("stft needs a non-empty 1-D signal, got {shape:?}")));
        }
        if win > fft || hop == 0 || fft < 2 {
            return Err(Error::invalid(format!("stft: fft={fft} hop={hop} win={win}")));
        }
        let len = shape[0];
        let half = fft / 2;
        let frames = len / hop + 1;
        let bins = half + 1;
        let offset = (fft - win) / 2;
        let mut window = vec![0.0; fft];
        for n in 0..win {
            window[offset + n] =
                0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / win as f64).cos();
        }
        let x = self.data();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft);
        let inverse = planner.plan_fft_inverse(fft);
        let sample = |p: usize| -> f64 {
            // Index into the zero-padded signal.
            if p >= half && p - half < len {
                x[p - half]
            } else {
                0.0
            }
        };
        let mut out = vec![0.0; 2 * frames * bins];
        let mut buf = vec![Complex::new(0.0, 0.0); fft];
        for t in 0..frames {
            for (n, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(window[n] * sample(t * hop + n), 0.0);
            }
            forward.process(&mut buf);
            for (f, c) in buf[..bins].iter().enumerate() {
                out[t * bins + f] = c.re;
                out[(frames + t) * bins + f] = c.im;
            }
        }
        Ok(self.tape.op(
            vec![2, frames, bins],
            out,
            &[self],
            Box::new(move |g, _| {
                // x_frame[n] = w[n] Re(sum_k (gRe + i gIm)[k] e^{+2 pi i k n / N})
                let mut gx = vec![0.0; len];
                let mut buf = vec![Complex::new(0.0, 0.0); fft];
                for t in 0..frames {
                    buf.iter_mut().for_each(|b| *b = Complex::new(0.0, 0.0));
                    for f in 0..bins {
                        buf[f] = Complex::new(g[t * bins + f], g[(frames + t) * bins + f]);
                    }
                    inverse.process(&mut buf);
                    for (n, b) in buf.iter().enumerate() {
                        let p = t * hop + n;
                        if p >= half && p - half < len {
                            gx[p - half] += window[n] * b.re;
                        }
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }
}
