//! Kaiser-Bessel-derived windows, the MDCT/IMDCT pair with time-domain alias
//! cancellation, and the arcsinh companding applied to MDCT coefficients.
//!
//! Analysis of a frame of `2K` samples:
//!
//! ```text
//! X[k] = sum_{n=0}^{2K-1} w[n] x[n] cos(pi/K (n + 1/2 + K/2)(k + 1/2))
//! ```
//!
//! Synthesis applies the same cosine kernel scaled by `2/K`, windows again
//! and overlap-adds at hop `K`. With a Princen-Bradley window the aliasing
//! terms cancel and the input is recovered exactly (up to rounding).
//!
//! Both directions run through a `2K`-point complex FFT with pre/post
//! twiddles.

use std::f64::consts::{LN_10, PI};
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::signal::{frame_signal, overlap_add, FrameGrid, Frames, Waveform};

pub const DEFAULT_FRAME_LEN: usize = 1024;
pub const DEFAULT_KBD_ALPHA: f64 = 6.0;
pub const DEFAULT_GAIN: f64 = 800.0;

/// Zeroth-order modified Bessel function of the first kind (power series).
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..500 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

#[derive(Debug, Clone, PartialEq)]
pub struct KbdWindow {
    taps: Vec<f64>,
    alpha: f64,
}

impl KbdWindow {
    /// Build a length-`len` KBD window from a length-`len/2 + 1` Kaiser window
    /// with `beta = pi * alpha`:
    /// `w[n] = sqrt(sum_{j<=n} kaiser[j] / sum_j kaiser[j])` for the first half,
    /// mirrored for the second.
    pub fn new(len: usize, alpha: f64) -> Result<Self> {
        if len < 4 || len % 2 != 0 {
            return Err(Error::invalid(format!(
                "KBD window length must be even and >= 4, got {len}"
            )));
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!("KBD alpha must be >= 0, got {alpha}")));
        }
        let half = len / 2;
        let beta = PI * alpha;
        let kaiser: Vec<f64> = (0..=half)
            .map(|j| {
                let r = 2.0 * j as f64 / half as f64 - 1.0;
                bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt())
            })
            .collect();
        let total: f64 = kaiser.iter().sum();
        let mut taps = vec![0.0; len];
        let mut acc = 0.0;
        for n in 0..half {
            acc += kaiser[n];
            let v = (acc / total).sqrt();
            taps[n] = v;
            taps[len - 1 - n] = v;
        }
        Ok(Self { taps, alpha })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Largest deviation of `w[n]^2 + w[n+H]^2` from 1.
    pub fn princen_bradley_error(&self) -> f64 {
        let h = self.taps.len() / 2;
        (0..h)
            .map(|n| (self.taps[n].powi(2) + self.taps[n + h].powi(2) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

impl Default for KbdWindow {
    fn default() -> Self {
        Self::new(DEFAULT_FRAME_LEN, DEFAULT_KBD_ALPHA).expect("default window is valid")
    }
}

/// FFT plan and twiddles for one transform size.
#[derive(Clone)]
pub struct MdctPlan {
    bins: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    pre: Vec<Complex<f64>>,
    post: Vec<Complex<f64>>,
}

impl std::fmt::Debug for MdctPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MdctPlan").field("bins", &self.bins).finish()
    }
}

impl MdctPlan {
    pub fn new(window: &KbdWindow) -> Self {
        let n = window.len();
        let k = n / 2;
        let mut planner = FftPlanner::new();
        let n0 = 0.5 + k as f64 / 2.0;
        let pre = (0..n)
            .map(|i| Complex::from_polar(1.0, -PI * i as f64 / n as f64))
            .collect();
        let post = (0..k)
            .map(|j| Complex::from_polar(1.0, -PI * n0 * (j as f64 + 0.5) / k as f64))
            .collect();
        Self {
            bins: k,
            window: window.taps().to_vec(),
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            pre,
            post,
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frame_len(&self) -> usize {
        2 * self.bins
    }

    /// Windowed analysis of one `2K` frame into `K` coefficients.
    pub fn forward_frame(&self, frame: &[f64], out: &mut [f64]) {
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .zip(&self.window)
            .zip(&self.pre)
            .map(|((x, w), t)| t * (x * w))
            .collect();
        self.forward.process(&mut buf);
        for ((o, b), t) in out.iter_mut().zip(&buf).zip(&self.post) {
            *o = (b * t).re;
        }
    }

    /// Synthesis of one frame: `w[n] * (2/K) * sum_k X[k] cos(...)`.
    pub fn inverse_frame(&self, coeffs: &[f64], out: &mut [f64]) {
        let n = 2 * self.bins;
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        for ((b, x), t) in buf.iter_mut().zip(coeffs).zip(&self.post) {
            *b = t.conj() * x;
        }
        self.inverse.process(&mut buf);
        let scale = 2.0 / self.bins as f64;
        for (i, o) in out.iter_mut().enumerate() {
            *o = (buf[i] * self.pre[i].conj()).re * scale * self.window[i];
        }
    }

    /// Frame, window and transform a signal. Returns `T x K` coefficients
    /// (row-major) and `T`.
    pub fn analyze(&self, samples: &[f64]) -> (Vec<f64>, usize) {
        let grid = FrameGrid::new(self.frame_len()).expect("frame length is even");
        let frames = frame_signal(samples, &grid);
        let t = frames.len();
        let mut coeffs = vec![0.0; t * self.bins];
        coeffs
            .par_chunks_mut(self.bins)
            .zip(frames.frames().par_iter())
            .for_each(|(out, frame)| self.forward_frame(frame, out));
        (coeffs, t)
    }

    /// Inverse of [`MdctPlan::analyze`]: synthesize each frame and overlap-add,
    /// trimming to `signal_len` samples.
    pub fn synthesize(&self, coeffs: &[f64], signal_len: usize) -> Result<Vec<f64>> {
        if coeffs.len() % self.bins != 0 {
            return Err(Error::shape(format!(
                "{} coefficients is not a multiple of {} bins",
                coeffs.len(),
                self.bins
            )));
        }
        let grid = FrameGrid::new(self.frame_len())?;
        let frames: Vec<Vec<f64>> = coeffs
            .par_chunks(self.bins)
            .map(|c| {
                let mut frame = vec![0.0; self.frame_len()];
                self.inverse_frame(c, &mut frame);
                frame
            })
            .collect();
        overlap_add(&Frames::new(frames, signal_len), &grid)
    }
}

/// Signed MDCT coefficients on a `frames x bins` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MdctSpectrogram {
    coeffs: Vec<f64>,
    frames: usize,
    bins: usize,
    sample_rate: u32,
    signal_len: usize,
    companded: bool,
}

impl MdctSpectrogram {
    pub fn from_parts(
        coeffs: Vec<f64>,
        frames: usize,
        bins: usize,
        sample_rate: u32,
        signal_len: usize,
        companded: bool,
    ) -> Result<Self> {
        if coeffs.len() != frames * bins {
            return Err(Error::shape(format!(
                "{} coefficients for a {frames}x{bins} grid",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("MDCT coefficient".into()));
        }
        Ok(Self {
            coeffs,
            frames,
            bins,
            sample_rate,
            signal_len,
            companded,
        })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn hop(&self) -> usize {
        self.bins
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn is_companded(&self) -> bool {
        self.companded
    }

    pub fn at(&self, frame: usize, bin: usize) -> f64 {
        self.coeffs[frame * self.bins + bin]
    }

    /// Center frequency of bin `k`: `(k + 1/2) * sr / (2K)`.
    pub fn bin_center_hz(&self, k: usize) -> f64 {
        bin_center_hz(k, self.bins, self.sample_rate)
    }
}

pub fn bin_center_hz(k: usize, bins: usize, sample_rate: u32) -> f64 {
    (k as f64 + 0.5) * sample_rate as f64 / (2 * bins) as f64
}

pub fn mdct(wave: &Waveform, window: &KbdWindow) -> Result<MdctSpectrogram> {
    mdct_with(&MdctPlan::new(window), wave)
}

pub fn mdct_with(plan: &MdctPlan, wave: &Waveform) -> Result<MdctSpectrogram> {
    let (coeffs, frames) = plan.analyze(wave.samples());
    MdctSpectrogram::from_parts(
        coeffs,
        frames,
        plan.bins(),
        wave.sample_rate(),
        wave.len(),
        false,
    )
}

pub fn imdct(spec: &MdctSpectrogram, window: &KbdWindow) -> Result<Waveform> {
    imdct_with(&MdctPlan::new(window), spec)
}

pub fn imdct_with(plan: &MdctPlan, spec: &MdctSpectrogram) -> Result<Waveform> {
    if spec.companded {
        return Err(Error::invalid(
            "spectrogram is companded; expand it before synthesis",
        ));
    }
    if spec.bins != plan.bins() {
        return Err(Error::shape(format!(
            "spectrogram has {} bins but the window implies {}",
            spec.bins,
            plan.bins()
        )));
    }
    Waveform::new(plan.synthesize(&spec.coeffs, spec.signal_len)?, spec.sample_rate)
}

/// `sign(x) * asinh(g |x|) / ln 10`, i.e. `asinh(g x) / ln 10`.
pub fn compress_value(x: f64, gain: f64) -> f64 {
    (gain * x).asinh() / LN_10
}

/// Exact inverse of [`compress_value`]: `sinh(s ln 10) / g`.
pub fn expand_value(s: f64, gain: f64) -> f64 {
    (s * LN_10).sinh() / gain
}

fn check_gain(gain: f64) -> Result<()> {
    if gain > 0.0 && gain.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("companding gain must be > 0, got {gain}")))
    }
}

pub fn compress(spec: &MdctSpectrogram, gain: f64) -> Result<MdctSpectrogram> {
    check_gain(gain)?;
    if spec.companded {
        return Err(Error::invalid("spectrogram is already companded"));
    }
    Ok(MdctSpectrogram {
        coeffs: spec.coeffs.iter().map(|&x| compress_value(x, gain)).collect(),
        companded: true,
        ..spec.clone()
    })
}

pub fn expand(spec: &MdctSpectrogram, gain: f64) -> Result<MdctSpectrogram> {
    check_gain(gain)?;
    if !spec.companded {
        return Err(Error::invalid("spectrogram is not companded"));
    }
    let coeffs: Vec<f64> = spec.coeffs.iter().map(|&s| expand_value(s, gain)).collect();
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("expanded coefficient overflowed".into()));
    }
    Ok(MdctSpectrogram {
        coeffs,
        companded: false,
        ..spec.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct evaluation of the analysis sum, independent of the FFT path.
    fn brute_mdct_frame(frame: &[f64], w: &[f64]) -> Vec<f64> {
        let k_bins = frame.len() / 2;
        let kf = k_bins as f64;
        (0..k_bins)
            .map(|k| {
                (0..frame.len())
                    .map(|n| {
                        w[n] * frame[n]
                            * (PI / kf * (n as f64 + 0.5 + kf / 2.0) * (k as f64 + 0.5)).cos()
                    })
                    .sum()
            })
            .collect()
    }

    fn random_wave(rng: &mut ChaCha8Rng, len: usize) -> Waveform {
        Waveform::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), 48_000).unwrap()
    }

    #[test]
    fn kbd_princen_bradley_and_symmetry() {
        let w = KbdWindow::new(1024, 6.0).unwrap();
        assert!(w.princen_bradley_error() < 1e-12);
        for n in 0..1024 {
            assert_eq!(w.taps()[n], w.taps()[1023 - n]);
        }
    }

    #[test]
    fn kbd_alpha_zero_closed_form() {
        let w = KbdWindow::new(16, 0.0).unwrap();
        for n in 0..8 {
            let expected = ((n + 1) as f64 / 9.0).sqrt();
            assert!((w.taps()[n] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn kbd_rejects_bad_shapes() {
        assert!(KbdWindow::new(1023, 6.0).is_err());
        assert!(KbdWindow::new(2, 6.0).is_err());
        assert!(KbdWindow::new(16, -1.0).is_err());
    }

    #[test]
    fn bessel_i0_reference_values() {
        // Abramowitz & Stegun table 9.8.
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i0(5.0) - 27.239_871_823_604_45).abs() < 1e-11);
    }

    #[test]
    fn fft_path_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &len in &[16usize, 64, 1024] {
            let win = KbdWindow::new(len, 6.0).unwrap();
            let plan = MdctPlan::new(&win);
            let frame: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut fast = vec![0.0; len / 2];
            plan.forward_frame(&frame, &mut fast);
            let slow = brute_mdct_frame(&frame, win.taps());
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-9 * len as f64, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_signal_gives_zero_coeffs_and_back() {
        let w = KbdWindow::default();
        let spec = mdct(&Waveform::zeros(3000, 48_000).unwrap(), &w).unwrap();
        assert_eq!(spec.bins(), 512);
        assert!(spec.coeffs().iter().all(|&c| c == 0.0));
        let y = imdct(&spec, &w).unwrap();
        assert!(y.samples().iter().all(|&c| c == 0.0));
        assert_eq!(y.len(), 3000);
    }

    #[test]
    fn cosine_at_bin_center_concentrates() {
        let w = KbdWindow::default();
        let k = 200;
        let f = bin_center_hz(k, 512, 48_000);
        let x: Vec<f64> = (0..48_000)
            .map(|n| (2.0 * PI * f * n as f64 / 48_000.0).cos())
            .collect();
        let x_copy = x.clone();
        let spec = mdct(&Waveform::new(x, 48_000).unwrap(), &w).unwrap();
        // Energy per bin summed over interior frames.
        let mut energy = vec![0.0; 512];
        for t in 2..spec.frames() - 2 {
            for (b, e) in energy.iter_mut().enumerate() {
                *e += spec.at(t, b).powi(2);
            }
        }
        let peak = energy[k];
        let argmax = (0..512).max_by(|&a, &b| energy[a].total_cmp(&energy[b])).unwrap();
        assert_eq!(argmax, k);
        // The KBD main lobe spans the two neighbouring bins; everything
        // beyond it sits at least 20 dB down.
        let max_outside = energy
            .iter()
            .enumerate()
            .filter(|(b, _)| b.abs_diff(k) >= 2)
            .map(|(_, e)| *e)
            .fold(0.0, f64::max);
        assert!(10.0 * (peak / max_outside).log10() >= 20.0);

        // Same measurement through the direct analysis sum on a few frames.
        let grid = FrameGrid::default();
        let frames = frame_signal(&x_copy, &grid);
        let mut direct = vec![0.0; 512];
        for frame in &frames.frames()[10..14] {
            for (e, c) in direct.iter_mut().zip(brute_mdct_frame(frame, w.taps())) {
                *e += c * c;
            }
        }
        let dmax = (0..512).max_by(|&a, &b| direct[a].total_cmp(&direct[b])).unwrap();
        assert_eq!(dmax, k);
    }

    #[test]
    fn linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = KbdWindow::default();
        let x = random_wave(&mut rng, 5000);
        let scaled = Waveform::new(x.samples().iter().map(|v| 2.5 * v).collect(), 48_000).unwrap();
        let a = mdct(&x, &w).unwrap();
        let b = mdct(&scaled, &w).unwrap();
        for (p, q) in a.coeffs().iter().zip(b.coeffs()) {
            assert!((2.5 * p - q).abs() < 1e-12 * (1.0 + q.abs()));
        }
        let ya = imdct(&a, &w).unwrap();
        let yb = imdct(&b, &w).unwrap();
        for (p, q) in ya.samples().iter().zip(yb.samples()) {
            assert!((2.5 * p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn roundtrip_various_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = KbdWindow::default();
        for len in [1usize, 2, 511, 512, 513, 1024, 4097, 48_460] {
            let x = random_wave(&mut rng, len);
            let y = imdct(&mdct(&x, &w).unwrap(), &w).unwrap();
            assert_eq!(y.len(), len);
            let err = x
                .samples()
                .iter()
                .zip(y.samples())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-9, "len {len}: {err}");
        }
    }

    #[test]
    fn imdct_rejects_companded_and_mismatched() {
        let w = KbdWindow::default();
        let spec = mdct(&Waveform::zeros(100, 48_000).unwrap(), &w).unwrap();
        let c = compress(&spec, DEFAULT_GAIN).unwrap();
        assert!(imdct(&c, &w).is_err());
        let small = KbdWindow::new(64, 6.0).unwrap();
        assert!(imdct(&spec, &small).is_err());
    }

    #[test]
    fn companding_values() {
        assert_eq!(compress_value(0.0, 800.0), 0.0);
        let s = compress_value(1.0 / 800.0, 800.0);
        assert!((s - 1f64.asinh() / LN_10).abs() < 1e-15);
        assert!((s - 0.382_775_685_337_863).abs() < 1e-12);
        assert_eq!(expand_value(0.0, 800.0), 0.0);
        assert!((expand_value(s, 800.0) - 1.0 / 800.0).abs() < 1e-15);
        assert!((expand_value(0.382_759, 800.0) - 1.0 / 800.0).abs() < 1e-7);
        assert_eq!(compress_value(-0.3, 800.0), -compress_value(0.3, 800.0));
    }

    #[test]
    fn companding_bijection_log_grid() {
        for i in 0..=900 {
            let mag = 10f64.powf(-8.0 + 9.0 * i as f64 / 900.0);
            for x in [mag, -mag] {
                let back = expand_value(compress_value(x, 800.0), 800.0);
                assert!(((back - x) / x).abs() < 1e-9, "{x}");
            }
        }
    }

    #[test]
    fn companding_rejects_bad_gain_and_flags() {
        let w = KbdWindow::default();
        let spec = mdct(&Waveform::zeros(10, 48_000).unwrap(), &w).unwrap();
        assert!(compress(&spec, 0.0).is_err());
        assert!(compress(&spec, -1.0).is_err());
        assert!(expand(&spec, 800.0).is_err());
        let c = compress(&spec, 800.0).unwrap();
        assert!(c.is_companded());
        assert!(expand(&c, 0.0).is_err());
        assert!(!expand(&c, 800.0).unwrap().is_companded());
    }
}
