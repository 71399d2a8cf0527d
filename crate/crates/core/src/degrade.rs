//! Bandwidth degradation: Kaiser-windowed-sinc low-pass plus rational
//! polyphase resampling from 48 kHz down to a target rate and back up.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdct::bessel_i0;
use crate::signal::Waveform;

pub const HR_RATE: u32 = 48_000;
pub const MIN_TARGET_RATE: u32 = 4_000;
pub const MAX_TARGET_RATE: u32 = 48_000;
pub const DEFAULT_RATE_GRID: [u32; 6] = [4_000, 8_000, 12_000, 16_000, 24_000, 32_000];

/// Low-pass family shared by every resampling stage. Ratios are relative to
/// the Nyquist frequency of the narrower rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowpassDesign {
    pub cutoff_ratio: f64,
    pub transition_ratio: f64,
    pub attenuation_db: f64,
}

impl Default for LowpassDesign {
    fn default() -> Self {
        Self {
            cutoff_ratio: 0.91,
            transition_ratio: 0.18,
            attenuation_db: 70.0,
        }
    }
}

impl LowpassDesign {
    /// Odd-length linear-phase FIR for a signal at `rate` Hz band-limited to
    /// `band_edge` Hz, normalized to unit DC gain.
    pub fn taps(&self, rate: f64, band_edge: f64) -> Vec<f64> {
        let cutoff = self.cutoff_ratio * band_edge / rate;
        let transition = 2.0 * PI * self.transition_ratio * band_edge / rate;
        let a = self.attenuation_db;
        let beta = if a > 50.0 {
            0.1102 * (a - 8.7)
        } else if a >= 21.0 {
            0.5842 * (a - 21.0).powf(0.4) + 0.07886 * (a - 21.0)
        } else {
            0.0
        };
        let mut n = ((a - 7.95) / (2.285 * transition)).ceil() as usize + 1;
        if n % 2 == 0 {
            n += 1;
        }
        let center = (n - 1) as f64 / 2.0;
        let norm = bessel_i0(beta);
        let mut h: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 - center;
                let sinc = if t == 0.0 {
                    2.0 * cutoff
                } else {
                    (2.0 * PI * cutoff * t).sin() / (PI * t)
                };
                let r = t / center;
                sinc * bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm
            })
            .collect();
        let dc: f64 = h.iter().sum();
        h.iter_mut().for_each(|v| *v /= dc);
        h
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Reduced `(up, down)` factors for `in_rate -> out_rate`.
pub fn rational_ratio(in_rate: u32, out_rate: u32) -> (usize, usize) {
    let g = gcd(in_rate as u64, out_rate as u64);
    ((out_rate as u64 / g) as usize, (in_rate as u64 / g) as usize)
}

/// Polyphase `up/down` resampling with a zero-phase FIR designed at the
/// intermediate rate. Output has `ceil(len * up / down)` samples and no
/// group delay.
pub fn resample_poly(x: &[f64], up: usize, down: usize, taps: &[f64]) -> Vec<f64> {
    let n = taps.len() as i64;
    let center = (n - 1) / 2;
    let out_len = (x.len() * up).div_ceil(down);
    let (up_i, down_i) = (up as i64, down as i64);
    let gain = up as f64;
    (0..out_len)
        .map(|m| {
            let t = m as i64 * down_i + center;
            // 0 <= t - j*up < n
            let j_lo = ((t - n + 1).max(0) + up_i - 1) / up_i;
            let j_hi = (t / up_i).min(x.len() as i64 - 1);
            let mut acc = 0.0;
            let mut j = j_lo;
            while j <= j_hi {
                acc += x[j as usize] * taps[(t - j * up_i) as usize];
                j += 1;
            }
            gain * acc
        })
        .collect()
}

/// Resample `x` from `in_rate` to `out_rate` with the anti-aliasing filter
/// placed at `band_edge` Hz.
fn resample_band(x: &[f64], in_rate: u32, out_rate: u32, band_edge: f64, design: &LowpassDesign) -> Vec<f64> {
    let (up, down) = rational_ratio(in_rate, out_rate);
    let taps = design.taps(in_rate as f64 * up as f64, band_edge);
    resample_poly(x, up, down, &taps)
}

/// Change the sample rate of a waveform. Equal rates return the input.
pub fn resample(wave: &Waveform, out_rate: u32) -> Result<Waveform> {
    if out_rate == 0 {
        return Err(Error::invalid("output rate must be positive"));
    }
    let in_rate = wave.sample_rate();
    if in_rate == out_rate {
        return Ok(wave.clone());
    }
    let edge = in_rate.min(out_rate) as f64 / 2.0;
    let y = resample_band(wave.samples(), in_rate, out_rate, edge, &LowpassDesign::default());
    Waveform::new(y, out_rate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradeSpec {
    pub target_rate: u32,
    pub design: LowpassDesign,
}

impl DegradeSpec {
    pub fn new(target_rate: u32) -> Result<Self> {
        if !(MIN_TARGET_RATE..=MAX_TARGET_RATE).contains(&target_rate) {
            return Err(Error::invalid(format!(
                "target rate {target_rate} Hz outside [{MIN_TARGET_RATE}, {MAX_TARGET_RATE}]"
            )));
        }
        Ok(Self {
            target_rate,
            design: LowpassDesign::default(),
        })
    }

    pub fn filter_taps(&self) -> usize {
        let (up, _) = rational_ratio(HR_RATE, self.target_rate);
        self.design
            .taps(HR_RATE as f64 * up as f64, self.target_rate as f64 / 2.0)
            .len()
    }
}

/// Low-pass, downsample to `spec.target_rate`, and upsample back to 48 kHz.
/// The output has the input's length.
pub fn lowpass_resample(wave: &Waveform, spec: &DegradeSpec) -> Result<Waveform> {
    if wave.sample_rate() != HR_RATE {
        return Err(Error::invalid(format!(
            "degradation expects {HR_RATE} Hz input, got {}",
            wave.sample_rate()
        )));
    }
    DegradeSpec::new(spec.target_rate)?;
    let r = spec.target_rate;
    let edge = r as f64 / 2.0;
    let low = resample_band(wave.samples(), HR_RATE, r, edge, &spec.design);
    let mut back = resample_band(&low, r, HR_RATE, edge, &spec.design);
    back.resize(wave.len(), 0.0);
    Waveform::new(back, HR_RATE)
}

/// Where random degradation draws its target rate from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RateGrid {
    Discrete(Vec<u32>),
    /// Uniform over `[min, max]`, rounded to a multiple of `step` Hz.
    Continuous { min: u32, max: u32, step: u32 },
}

impl Default for RateGrid {
    fn default() -> Self {
        RateGrid::Discrete(DEFAULT_RATE_GRID.to_vec())
    }
}

impl RateGrid {
    /// Every rate the grid can produce lies in the supported range.
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            RateGrid::Discrete(rates) => {
                !rates.is_empty() && rates.iter().all(|r| (MIN_TARGET_RATE..=MAX_TARGET_RATE).contains(r))
            }
            RateGrid::Continuous { min, max, step } => {
                *step > 0 && min <= max && *min >= MIN_TARGET_RATE && *max <= MAX_TARGET_RATE
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "rate grid {self:?} must be non-empty within {MIN_TARGET_RATE}..={MAX_TARGET_RATE} Hz"
            )))
        }
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> Result<u32> {
        match self {
            RateGrid::Discrete(rates) => {
                if rates.is_empty() {
                    return Err(Error::invalid("rate grid is empty"));
                }
                Ok(rates[rng.gen_range(0..rates.len())])
            }
            RateGrid::Continuous { min, max, step } => {
                if min > max || *step == 0 {
                    return Err(Error::invalid("continuous rate range is empty"));
                }
                let steps = (max - min) / step;
                Ok(min + step * rng.gen_range(0..=steps))
            }
        }
    }
}

pub fn random_degrade<R: Rng>(wave: &Waveform, grid: &RateGrid, rng: &mut R) -> Result<(Waveform, u32)> {
    let r = grid.draw(rng)?;
    let degraded = lowpass_resample(wave, &DegradeSpec::new(r)?)?;
    Ok((degraded, r))
}

/// Contiguous `len`-sample segment at a uniform offset; shorter sources are
/// right-padded with zeros.
pub fn random_crop<R: Rng>(wave: &Waveform, len: usize, rng: &mut R) -> Result<Waveform> {
    if len == 0 {
        return Err(Error::invalid("crop length must be at least 1"));
    }
    if wave.len() <= len {
        return Ok(wave.fit_to_len(len));
    }
    let offset = rng.gen_range(0..=wave.len() - len);
    Waveform::new(wave.samples()[offset..offset + len].to_vec(), wave.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn sine(freq: f64, len: usize) -> Waveform {
        Waveform::new(
            (0..len)
                .map(|n| 0.5 * (2.0 * PI * freq * n as f64 / 48_000.0).sin())
                .collect(),
            48_000,
        )
        .unwrap()
    }

    /// Hann-windowed spectral peak magnitude near `freq` over the interior
    /// of the signal (edges excluded).
    fn tone_level(x: &[f64], freq: f64) -> f64 {
        let seg = &x[8_000..8_000 + 32_768];
        let n = seg.len();
        let mut buf: Vec<Complex<f64>> = seg
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos();
                Complex::new(v * w, 0.0)
            })
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let k = (freq * n as f64 / 48_000.0).round() as usize;
        (k - 3..=k + 3).map(|i| buf[i].norm()).fold(0.0, f64::max)
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn stopband_attenuation_at_8k() {
        let x = sine(10_000.0, 48_000);
        let y = lowpass_resample(&x, &DegradeSpec::new(8_000).unwrap()).unwrap();
        assert_eq!(y.len(), x.len());
        let drop = 20.0 * (tone_level(x.samples(), 10_000.0) / tone_level(y.samples(), 10_000.0)).log10();
        assert!(drop >= 60.0, "attenuation {drop} dB");
    }

    #[test]
    fn stopband_just_above_cutoff() {
        for (r, f) in [(16_000u32, 9_000.0), (4_000, 2_500.0), (32_000, 17_000.0)] {
            let x = sine(f, 48_000);
            let y = lowpass_resample(&x, &DegradeSpec::new(r).unwrap()).unwrap();
            let drop = 20.0 * (tone_level(x.samples(), f) / tone_level(y.samples(), f)).log10();
            assert!(drop >= 60.0, "r={r} f={f}: {drop} dB");
        }
    }

    #[test]
    fn passband_preserved_at_8k() {
        let x = sine(1_000.0, 48_000);
        let y = lowpass_resample(&x, &DegradeSpec::new(8_000).unwrap()).unwrap();
        let db = 20.0 * (rms(&y.samples()[4_000..44_000]) / rms(&x.samples()[4_000..44_000])).log10();
        assert!(db.abs() <= 0.2, "{db} dB");
    }

    #[test]
    fn full_rate_is_near_identity() {
        for f in [1_000.0, 8_000.0, 15_000.0, 19_000.0] {
            let x = sine(f, 48_000);
            let y = lowpass_resample(&x, &DegradeSpec::new(48_000).unwrap()).unwrap();
            let db = 20.0 * (rms(&y.samples()[4_000..44_000]) / rms(&x.samples()[4_000..44_000])).log10();
            assert!(db.abs() <= 0.1, "f={f}: {db} dB");
        }
    }

    #[test]
    fn length_preserved_for_awkward_lengths() {
        for len in [1usize, 7, 1001, 48_461] {
            let x = sine(440.0, len);
            for r in DEFAULT_RATE_GRID {
                let y = lowpass_resample(&x, &DegradeSpec::new(r).unwrap()).unwrap();
                assert_eq!(y.len(), len);
            }
        }
    }

    #[test]
    fn rejects_out_of_range_rates_and_wrong_input_rate() {
        assert!(DegradeSpec::new(3_999).is_err());
        assert!(DegradeSpec::new(48_001).is_err());
        let w = Waveform::zeros(10, 16_000).unwrap();
        assert!(lowpass_resample(&w, &DegradeSpec::new(8_000).unwrap()).is_err());
    }

    #[test]
    fn random_degrade_is_deterministic_and_uniform() {
        let grid = RateGrid::default();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| grid.draw(&mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut counts = [0usize; 6];
        for _ in 0..10_000 {
            let r = grid.draw(&mut rng).unwrap();
            counts[DEFAULT_RATE_GRID.iter().position(|&g| g == r).unwrap()] += 1;
        }
        for c in counts {
            let freq = c as f64 / 10_000.0;
            assert!((freq - 1.0 / 6.0).abs() <= 0.02, "{counts:?}");
        }
    }

    #[test]
    fn degenerate_grid_and_empty_grid() {
        let x = sine(2_000.0, 20_000);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (y, r) = random_degrade(&x, &RateGrid::Discrete(vec![48_000]), &mut rng).unwrap();
        assert_eq!(r, 48_000);
        let err = x.samples()[2_000..18_000]
            .iter()
            .zip(&y.samples()[2_000..18_000])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.01, "{err}");
        assert!(random_degrade(&x, &RateGrid::Discrete(vec![]), &mut rng).is_err());
    }

    #[test]
    fn grid_validation_and_json() {
        assert!(RateGrid::default().validate().is_ok());
        assert!(RateGrid::Discrete(vec![]).validate().is_err());
        assert!(RateGrid::Discrete(vec![2_000]).validate().is_err());
        assert!(RateGrid::Continuous { min: 4_000, max: 50_000, step: 1 }.validate().is_err());
        let g: RateGrid = serde_json::from_str(r#"{"continuous": {"min": 4000, "max": 8000, "step": 500}}"#).unwrap();
        assert_eq!(g, RateGrid::Continuous { min: 4_000, max: 8_000, step: 500 });
        let d: RateGrid = serde_json::from_str(r#"{"discrete": [8000]}"#).unwrap();
        assert_eq!(d, RateGrid::Discrete(vec![8_000]));
    }

    #[test]
    fn continuous_grid_stays_in_range() {
        let grid = RateGrid::Continuous { min: 4_000, max: 32_000, step: 1_000 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let r = grid.draw(&mut rng).unwrap();
            assert!((4_000..=32_000).contains(&r) && r % 1_000 == 0);
        }
    }

    #[test]
    fn crop_lengths_and_determinism() {
        let x = sine(300.0, 60_000);
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let ca = random_crop(&x, 48_460, &mut a).unwrap();
        assert_eq!(ca.len(), 48_460);
        assert_eq!(ca, random_crop(&x, 48_460, &mut b).unwrap());

        let short = Waveform::new(vec![1.0, 2.0], 48_000).unwrap();
        let padded = random_crop(&short, 5, &mut a).unwrap();
        assert_eq!(padded.samples(), &[1.0, 2.0, 0.0, 0.0, 0.0]);
        assert!(random_crop(&short, 0, &mut a).is_err());
    }

    #[test]
    fn resample_changes_length_by_ratio() {
        let x = Waveform::new(vec![0.1; 4_000], 8_000).unwrap();
        let y = resample(&x, 48_000).unwrap();
        assert_eq!(y.len(), 24_000);
        assert_eq!(y.sample_rate(), 48_000);
        let same = resample(&y, 48_000).unwrap();
        assert_eq!(same, y);
        assert_eq!(rational_ratio(48_000, 44_100), (147, 160));
    }
}
