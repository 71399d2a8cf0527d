//! Geometry of the high-band discriminator heads.
//!
//! The band above the upsampling boundary `f_lo = (lr_sr / hr_sr) * f_hi`
//! (with `f_hi` the target Nyquist) holds only generated content. It is split
//! into equal-width MDCT-bin ranges, one per head, with the head count
//! reduced until every head gets at least `min_bins` bins. A full-band head
//! is always present.

use std::fmt::Write as _;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::mdct::bin_center_hz;

pub const DEFAULT_NUM_BANDS: usize = 4;
pub const DEFAULT_MIN_BINS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct BandLayout {
    pub lr_sr: u32,
    pub hr_sr: u32,
    pub f_lo: f64,
    pub f_hi: f64,
    pub bins: usize,
    pub bands: Vec<Range<usize>>,
}

impl BandLayout {
    pub fn full_band(&self) -> Range<usize> {
        0..self.bins
    }

    /// First MDCT bin whose center frequency is at or above `f_lo`.
    pub fn first_high_bin(&self) -> usize {
        first_bin_at_or_above(self.f_lo, self.bins, self.hr_sr)
    }

    /// Band heads plus the full-band head.
    pub fn num_heads(&self) -> usize {
        self.bands.len() + 1
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("head,bin_lo,bin_hi,hz_lo,hz_hi\n");
        let width = self.hr_sr as f64 / (2 * self.bins) as f64;
        let heads = self
            .bands
            .iter()
            .enumerate()
            .map(|(i, b)| (format!("band{i}"), b.clone()))
            .chain(std::iter::once(("full".to_string(), self.full_band())));
        for (name, r) in heads {
            let _ = writeln!(
                out,
                "{name},{},{},{:.2},{:.2}",
                r.start,
                r.end,
                r.start as f64 * width,
                r.end as f64 * width
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "lr_sr={} hr_sr={} f_lo={:.2} Hz f_hi={:.2} Hz K={}\n",
            self.lr_sr, self.hr_sr, self.f_lo, self.f_hi, self.bins
        );
        let _ = writeln!(out, "{:<6} {:>7} {:>7} {:>6}", "head", "bin_lo", "bin_hi", "width");
        for (i, b) in self.bands.iter().enumerate() {
            let _ = writeln!(out, "band{i:<2} {:>7} {:>7} {:>6}", b.start, b.end, b.len());
        }
        let _ = writeln!(out, "{:<6} {:>7} {:>7} {:>6}", "full", 0, self.bins, self.bins);
        out
    }
}

fn first_bin_at_or_above(f: f64, bins: usize, sr: u32) -> usize {
    // Smallest k with (k + 1/2) * sr / (2K) >= f, found exactly by scanning
    // from the floating-point estimate.
    let est = (f * (2 * bins) as f64 / sr as f64 - 0.5).ceil().max(0.0) as usize;
    let mut k = est.min(bins);
    while k > 0 && bin_center_hz(k - 1, bins, sr) >= f {
        k -= 1;
    }
    while k < bins && bin_center_hz(k, bins, sr) < f {
        k += 1;
    }
    k
}

pub fn layout(lr_sr: u32, hr_sr: u32, bins: usize, num_bands: usize, min_bins: usize) -> Result<BandLayout> {
    if lr_sr == 0 || lr_sr > hr_sr {
        return Err(Error::invalid(format!(
            "need 0 < lr_sr <= hr_sr, got lr_sr={lr_sr} hr_sr={hr_sr}"
        )));
    }
    if bins == 0 || num_bands == 0 || min_bins == 0 {
        return Err(Error::invalid("bins, num_bands and min_bins must be positive"));
    }
    let f_hi = hr_sr as f64 / 2.0;
    let f_lo = lr_sr as f64 / hr_sr as f64 * f_hi;
    let start = first_bin_at_or_above(f_lo, bins, hr_sr);
    let width = bins - start;

    let count = (1..=num_bands).rev().find(|&n| width / n >= min_bins).unwrap_or(0);
    let mut bands = Vec::with_capacity(count);
    if count > 0 {
        let base = width / count;
        let extra = width % count;
        let mut lo = start;
        for i in 0..count {
            // Remainder bins go to the highest bands.
            let w = base + usize::from(i >= count - extra);
            bands.push(lo..lo + w);
            lo += w;
        }
    }
    Ok(BandLayout {
        lr_sr,
        hr_sr,
        f_lo,
        f_hi,
        bins,
        bands,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_16k() {
        let l = layout(16_000, 48_000, 512, 4, 32).unwrap();
        assert_eq!(l.f_lo, 8_000.0);
        assert_eq!(l.first_high_bin(), 171);
        assert!(bin_center_hz(170, 512, 48_000) < 8_000.0);
        assert!((bin_center_hz(170, 512, 48_000) - 7_992.1875).abs() < 1e-9);
        assert!((bin_center_hz(171, 512, 48_000) - 8_039.0625).abs() < 1e-9);
        assert_eq!(l.bands[0].start, 171);
        assert_eq!(l.bands.last().unwrap().end, 512);
    }

    #[test]
    fn boundary_24k() {
        let l = layout(24_000, 48_000, 512, 4, 32).unwrap();
        assert_eq!(l.f_lo, 12_000.0);
        assert_eq!(l.first_high_bin(), 256);
        assert_eq!(l.bands.len(), 4);
        assert!(l.bands.iter().all(|b| b.len() == 64));
    }

    #[test]
    fn equal_rates_have_no_high_bands() {
        let l = layout(48_000, 48_000, 512, 4, 32).unwrap();
        assert!(l.bands.is_empty());
        assert_eq!(l.num_heads(), 1);
        assert_eq!(l.full_band(), 0..512);
    }

    #[test]
    fn band_count_shrinks_for_min_bins() {
        // 32 kHz input leaves 171 bins: 4 bands of 42/43 pass 32; with
        // min_bins 50 only 3 bands fit.
        let l = layout(32_000, 48_000, 512, 4, 50).unwrap();
        assert_eq!(l.bands.len(), 3);
        assert!(l.bands.iter().all(|b| b.len() >= 50));
    }

    #[test]
    fn remainder_goes_high() {
        let l = layout(16_000, 48_000, 512, 4, 32).unwrap();
        let widths: Vec<usize> = l.bands.iter().map(|b| b.len()).collect();
        assert_eq!(widths, vec![85, 85, 85, 86]);
    }

    #[test]
    fn invalid_inputs() {
        assert!(layout(48_001, 48_000, 512, 4, 32).is_err());
        assert!(layout(0, 48_000, 512, 4, 32).is_err());
        assert!(layout(8_000, 48_000, 0, 4, 32).is_err());
    }

    #[test]
    fn csv_has_one_row_per_head() {
        let l = layout(8_000, 48_000, 512, 4, 32).unwrap();
        assert_eq!(l.to_csv().lines().count(), 1 + l.num_heads());
    }

    #[test]
    fn sweep_invariants() {
        let mut prev_start = 0;
        for lr in (1_000..=48_000).step_by(500) {
            for num in 1..=8 {
                for min_bins in [1usize, 8, 32, 100] {
                    let l = layout(lr, 48_000, 512, num, min_bins).unwrap();
                    let start = l.first_high_bin();
                    if let (Some(first), Some(last)) = (l.bands.first(), l.bands.last()) {
                        assert_eq!(first.start, start);
                        assert_eq!(last.end, 512);
                        for w in l.bands.windows(2) {
                            assert_eq!(w[0].end, w[1].start);
                        }
                        let min = l.bands.iter().map(|b| b.len()).min().unwrap();
                        let max = l.bands.iter().map(|b| b.len()).max().unwrap();
                        assert!(min >= min_bins && max - min <= 1);
                        assert!(l.bands.len() <= num);
                    } else {
                        assert!(512 - start < min_bins);
                    }
                }
            }
            let start = layout(lr, 48_000, 512, 4, 32).unwrap().first_high_bin();
            assert!(start >= prev_start);
            prev_start = start;
        }
    }
}
