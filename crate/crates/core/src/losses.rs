//! Adversarial, feature-matching, sparse-aware and spectral reconstruction
//! losses, and the warm-up weighted totals used for training.

use serde::{Deserialize, Serialize};

use crate::autograd::{Tensor, Var};
use crate::error::{Error, Result};

/// (fft size, hop, window length) of each reconstruction resolution.
pub const STFT_RESOLUTIONS: [(usize, usize, usize); 3] = [(512, 50, 240), (1024, 120, 600), (2048, 240, 1200)];

const MAG_FLOOR: f64 = 1e-14;
const SIGMOID_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub wav_adv: f64,
    pub spec_adv: f64,
    pub wav: f64,
    pub feat: f64,
    pub sparse_c: f64,
    pub sparse_s: f64,
    pub warmup_steps: u64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            wav_adv: 0.3,
            spec_adv: 0.7,
            wav: 5.0,
            feat: 3.0,
            sparse_c: 1.0,
            sparse_s: 0.25,
            warmup_steps: 20_000,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.wav_adv, self.spec_adv, self.wav, self.feat, self.sparse_c, self.sparse_s];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Adversarial weights at `step`: linear from zero to the targets over
    /// `warmup_steps`, constant afterwards.
    pub fn warmup(&self, step: u64) -> (f64, f64) {
        let frac = if self.warmup_steps == 0 {
            1.0
        } else {
            (step as f64 / self.warmup_steps as f64).min(1.0)
        };
        (self.wav_adv * frac, self.spec_adv * frac)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparseParams {
    /// Quantile of `|S_hr|` over frames that sets the per-bin threshold.
    pub quantile: f64,
    pub alpha: f64,
}

impl Default for SparseParams {
    fn default() -> Self {
        Self {
            quantile: 0.8,
            alpha: 10.0,
        }
    }
}

impl SparseParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.quantile) || !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "sparse quantile must lie in [0, 1] and alpha be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

fn sum_all<'t>(terms: impl IntoIterator<Item = Var<'t>>) -> Option<Var<'t>> {
    let mut it = terms.into_iter();
    let first = it.next()?;
    Some(it.fold(first, |acc, v| acc.add(v).expect("scalars add")))
}

fn sq_dist_mean(x: Var<'_>, target: f64) -> Result<Var<'_>> {
    x.add_scalar(-target).square().mean()
}

/// Discriminator least-squares loss summed over heads:
/// `mean((1 - D(real))^2) + mean(D(fake)^2)` per head.
pub fn lsgan_d<'t>(real: &[Var<'t>], fake: &[Var<'t>]) -> Result<Var<'t>> {
    if real.is_empty() || real.len() != fake.len() {
        return Err(Error::shape(format!(
            "need matching non-empty logit sets, got {} real and {} fake",
            real.len(),
            fake.len()
        )));
    }
    let terms = real
        .iter()
        .zip(fake)
        .map(|(&r, &f)| sq_dist_mean(r, 1.0)?.add(sq_dist_mean(f, 0.0)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(sum_all(terms).expect("non-empty"))
}

/// Generator least-squares loss summed over heads: `mean((1 - D(fake))^2)`.
pub fn lsgan_g<'t>(fake: &[Var<'t>]) -> Result<Var<'t>> {
    if fake.is_empty() {
        return Err(Error::shape("no discriminator logits"));
    }
    let terms = fake.iter().map(|&f| sq_dist_mean(f, 1.0)).collect::<Result<Vec<_>>>()?;
    Ok(sum_all(terms).expect("non-empty"))
}

/// Sum over heads and layers of the mean absolute feature difference.
pub fn feature_matching<'t>(real: &[Vec<Var<'t>>], fake: &[Vec<Var<'t>>]) -> Result<Var<'t>> {
    let structure = |f: &[Vec<Var<'t>>]| f.iter().map(|h| h.iter().map(|v| v.shape()).collect::<Vec<_>>()).collect::<Vec<_>>();
    if real.is_empty() || structure(real) != structure(fake) {
        return Err(Error::shape("feature sets differ in structure"));
    }
    let mut terms = Vec::new();
    for (rh, fh) in real.iter().zip(fake) {
        for (&r, &f) in rh.iter().zip(fh) {
            terms.push(r.sub(f)?.abs().mean()?);
        }
    }
    sum_all(terms).ok_or_else(|| Error::shape("no feature maps"))
}

/// Per-bin quantile of `|s|` over frames for a `[frames, bins]` array,
/// interpolating linearly between order statistics.
pub fn bin_quantiles(s: &[f64], frames: usize, bins: usize, q: f64) -> Result<Vec<f64>> {
    if frames == 0 || s.len() != frames * bins || !(0.0..=1.0).contains(&q) {
        return Err(Error::shape(format!(
            "quantile over {} values as {frames}x{bins} at q={q}",
            s.len()
        )));
    }
    let pos = q * (frames - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(frames - 1);
    let frac = pos - lo as f64;
    let mut col = vec![0.0; frames];
    Ok((0..bins)
        .map(|k| {
            for (t, c) in col.iter_mut().enumerate() {
                *c = s[t * bins + k].abs();
            }
            col.sort_by(f64::total_cmp);
            col[lo] + (col[hi] - col[lo]) * frac
        })
        .collect())
}

/// Content weight `w_c = sigmoid((|S_hr| - tau) * alpha)` for each cell of a
/// `[frames, bins]` target; `w_s = 1 - w_c`.
pub fn content_weights(s_hr: &[f64], tau: &[f64], alpha: f64) -> Vec<f64> {
    let bins = tau.len();
    s_hr.iter()
        .enumerate()
        .map(|(i, s)| {
            let z = ((s.abs() - tau[i % bins]) * alpha).clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
            1.0 / (1.0 + (-z).exp())
        })
        .collect()
}

/// `mean(lambda_c * w_c * |S_hr - S_hat| + lambda_s * w_s * |S_hat|)` with
/// per-bin thresholds `tau`. Differentiable in `s_hat`.
pub fn sparse_aware<'t>(
    s_hr: &Tensor,
    s_hat: Var<'t>,
    tau: &[f64],
    alpha: f64,
    lambda_c: f64,
    lambda_s: f64,
) -> Result<Var<'t>> {
    let shape = s_hr.shape();
    if shape.len() != 2 || s_hat.shape() != shape || tau.len() != shape[1] {
        return Err(Error::shape(format!(
            "sparse loss: target {shape:?}, prediction {:?}, {} thresholds",
            s_hat.shape(),
            tau.len()
        )));
    }
    let tape = s_hat.tape();
    let wc = content_weights(s_hr.data(), tau, alpha);
    let ws: Vec<f64> = wc.iter().map(|w| 1.0 - w).collect();
    let wc = tape.constant(Tensor::new(shape.to_vec(), wc)?);
    let ws = tape.constant(Tensor::new(shape.to_vec(), ws)?);
    let target = tape.constant(s_hr.clone());
    let content = wc.mul(target.sub(s_hat)?.abs())?.scale(lambda_c);
    let silence = ws.mul(s_hat.abs())?.scale(lambda_s);
    content.add(silence)?.mean()
}

/// Spectral convergence and mean absolute log-magnitude difference at
/// one STFT resolution.
pub fn stft_terms<'t>(x: Var<'t>, x_hat: Var<'t>, fft: usize, hop: usize, win: usize) -> Result<(Var<'t>, Var<'t>)> {
    if x.numel() == 0 || x.shape() != x_hat.shape() {
        return Err(Error::shape(format!(
            "stft loss on {:?} vs {:?}",
            x.shape(),
            x_hat.shape()
        )));
    }
    let mag = |v: Var<'t>| -> Result<Var<'t>> {
        let z = v.stft(fft, hop, win)?.square().sum_axis(0)?;
        Ok(z.clamp_min(MAG_FLOOR).sqrt())
    };
    let (m, m_hat) = (mag(x)?, mag(x_hat)?);
    let sc = m.sub(m_hat)?.square().sum().sqrt().div(m.square().sum().sqrt())?;
    let log_mag = m.ln().sub(m_hat.ln())?.abs().mean()?;
    Ok((sc, log_mag))
}

/// Sum over [`STFT_RESOLUTIONS`] of spectral convergence plus log-magnitude
/// distance.
pub fn multires_stft_loss<'t>(x: Var<'t>, x_hat: Var<'t>) -> Result<Var<'t>> {
    let mut terms = Vec::with_capacity(2 * STFT_RESOLUTIONS.len());
    for (fft, hop, win) in STFT_RESOLUTIONS {
        let (sc, lm) = stft_terms(x, x_hat, fft, hop, win)?;
        terms.push(sc);
        terms.push(lm);
    }
    Ok(sum_all(terms).expect("fixed resolutions"))
}

/// One row of training telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub step: u64,
    pub adv_wav_g: f64,
    pub adv_spec_g: f64,
    pub adv_wav_d: f64,
    pub adv_spec_d: f64,
    pub feat: f64,
    pub sparse: f64,
    pub wav_recon: f64,
    pub total_g: f64,
    pub total_d: f64,
}

pub const LOSS_CSV_HEADER: &str =
    "step,adv_wav_g,adv_spec_g,adv_wav_d,adv_spec_d,feat,sparse,wav_recon,total_g,total_d";

/// Generator objective from its components, in a fixed evaluation order.
pub fn total_g(
    adv_wav: f64,
    adv_spec: f64,
    wav: f64,
    feat: f64,
    sparse: f64,
    step: u64,
    weights: &LossWeights,
) -> f64 {
    let (lw, ls) = weights.warmup(step);
    lw * adv_wav + ls * adv_spec + weights.wav * wav + weights.feat * feat + sparse
}

pub fn total_d(adv_wav: f64, adv_spec: f64) -> f64 {
    adv_wav + adv_spec
}

/// [`total_g`] on the tape, evaluated in the same order so the values agree
/// exactly.
pub fn total_g_var<'t>(
    adv_wav: Var<'t>,
    adv_spec: Var<'t>,
    wav: Var<'t>,
    feat: Var<'t>,
    sparse: Var<'t>,
    step: u64,
    weights: &LossWeights,
) -> Result<Var<'t>> {
    let (lw, ls) = weights.warmup(step);
    adv_wav
        .scale(lw)
        .add(adv_spec.scale(ls))?
        .add(wav.scale(weights.wav))?
        .add(feat.scale(weights.feat))?
        .add(sparse)
}

impl LossReport {
    /// Fill in the totals from the components.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        step: u64,
        adv_wav_g: f64,
        adv_spec_g: f64,
        adv_wav_d: f64,
        adv_spec_d: f64,
        feat: f64,
        sparse: f64,
        wav_recon: f64,
        weights: &LossWeights,
    ) -> Self {
        Self {
            step,
            adv_wav_g,
            adv_spec_g,
            adv_wav_d,
            adv_spec_d,
            feat,
            sparse,
            wav_recon,
            total_g: total_g(adv_wav_g, adv_spec_g, wav_recon, feat, sparse, step, weights),
            total_d: total_d(adv_wav_d, adv_spec_d),
        }
    }

    pub fn values(&self) -> [f64; 9] {
        [
            self.adv_wav_g,
            self.adv_spec_g,
            self.adv_wav_d,
            self.adv_spec_d,
            self.feat,
            self.sparse,
            self.wav_recon,
            self.total_g,
            self.total_d,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    /// CSV row matching [`LOSS_CSV_HEADER`]. Floats use the shortest
    /// representation that round-trips.
    pub fn to_csv_row(&self) -> String {
        let mut row = self.step.to_string();
        for v in self.values() {
            row.push(',');
            row.push_str(&format!("{v:?}"));
        }
        row
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::{gradient_check, Tape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn lsgan_values() {
        let tape = Tape::new();
        let ones = tape.constant(Tensor::full(&[3, 4], 1.0));
        let zeros = tape.constant(Tensor::full(&[3, 4], 0.0));
        let half = tape.constant(Tensor::full(&[5], 0.5));
        assert_eq!(lsgan_d(&[ones, ones], &[zeros, zeros]).unwrap().item(), 0.0);
        assert_eq!(lsgan_d(&[half], &[half]).unwrap().item(), 0.5);
        assert_eq!(lsgan_g(&[ones]).unwrap().item(), 0.0);
        assert_eq!(lsgan_g(&[zeros, half]).unwrap().item(), 1.25);
        assert!(lsgan_d(&[], &[]).is_err());
        assert!(lsgan_d(&[ones], &[]).is_err());
        assert!(lsgan_g(&[]).is_err());
    }

    #[test]
    fn feature_matching_values() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::new(vec![2, 3], rand_vec(6, 1)).unwrap());
        let b = a.add_scalar(1.0);
        let c = tape.constant(Tensor::new(vec![4], rand_vec(4, 2)).unwrap());
        assert_eq!(feature_matching(&[vec![a, c]], &[vec![a, c]]).unwrap().item(), 0.0);
        assert!((feature_matching(&[vec![a]], &[vec![b]]).unwrap().item() - 1.0).abs() < 1e-15);
        let one = feature_matching(&[vec![a, c]], &[vec![b, c]]).unwrap().item();
        let two = feature_matching(&[vec![a, c], vec![a, c]], &[vec![b, c], vec![b, c]]).unwrap().item();
        assert_eq!(two, 2.0 * one);
        assert!(feature_matching(&[vec![a]], &[vec![c]]).is_err());
        assert!(feature_matching(&[vec![a]], &[vec![a, a]]).is_err());
    }

    #[test]
    fn quantiles_interpolate() {
        // Column 0: |values| 0,1,2,3,4 -> q 0.8 at position 3.2 -> 3.2.
        let s = vec![0.0, 5.0, -1.0, 5.0, 2.0, 5.0, -3.0, 5.0, 4.0, 5.0];
        let tau = bin_quantiles(&s, 5, 2, 0.8).unwrap();
        assert!((tau[0] - 3.2).abs() < 1e-12);
        assert_eq!(tau[1], 5.0);
        assert_eq!(bin_quantiles(&s, 5, 2, 0.0).unwrap()[0], 0.0);
        assert_eq!(bin_quantiles(&s, 5, 2, 1.0).unwrap()[0], 4.0);
        assert!(bin_quantiles(&s, 4, 2, 0.8).is_err());
        assert!(bin_quantiles(&s, 5, 2, 1.5).is_err());
    }

    #[test]
    fn sparse_single_bin() {
        let tape = Tape::new();
        let hr = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let hat = tape.constant(hr.clone());
        let v = sparse_aware(&hr, hat, &[1.0], 10.0, 1.0, 0.25).unwrap().item();
        assert_eq!(v, 0.125);
    }

    #[test]
    fn sparse_weights_and_perfect_prediction_identity() {
        let (t, k) = (20, 6);
        let s: Vec<f64> = rand_vec(t * k, 3).iter().map(|v| v * 2.0).collect();
        let tau = bin_quantiles(&s, t, k, 0.8).unwrap();
        let wc = content_weights(&s, &tau, 10.0);
        for (i, w) in wc.iter().enumerate() {
            let ws = 1.0 - w;
            assert!((w + ws - 1.0).abs() < 1e-15);
            if s[i].abs() == tau[i % k] {
                assert_eq!(*w, 0.5);
            }
        }
        let hr = Tensor::new(vec![t, k], s.clone()).unwrap();
        let tape = Tape::new();
        let got = sparse_aware(&hr, tape.constant(hr.clone()), &tau, 10.0, 1.0, 0.25).unwrap().item();
        let want = 0.25 * wc.iter().zip(&s).map(|(w, x)| (1.0 - w) * x.abs()).sum::<f64>() / (t * k) as f64;
        assert!((got - want).abs() < 1e-14);
        assert!(sparse_aware(&hr, tape.constant(Tensor::zeros(&[t, k + 1])), &tau, 10.0, 1.0, 0.25).is_err());
    }

    #[test]
    fn sigmoid_is_clamped() {
        let w = content_weights(&[-1e9, 0.0], &[0.0, 1e9], 10.0);
        assert!(w[0] < 1.0 && w[0] > 1.0 - 1e-13);
        assert!(w[1] > 0.0 && w[1] < 1e-13);
    }

    #[test]
    fn stft_loss_properties() {
        let n = 3000;
        let x = Tensor::from_vec(rand_vec(n, 4));
        let tape = Tape::new();
        let xv = tape.constant(x.clone());
        assert!(multires_stft_loss(xv, xv).unwrap().item().abs() < 1e-12);
        let zero = tape.constant(Tensor::zeros(&[n]));
        for (fft, hop, win) in STFT_RESOLUTIONS {
            let (sc, _) = stft_terms(xv, zero, fft, hop, win).unwrap();
            assert!((sc.item() - 1.0).abs() < 1e-6, "{}", sc.item());
        }
        let noise = Tensor::from_vec(rand_vec(n, 5));
        let mut prev = f64::INFINITY;
        for step in 0..5 {
            let a = step as f64 / 4.0;
            let mix: Vec<f64> = noise.data().iter().zip(x.data()).map(|(e, v)| (1.0 - a) * e + a * v).collect();
            let l = multires_stft_loss(xv, tape.constant(Tensor::from_vec(mix))).unwrap().item();
            assert!(l < prev, "step {step}: {l} >= {prev}");
            prev = l;
        }
        assert!(multires_stft_loss(xv, tape.constant(Tensor::zeros(&[n - 1]))).is_err());
        let empty = tape.constant(Tensor::zeros(&[0]));
        assert!(multires_stft_loss(empty, empty).is_err());
    }

    #[test]
    fn warmup_schedule() {
        let w = LossWeights::default();
        assert_eq!(w.warmup(0), (0.0, 0.0));
        assert_eq!(w.warmup(20_000), (0.3, 0.7));
        assert_eq!(w.warmup(40_000), (0.3, 0.7));
        let (a, b) = w.warmup(10_000);
        assert!((a - 0.15).abs() < 1e-15 && (b - 0.35).abs() < 1e-15);
        let mut prev = (0.0, 0.0);
        for t in (0..25_000).step_by(997) {
            let cur = w.warmup(t);
            assert!(cur.0 >= prev.0 && cur.1 >= prev.1);
            prev = cur;
        }
        let instant = LossWeights { warmup_steps: 0, ..w };
        assert_eq!(instant.warmup(0), (0.3, 0.7));
    }

    #[test]
    fn totals() {
        let w = LossWeights::default();
        assert_eq!(total_g(0.0, 0.0, 0.0, 0.0, 0.0, 5, &w), 0.0);
        assert_eq!(total_g(9.0, 4.0, 0.0, 0.0, 0.0, 0, &w), 0.0);
        for t in [0, 7, 20_000, 1_000_000] {
            assert_eq!(total_g(0.0, 0.0, 1.0, 0.0, 0.0, t, &w), 5.0);
        }
        assert_eq!(total_d(0.25, 0.5), 0.75);
        let r = LossReport::new(20_000, 1.0, 2.0, 3.0, 4.0, 0.5, 0.25, 0.1, &w);
        assert_eq!(r.total_g, 0.3 * 1.0 + 0.7 * 2.0 + 5.0 * 0.1 + 3.0 * 0.5 + 0.25);
        assert_eq!(r.total_d, 7.0);

        let tape = Tape::new();
        let c = |v: f64| tape.constant(Tensor::scalar(v));
        let v = total_g_var(c(1.1), c(2.3), c(0.7), c(0.4), c(0.9), 1234, &w).unwrap().item();
        assert_eq!(v, total_g(1.1, 2.3, 0.7, 0.4, 0.9, 1234, &w));
    }

    #[test]
    fn report_csv() {
        let r = LossReport::new(3, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, &LossWeights::default());
        let row = r.to_csv_row();
        assert_eq!(row.split(',').count(), LOSS_CSV_HEADER.split(',').count());
        assert!(row.starts_with("3,0.1,0.2,"));
        assert!(r.is_finite());
    }

    fn check(inputs: &[Tensor], f: impl for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>) {
        let r = gradient_check(inputs, 1e-5, None, f).unwrap();
        assert!(r.max_rel_err < 1e-6, "{r:?}");
    }

    #[test]
    fn loss_gradients() {
        let a = Tensor::new(vec![3, 4], rand_vec(12, 6)).unwrap();
        let b = Tensor::new(vec![3, 4], rand_vec(12, 7)).unwrap();
        check(&[a.clone(), b.clone()], |_, v| lsgan_d(&[v[0]], &[v[1]]));
        check(&[a.clone()], |_, v| lsgan_g(&[v[0]]));
        let target = b.clone();
        check(&[a.clone()], move |t, v| feature_matching(&[vec![t.constant(target.clone())]], &[vec![v[0]]]));

        let hr = Tensor::new(vec![6, 4], rand_vec(24, 8)).unwrap();
        let tau = bin_quantiles(hr.data(), 6, 4, 0.8).unwrap();
        let hat = Tensor::new(vec![6, 4], rand_vec(24, 9)).unwrap();
        check(&[hat], |_, v| sparse_aware(&hr, v[0], &tau, 10.0, 1.0, 0.25));

        let x = Tensor::from_vec(rand_vec(700, 10));
        let y = Tensor::from_vec(rand_vec(700, 11));
        let r = gradient_check(&[y], 1e-5, Some(40), |t, v| multires_stft_loss(t.constant(x.clone()), v[0])).unwrap();
        assert!(r.max_rel_err < 1e-6, "{r:?}");
    }
}
