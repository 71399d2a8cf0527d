use std::f64::consts::LN_10;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::{debug, info};

use super::config::TrainConfig;
use super::data::{Corpus, Example};
use super::inference::{config_from_record, config_record};
use crate::autograd::{read_checkpoint, write_checkpoint, AdamW, AdamWConfig, ParamStore, Tape, Tensor, Var};
use crate::bands::BandLayout;
use crate::error::{Error, Result};
use crate::losses::{
    bin_quantiles, feature_matching, lsgan_d, lsgan_g, multires_stft_loss, sparse_aware, total_g_var, LossReport,
};
use crate::mdct::{compress_value, KbdWindow, MdctPlan, DEFAULT_GAIN};
use crate::models::{DiscriminatorSet, Generator, HeadOutput};

pub const GEN_PREFIX: &str = "g.";
pub const DISC_PREFIX: &str = "d.";
const OPT_G_PREFIX: &str = "opt_g.";
const OPT_D_PREFIX: &str = "opt_d.";
const STEP_RECORD: &str = "meta/step";
/// Largest step count a checkpoint can hold exactly in an `f32`.
const MAX_CHECKPOINT_STEP: u64 = 1 << 24;
const DISC_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

/// One step of training telemetry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTrace {
    pub step: u64,
    pub report: LossReport,
    pub lr: f64,
    pub warmup: (f64, f64),
    /// Wall-clock duration of the step. Logged, but kept out of the CSV so
    /// that telemetry files are reproducible byte for byte.
    pub wall_ms: f64,
}

pub const TELEMETRY_HEADER: &str = concat!(
    "step,adv_wav_g,adv_spec_g,adv_wav_d,adv_spec_d,feat,sparse,wav_recon,total_g,total_d",
    ",lr,lambda_wav_adv,lambda_spec_adv"
);

impl StepTrace {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?}",
            self.report.to_csv_row(),
            self.lr,
            self.warmup.0,
            self.warmup.1
        )
    }
}

/// Tensors for one example, ready for the networks.
struct Prepared {
    s_hr: Tensor,
    s_lr: Tensor,
    hr: Tensor,
    tau: Vec<f64>,
    layout: BandLayout,
}

fn logits<'t>(heads: &[HeadOutput<'t>]) -> Vec<Var<'t>> {
    heads.iter().map(|h| h.logits).collect()
}

fn features<'t>(heads: &[HeadOutput<'t>]) -> Vec<Vec<Var<'t>>> {
    heads.iter().map(|h| h.features.clone()).collect()
}

fn batch_mean<'t>(terms: Vec<Var<'t>>) -> Result<Var<'t>> {
    let n = terms.len() as f64;
    let mut it = terms.into_iter();
    let first = it.next().ok_or_else(|| Error::invalid("empty batch"))?;
    let total = it.try_fold(first, |acc, v| acc.add(v))?;
    Ok(total.scale(1.0 / n))
}

/// Generator, discriminators and their optimizers, advanced one step at a
/// time.
pub struct Trainer {
    config: TrainConfig,
    corpus: Corpus,
    plan: Arc<MdctPlan>,
    generator: Generator,
    g_params: ParamStore,
    discs: DiscriminatorSet,
    d_params: ParamStore,
    opt_g: AdamW,
    opt_d: AdamW,
    step: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let corpus = Corpus::open(&config.corpus_dir)?;
        let gen_config = config.generator_config()?;
        let mut g_params = ParamStore::new();
        let generator = Generator::new(gen_config, &mut g_params, GEN_PREFIX, config.seed)?;
        let mut d_params = ParamStore::new();
        let discs = DiscriminatorSet::new(
            config.discriminator.clone(),
            &mut d_params,
            DISC_PREFIX,
            config.seed ^ DISC_SEED_OFFSET,
        )?;
        // Parameters live on the f32 grid throughout so a checkpoint holds
        // the exact training state.
        g_params.round_to_f32();
        d_params.round_to_f32();
        info!(
            "generator: {} tensors, {} parameters; discriminators: {} parameters",
            g_params.len(),
            g_params.num_scalars(),
            d_params.num_scalars()
        );
        Ok(Self {
            opt_g: AdamW::new(AdamWConfig::default(), &g_params),
            opt_d: AdamW::new(AdamWConfig::default(), &d_params),
            plan: Arc::new(MdctPlan::new(&KbdWindow::default())),
            config,
            corpus,
            generator,
            g_params,
            discs,
            d_params,
            step: 0,
        })
    }

    /// Rebuild the state saved by [`Trainer::save_checkpoint`].
    pub fn resume(config: TrainConfig, checkpoint: &Path) -> Result<Self> {
        let mut t = Self::new(config)?;
        let records = read_checkpoint(checkpoint)?;
        let saved = config_from_record(&records)?;
        if &saved != t.generator.config() {
            return Err(Error::Checkpoint(format!(
                "checkpoint generator config {saved:?} differs from the training config"
            )));
        }
        t.g_params.load_records(&records, "")?;
        t.d_params.load_records(&records, "")?;
        t.opt_g.load_records(&t.g_params, &records, OPT_G_PREFIX)?;
        t.opt_d.load_records(&t.d_params, &records, OPT_D_PREFIX)?;
        let step = records
            .iter()
            .find(|(n, _)| n == STEP_RECORD)
            .map(|(_, v)| v.item())
            .ok_or_else(|| Error::Checkpoint(format!("missing {STEP_RECORD}")))?;
        t.step = step as u64;
        info!("resumed from {} at step {}", checkpoint.display(), t.step);
        Ok(t)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn generator(&self) -> (&Generator, &ParamStore) {
        (&self.generator, &self.g_params)
    }

    pub fn discriminators(&self) -> (&DiscriminatorSet, &ParamStore) {
        (&self.discs, &self.d_params)
    }

    pub fn checkpoint_records(&self) -> Result<Vec<(String, Tensor)>> {
        if self.step >= MAX_CHECKPOINT_STEP {
            return Err(Error::Checkpoint(format!("step {} is too large to store", self.step)));
        }
        let mut recs = self.g_params.records();
        recs.extend(self.d_params.records());
        recs.extend(self.opt_g.records(&self.g_params, OPT_G_PREFIX));
        recs.extend(self.opt_d.records(&self.d_params, OPT_D_PREFIX));
        recs.push((STEP_RECORD.to_string(), Tensor::scalar(self.step as f64)));
        recs.push(config_record(self.generator.config())?);
        Ok(recs)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, &self.checkpoint_records()?)
    }

    fn prepare(&self, ex: &Example) -> Result<Prepared> {
        let gain = DEFAULT_GAIN;
        let analyze = |samples: &[f64]| -> Result<Tensor> {
            let (coeffs, frames) = self.plan.analyze(samples);
            let s = coeffs.into_iter().map(|x| compress_value(x, gain)).collect();
            Tensor::new(vec![frames, self.plan.bins()], s)
        };
        let s_hr = analyze(ex.hr.samples())?;
        let s_lr = analyze(ex.lr.samples())?;
        let (frames, bins) = (s_hr.shape()[0], s_hr.shape()[1]);
        let tau = bin_quantiles(s_hr.data(), frames, bins, self.config.sparse.quantile)?;
        Ok(Prepared {
            hr: Tensor::from_vec(ex.hr.samples().to_vec()),
            layout: self.discs.layout(ex.rate)?,
            s_hr,
            s_lr,
            tau,
        })
    }

    /// Sample a batch, update the discriminators, then update the
    /// generator against the refreshed discriminators.
    pub fn train_step(&mut self) -> Result<StepTrace> {
        let started = Instant::now();
        let step = self.step;
        let cfg = &self.config;
        let examples = self
            .corpus
            .sample(cfg.seed, step, cfg.batch_size, cfg.segment_len, &cfg.rate_grid)?;
        let batch = examples.iter().map(|ex| self.prepare(ex)).collect::<Result<Vec<_>>>()?;
        let lr = cfg.lr_at(step, self.corpus.len());
        let warmup = cfg.losses.warmup(step);
        let seg = cfg.segment_len;

        let tape_g = Tape::new();
        let gp = self.g_params.bind(&tape_g, true);
        let mut fakes = Vec::with_capacity(batch.len());
        for item in &batch {
            let s_hat = self.generator.forward(&gp, tape_g.constant(item.s_lr.clone()))?;
            let wave_hat = s_hat
                .scale(LN_10)
                .sinh()
                .scale(1.0 / DEFAULT_GAIN)
                .imdct(self.plan.clone(), seg)?;
            fakes.push((s_hat, wave_hat));
        }

        // Discriminator update on detached generator output.
        let (adv_wav_d, adv_spec_d) = {
            let tape_d = Tape::new();
            let dp = self.d_params.bind(&tape_d, true);
            let mut wav_terms = Vec::new();
            let mut spec_terms = Vec::new();
            for (item, (s_hat, wave_hat)) in batch.iter().zip(&fakes) {
                let real_w = self.discs.wave_forward(&dp, tape_d.constant(item.hr.clone()))?;
                let fake_w = self.discs.wave_forward(&dp, tape_d.constant(wave_hat.value()))?;
                wav_terms.push(lsgan_d(&logits(&real_w), &logits(&fake_w))?);
                let real_s = self.discs.hbmbd_forward(&dp, tape_d.constant(item.s_hr.clone()), &item.layout)?;
                let fake_s = self.discs.hbmbd_forward(&dp, tape_d.constant(s_hat.value()), &item.layout)?;
                spec_terms.push(lsgan_d(&logits(&real_s), &logits(&fake_s))?);
            }
            let adv_wav_d = batch_mean(wav_terms)?;
            let adv_spec_d = batch_mean(spec_terms)?;
            let total_d = adv_wav_d.add(adv_spec_d)?;
            if !total_d.item().is_finite() {
                return Err(Error::NonFinite(format!(
                    "step {step}: discriminator loss {} (wave {}, spectral {})",
                    total_d.item(),
                    adv_wav_d.item(),
                    adv_spec_d.item()
                )));
            }
            tape_d.backward(total_d)?;
            self.d_params.collect_grads(&dp);
            self.opt_d.step(&mut self.d_params, lr)?;
            (adv_wav_d.item(), adv_spec_d.item())
        };

        // Generator update through the updated, frozen discriminators.
        let dp = self.d_params.bind(&tape_g, false);
        let mut adv_wav = Vec::new();
        let mut adv_spec = Vec::new();
        let mut feat = Vec::new();
        let mut sparse = Vec::new();
        let mut recon = Vec::new();
        for (item, &(s_hat, wave_hat)) in batch.iter().zip(&fakes) {
            let real_wave = tape_g.constant(item.hr.clone());
            let real_w = self.discs.wave_forward(&dp, real_wave)?;
            let fake_w = self.discs.wave_forward(&dp, wave_hat)?;
            let real_s = self.discs.hbmbd_forward(&dp, tape_g.constant(item.s_hr.clone()), &item.layout)?;
            let fake_s = self.discs.hbmbd_forward(&dp, s_hat, &item.layout)?;
            adv_wav.push(lsgan_g(&logits(&fake_w))?);
            adv_spec.push(lsgan_g(&logits(&fake_s))?);
            let mut real_f = features(&real_w);
            real_f.extend(features(&real_s));
            let mut fake_f = features(&fake_w);
            fake_f.extend(features(&fake_s));
            feat.push(feature_matching(&real_f, &fake_f)?);
            sparse.push(sparse_aware(
                &item.s_hr,
                s_hat,
                &item.tau,
                cfg.sparse.alpha,
                cfg.losses.sparse_c,
                cfg.losses.sparse_s,
            )?);
            recon.push(multires_stft_loss(real_wave, wave_hat)?);
        }
        let adv_wav = batch_mean(adv_wav)?;
        let adv_spec = batch_mean(adv_spec)?;
        let feat = batch_mean(feat)?;
        let sparse = batch_mean(sparse)?;
        let recon = batch_mean(recon)?;
        let total_g = total_g_var(adv_wav, adv_spec, recon, feat, sparse, step, &cfg.losses)?;
        let report = LossReport::new(
            step,
            adv_wav.item(),
            adv_spec.item(),
            adv_wav_d,
            adv_spec_d,
            feat.item(),
            sparse.item(),
            recon.item(),
            &cfg.losses,
        );
        debug_assert_eq!(report.total_g.to_bits(), total_g.item().to_bits());
        if !report.is_finite() {
            return Err(Error::NonFinite(format!("step {step}: {report:?}")));
        }
        tape_g.backward(total_g)?;
        self.g_params.collect_grads(&gp);
        self.opt_g.step(&mut self.g_params, lr)?;

        for store in [&mut self.g_params, &mut self.d_params] {
            store.round_to_f32();
            store.zero_grads();
        }
        self.opt_g.round_to_f32();
        self.opt_d.round_to_f32();
        self.step += 1;
        Ok(StepTrace {
            step,
            report,
            lr,
            warmup,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub telemetry: PathBuf,
    pub traces: Vec<StepTrace>,
}

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("step_{step:08}.srkt"))
}

pub const TELEMETRY_FILE: &str = "telemetry.csv";

/// Train until `config.steps`, optionally continuing from a checkpoint.
/// Telemetry rows go to `telemetry.csv` in the checkpoint directory (appended
/// when resuming).
pub fn train(config: &TrainConfig, resume: Option<&Path>) -> Result<TrainOutcome> {
    let mut trainer = match resume {
        Some(ckpt) => Trainer::resume(config.clone(), ckpt)?,
        None => Trainer::new(config.clone())?,
    };
    let dir = config.checkpoint_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let telemetry = dir.join(TELEMETRY_FILE);
    let fresh = resume.is_none() || !telemetry.exists();
    let mut csv = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(&telemetry)
        .map_err(|e| Error::io(&telemetry, e))?;
    if fresh {
        writeln!(csv, "{TELEMETRY_HEADER}").map_err(|e| Error::io(&telemetry, e))?;
    }

    let mut traces = Vec::new();
    let mut last_saved = None;
    while trainer.step() < config.steps {
        let trace = trainer.train_step()?;
        writeln!(csv, "{}", trace.to_csv_row()).map_err(|e| Error::io(&telemetry, e))?;
        let r = &trace.report;
        debug!("step {} took {:.0} ms", trace.step, trace.wall_ms);
        if trace.step % 10 == 0 || trainer.step() == config.steps {
            info!(
                "step {:>6}  G {:.4}  D {:.4}  recon {:.4}  sparse {:.4}  lr {:.3e}  ({:.0} ms)",
                trace.step, r.total_g, r.total_d, r.wav_recon, r.sparse, trace.lr, trace.wall_ms
            );
        }
        traces.push(trace);
        if config.checkpoint_every > 0 && trainer.step() % config.checkpoint_every == 0 {
            let path = checkpoint_path(&dir, trainer.step());
            trainer.save_checkpoint(&path)?;
            last_saved = Some(path);
        }
    }
    let final_checkpoint = checkpoint_path(&dir, trainer.step());
    if last_saved.as_ref() != Some(&final_checkpoint) {
        trainer.save_checkpoint(&final_checkpoint)?;
    }
    Ok(TrainOutcome {
        final_checkpoint,
        telemetry,
        traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LOSS_CSV_HEADER;

    #[test]
    fn telemetry_header_extends_loss_columns() {
        assert!(TELEMETRY_HEADER.starts_with(LOSS_CSV_HEADER));
    }
}
