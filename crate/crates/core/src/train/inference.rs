use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use super::data::to_hr_rate;
use super::trainer::GEN_PREFIX;
use crate::autograd::{read_checkpoint, ParamStore, Tape, Tensor};
use crate::degrade::{lowpass_resample, DegradeSpec, HR_RATE};
use crate::error::{Error, Result};
use crate::mdct::{compress_value, expand_value, KbdWindow, MdctPlan, DEFAULT_GAIN};
use crate::metrics::{lsd_waves, wav_files};
use crate::models::{Generator, GeneratorConfig};
use crate::signal::{read_wav, write_wav, SampleFormat, Waveform};

const CONFIG_RECORD: &str = "meta/generator_config";

/// The generator configuration as a checkpoint record of UTF-8 bytes.
pub(crate) fn config_record(cfg: &GeneratorConfig) -> Result<(String, Tensor)> {
    let json = serde_json::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
    let bytes = json.bytes().map(f64::from).collect();
    Ok((CONFIG_RECORD.to_string(), Tensor::from_vec(bytes)))
}

pub(crate) fn config_from_record(records: &[(String, Tensor)]) -> Result<GeneratorConfig> {
    let t = records
        .iter()
        .find(|(n, _)| n == CONFIG_RECORD)
        .map(|(_, t)| t)
        .ok_or_else(|| Error::Checkpoint(format!("missing {CONFIG_RECORD}")))?;
    let bytes = t
        .data()
        .iter()
        .map(|&v| {
            if v.fract() == 0.0 && (0.0..=255.0).contains(&v) {
                Ok(v as u8)
            } else {
                Err(Error::Checkpoint("generator config record is not byte data".into()))
            }
        })
        .collect::<Result<Vec<u8>>>()?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Checkpoint("generator config is not UTF-8".into()))?;
    GeneratorConfig::from_json(&text)
}

/// A trained generator wrapped with the MDCT analysis/synthesis around it.
#[derive(Debug, Clone)]
pub struct Enhancer {
    generator: Generator,
    params: ParamStore,
    plan: Arc<MdctPlan>,
}

impl Enhancer {
    pub fn new(generator: Generator, params: ParamStore) -> Self {
        Self {
            generator,
            params,
            plan: Arc::new(MdctPlan::new(&KbdWindow::default())),
        }
    }

    pub fn from_records(records: &[(String, Tensor)]) -> Result<Self> {
        let cfg = config_from_record(records)?;
        let mut params = ParamStore::new();
        let generator = Generator::new(cfg, &mut params, GEN_PREFIX, 0)?;
        params.load_records(records, "")?;
        Ok(Self::new(generator, params))
    }

    pub fn from_checkpoint(path: &Path) -> Result<Self> {
        Self::from_records(&read_checkpoint(path)?)
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    /// Run a 48 kHz waveform through analysis, the generator and synthesis.
    /// The output has the input's length.
    pub fn enhance(&self, wave: &Waveform) -> Result<Waveform> {
        if wave.sample_rate() != HR_RATE {
            return Err(Error::invalid(format!(
                "enhancement expects {HR_RATE} Hz input, got {}",
                wave.sample_rate()
            )));
        }
        if wave.is_empty() {
            return Err(Error::EmptyWav);
        }
        let (coeffs, frames) = self.plan.analyze(wave.samples());
        let s: Vec<f64> = coeffs.into_iter().map(|x| compress_value(x, DEFAULT_GAIN)).collect();
        let tape = Tape::new();
        let p = self.params.bind(&tape, false);
        let input = tape.constant(Tensor::new(vec![frames, self.plan.bins()], s)?);
        let out = self.generator.forward(&p, input)?.value();
        let coeffs: Vec<f64> = out
            .data()
            .iter()
            .map(|&v| expand_value(v.clamp(-Self::MAX_COMPANDED, Self::MAX_COMPANDED), DEFAULT_GAIN))
            .collect();
        Waveform::new(self.plan.synthesize(&coeffs, wave.len())?, HR_RATE)
    }

    /// Companded values beyond this expand far past any full-scale signal;
    /// clamping keeps a diverged model from producing infinities.
    const MAX_COMPANDED: f64 = 8.0;
}

/// Resample `input` to 48 kHz, enhance it and write a float WAV.
pub fn infer(enhancer: &Enhancer, input: &Path, output: &Path) -> Result<Waveform> {
    let wave = to_hr_rate(read_wav(input)?)?;
    let out = enhancer.enhance(&wave)?;
    write_wav(output, &out, SampleFormat::Float32)?;
    Ok(out)
}

/// What produces the estimate from a degraded 48 kHz signal.
#[derive(Debug, Clone)]
pub enum EvalModel {
    /// The degraded signal itself.
    Passthrough,
    Enhancer(Box<Enhancer>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub rate: u32,
    pub lsd: f64,
}

/// Mean LSD per input rate over a reference directory.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTable {
    pub rows: Vec<EvalRow>,
    pub files: usize,
}

impl EvalTable {
    pub fn average(&self) -> f64 {
        self.rows.iter().map(|r| r.lsd).sum::<f64>() / self.rows.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rate_hz,lsd_db\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:.4}\n", r.rate, r.lsd));
        }
        out.push_str(&format!("average,{:.4}\n", self.average()));
        out
    }

    pub fn to_table(&self) -> String {
        let mut head = String::from("|");
        let mut vals = String::from("|");
        for r in &self.rows {
            let label = format!(" {} kHz ", r.rate as f64 / 1000.0);
            vals.push_str(&format!("{:>w$.2} |", r.lsd, w = label.len() - 1));
            head.push_str(&label);
            head.push('|');
        }
        head.push_str(" Avg. |\n");
        vals.push_str(&format!("{:>5.2} |\n", self.average()));
        head + &vals
    }
}

/// Degrade every reference file to each rate, produce an estimate and
/// average the LSD per rate.
pub fn evaluate(model: &EvalModel, ref_dir: &Path, rates: &[u32]) -> Result<EvalTable> {
    let files = wav_files(ref_dir)?;
    if files.is_empty() {
        return Err(Error::invalid(format!("no .wav files in {}", ref_dir.display())));
    }
    if rates.is_empty() {
        return Err(Error::invalid("no evaluation rates given"));
    }
    let specs = rates.iter().map(|&r| DegradeSpec::new(r)).collect::<Result<Vec<_>>>()?;
    let per_file: Vec<Vec<f64>> = files
        .par_iter()
        .map(|path| {
            let reference = read_wav(path)?;
            if reference.sample_rate() != HR_RATE {
                return Err(Error::invalid(format!(
                    "{} is {} Hz; references must be {HR_RATE} Hz",
                    path.display(),
                    reference.sample_rate()
                )));
            }
            specs
                .iter()
                .map(|spec| {
                    let degraded = lowpass_resample(&reference, spec)?;
                    let estimate = match model {
                        EvalModel::Passthrough => degraded,
                        EvalModel::Enhancer(e) => e.enhance(&degraded)?,
                    };
                    lsd_waves(&reference, &estimate)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows = rates
        .iter()
        .enumerate()
        .map(|(i, &rate)| EvalRow {
            rate,
            lsd: per_file.iter().map(|v| v[i]).sum::<f64>() / per_file.len() as f64,
        })
        .collect();
    Ok(EvalTable {
        rows,
        files: files.len(),
    })
}
