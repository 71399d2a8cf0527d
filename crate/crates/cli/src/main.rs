use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use srkit_core::bands;
use srkit_core::degrade::{self, DegradeSpec, RateGrid};
use srkit_core::mdct::{self, KbdWindow, DEFAULT_GAIN};
use srkit_core::metrics;
use srkit_core::signal::{read_wav, synth_corpus, write_wav, SampleFormat};
use srkit_core::train::{self, EvalModel, Enhancer, TrainConfig};

/// MDCT-domain speech super-resolution toolkit.
#[derive(Parser)]
#[command(name = "srkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic 48 kHz speech-like corpus.
    SynthCorpus {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report the MDCT/companding round-trip error of a file.
    MdctRoundtrip {
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_GAIN)]
        gain: f64,
    },
    /// Band-limit a 48 kHz file to a lower rate and bring it back to 48 kHz.
    Degrade {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, required_unless_present = "random")]
        rate: Option<u32>,
        /// Draw the rate from the default training grid.
        #[arg(long)]
        random: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the high-band discriminator layout.
    Bands {
        #[arg(long)]
        lr: u32,
        #[arg(long, default_value_t = 48_000)]
        hr: u32,
        #[arg(long, default_value_t = 512)]
        k: usize,
        #[arg(long, default_value_t = bands::DEFAULT_NUM_BANDS)]
        num: usize,
        #[arg(long, default_value_t = bands::DEFAULT_MIN_BINS)]
        min_bins: usize,
    },
    /// Log-spectral distance between two files.
    Lsd { reference: PathBuf, estimate: PathBuf },
    /// Per-file and mean LSD over matching files of two directories.
    LsdCorpus {
        #[arg(long)]
        ref_dir: PathBuf,
        #[arg(long)]
        est_dir: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train the generator and discriminators.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Upsample a file to 48 kHz with a trained generator.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// LSD table per input rate over a directory of 48 kHz references.
    Eval {
        #[arg(long, required_unless_present = "passthrough")]
        ckpt: Option<PathBuf>,
        /// Score the degraded input itself instead of a model.
        #[arg(long, conflicts_with = "ckpt")]
        passthrough: bool,
        #[arg(long)]
        ref_dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "4000,8000,16000,24000")]
        rates: Vec<u32>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::SynthCorpus { n, seed, out } => {
            let files = synth_corpus(n, seed, &out)?;
            println!("wrote {} files to {}", files.len(), out.display());
        }
        Command::MdctRoundtrip { input, gain } => {
            let wave = read_wav(&input)?;
            let window = KbdWindow::default();
            let spec = mdct::mdct(&wave, &window)?;
            let back = mdct::imdct(&mdct::expand(&mdct::compress(&spec, gain)?, gain)?, &window)?;
            let err = wave
                .samples()
                .iter()
                .zip(back.samples())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            println!("frames {}  max-abs round-trip error {err:.3e}", spec.frames());
        }
        Command::Degrade {
            input,
            output,
            rate,
            random,
            seed,
        } => {
            let wave = read_wav(&input)?;
            let (out, r) = if random {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                degrade::random_degrade(&wave, &RateGrid::default(), &mut rng)?
            } else {
                let r = rate.context("--rate is required without --random")?;
                (degrade::lowpass_resample(&wave, &DegradeSpec::new(r)?)?, r)
            };
            write_wav(&output, &out, SampleFormat::Float32)?;
            println!("degraded to {r} Hz -> {}", output.display());
        }
        Command::Bands {
            lr,
            hr,
            k,
            num,
            min_bins,
        } => {
            let layout = bands::layout(lr, hr, k, num, min_bins)?;
            print!("{}", layout.to_table());
            println!();
            print!("{}", layout.to_csv());
        }
        Command::Lsd { reference, estimate } => {
            println!("{:.4}", metrics::lsd_files(&reference, &estimate)?);
        }
        Command::LsdCorpus { ref_dir, est_dir, csv } => {
            let result = metrics::lsd_corpus(&ref_dir, &est_dir)?;
            let text = result.to_csv();
            match csv {
                Some(path) => {
                    std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
                    println!("mean LSD {:.4} over {} files", result.mean, result.per_file.len());
                }
                None => print!("{text}"),
            }
        }
        Command::Train { config, resume } => {
            let cfg = TrainConfig::load(&config)?;
            let outcome = train::train(&cfg, resume.as_deref())?;
            println!(
                "trained to step {}; checkpoint {}; telemetry {}",
                cfg.steps,
                outcome.final_checkpoint.display(),
                outcome.telemetry.display()
            );
        }
        Command::Infer { ckpt, input, output } => {
            let enhancer = Enhancer::from_checkpoint(&ckpt)?;
            let out = train::infer(&enhancer, &input, &output)?;
            println!("wrote {} samples at 48 kHz to {}", out.len(), output.display());
        }
        Command::Eval {
            ckpt,
            passthrough,
            ref_dir,
            rates,
            csv,
        } => {
            let model = match (passthrough, ckpt) {
                (true, _) => EvalModel::Passthrough,
                (false, Some(path)) => EvalModel::Enhancer(Box::new(Enhancer::from_checkpoint(&path)?)),
                (false, None) => bail!("either --ckpt or --passthrough is required"),
            };
            let table = train::evaluate(&model, &ref_dir, &rates)?;
            print!("{}", table.to_table());
            if let Some(path) = csv {
                std::fs::write(&path, table.to_csv()).with_context(|| format!("writing {}", path.display()))?;
            }
        }
    }
    Ok(())
}
