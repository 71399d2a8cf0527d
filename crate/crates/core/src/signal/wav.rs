use std::io::{Cursor, Read, Seek};
use std::path::Path;

use hound::{SampleFormat as HoundFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::error::{Error, Result};

const PCM16_SCALE: f64 = 32768.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

/// Outcome of a write. `clipped` counts samples clamped to the PCM16 range.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteReport {
    pub clipped: usize,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    decode_from(std::io::BufReader::new(file))
}

/// Decode an in-memory RIFF/WAVE image. Multichannel input is averaged to mono.
pub fn decode_wav(bytes: &[u8]) -> Result<Waveform> {
    decode_from(Cursor::new(bytes))
}

fn decode_from<R: Read + Seek>(reader: R) -> Result<Waveform> {
    let reader = WavReader::new(reader).map_err(hound_err)?;
    let spec = reader.spec();
    if spec.channels == 0 {
        return Err(Error::Wav("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (HoundFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / PCM16_SCALE))
            .collect::<std::result::Result<_, _>>()
            .map_err(hound_err)?,
        (HoundFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(hound_err)?,
        (fmt, bits) => {
            return Err(Error::UnsupportedCodec(format!(
                "{bits}-bit {fmt:?} (expected 16-bit PCM or 32-bit float)"
            )))
        }
    };
    let channels = spec.channels as usize;
    if interleaved.len() < channels {
        return Err(Error::EmptyWav);
    }
    let samples: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Waveform::new(samples, spec.sample_rate)
}

fn hound_err(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Wav(io.to_string()),
        hound::Error::Unsupported => Error::UnsupportedCodec("unsupported wav feature".into()),
        other => Error::Wav(other.to_string()),
    }
}

/// Write a mono WAV file. PCM16 output is clamped to `[-1, 1 - 1/32768]`;
/// clamped samples are counted in the report and logged, never wrapped.
pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform, format: SampleFormat) -> Result<WriteReport> {
    let path = path.as_ref();
    let bytes = encode_wav(wave, format)?;
    std::fs::write(path, &bytes.0).map_err(|e| Error::io(path, e))?;
    if bytes.1.clipped > 0 {
        log::warn!(
            "{}: {} sample(s) clipped to pcm16 full scale",
            path.display(),
            bytes.1.clipped
        );
    }
    Ok(bytes.1)
}

pub fn encode_wav(wave: &Waveform, format: SampleFormat) -> Result<(Vec<u8>, WriteReport)> {
    let (bits, sample_format) = match format {
        SampleFormat::Pcm16 => (16, HoundFormat::Int),
        SampleFormat::Float32 => (32, HoundFormat::Float),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate(),
        bits_per_sample: bits,
        sample_format,
    };
    let mut cursor = Cursor::new(Vec::new());
    let mut report = WriteReport::default();
    {
        let mut writer = WavWriter::new(&mut cursor, spec).map_err(hound_err)?;
        for &s in wave.samples() {
            match format {
                SampleFormat::Pcm16 => {
                    let q = (s * PCM16_SCALE).round();
                    let clamped = q.clamp(-PCM16_SCALE, PCM16_SCALE - 1.0);
                    if clamped != q {
                        report.clipped += 1;
                    }
                    writer.write_sample(clamped as i16).map_err(hound_err)?;
                }
                SampleFormat::Float32 => writer.write_sample(s as f32).map_err(hound_err)?,
            }
        }
        writer.finalize().map_err(hound_err)?;
    }
    Ok((cursor.into_inner(), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pcm16_bytes(channels: u16, values: &[i16]) -> Vec<u8> {
        let spec = WavSpec {
            channels,
            sample_rate: 48_000,
            bits_per_sample: 16,
            sample_format: HoundFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::new());
        let mut w = WavWriter::new(&mut cursor, spec).unwrap();
        for &v in values {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        cursor.into_inner()
    }

    #[test]
    fn pcm16_full_scale_and_zero() {
        let w = decode_wav(&pcm16_bytes(1, &[32767])).unwrap();
        assert_eq!(w.samples(), &[32767.0 / 32768.0]);
        let w = decode_wav(&pcm16_bytes(1, &[0])).unwrap();
        assert_eq!(w.samples(), &[0.0]);
        assert_eq!(w.sample_rate(), 48_000);
    }

    #[test]
    fn stereo_is_averaged() {
        let spec = WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 32,
            sample_format: HoundFormat::Float,
        };
        let mut cursor = Cursor::new(Vec::new());
        let mut w = WavWriter::new(&mut cursor, spec).unwrap();
        for _ in 0..3 {
            w.write_sample(1.0f32).unwrap();
            w.write_sample(0.0f32).unwrap();
        }
        w.finalize().unwrap();
        let wave = decode_wav(&cursor.into_inner()).unwrap();
        assert_eq!(wave.samples(), &[0.5, 0.5, 0.5]);
        assert_eq!(wave.sample_rate(), 16_000);
    }

    #[test]
    fn float32_roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<f64> = (0..480).map(|_| rng.gen_range(-1.0f32..1.0) as f64).collect();
        let wave = Waveform::new(samples, 48_000).unwrap();
        let (bytes, report) = encode_wav(&wave, SampleFormat::Float32).unwrap();
        assert_eq!(report.clipped, 0);
        assert_eq!(decode_wav(&bytes).unwrap(), wave);
    }

    #[test]
    fn pcm16_roundtrip_within_quantization() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples: Vec<f64> = (0..2000).map(|_| rng.gen_range(-1.0..0.999)).collect();
        let wave = Waveform::new(samples, 48_000).unwrap();
        let (bytes, _) = encode_wav(&wave, SampleFormat::Pcm16).unwrap();
        let back = decode_wav(&bytes).unwrap();
        let max_err = wave
            .samples()
            .iter()
            .zip(back.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err <= 1.0 / 32768.0, "{max_err}");
    }

    #[test]
    fn pcm16_clamps_over_range() {
        let wave = Waveform::new(vec![2.0, -2.0, 0.25], 48_000).unwrap();
        let (bytes, report) = encode_wav(&wave, SampleFormat::Pcm16).unwrap();
        assert_eq!(report.clipped, 2);
        let back = decode_wav(&bytes).unwrap();
        assert_eq!(back.samples(), &[32767.0 / 32768.0, -1.0, 0.25]);
    }

    #[test]
    fn rejects_garbage_and_empty() {
        assert!(matches!(decode_wav(b"not a wav file"), Err(Error::Wav(_))));
        assert!(matches!(decode_wav(&pcm16_bytes(1, &[])), Err(Error::EmptyWav)));
    }

    #[test]
    fn rejects_unsupported_bit_depth() {
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8_000,
            bits_per_sample: 24,
            sample_format: HoundFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::new());
        let mut w = WavWriter::new(&mut cursor, spec).unwrap();
        w.write_sample(5i32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(
            decode_wav(&cursor.into_inner()),
            Err(Error::UnsupportedCodec(_))
        ));
    }

    #[test]
    fn file_roundtrip_and_unwritable_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let wave = Waveform::new(vec![0.5, -0.25], 24_000).unwrap();
        write_wav(&path, &wave, SampleFormat::Float32).unwrap();
        assert_eq!(read_wav(&path).unwrap(), wave);
        let bad = dir.path().join("missing").join("a.wav");
        assert!(matches!(
            write_wav(bad, &wave, SampleFormat::Pcm16),
            Err(Error::Io { .. })
        ));
    }
}
