//! Waveforms, WAV I/O, half-overlap framing and the synthetic speech-like
//! corpus used for desk-scale experiments.

mod framing;
mod synth;
mod wav;
mod waveform;

pub use framing::{frame_signal, overlap_add, FrameGrid, Frames};
pub use synth::{synth_corpus, synth_utterance, SynthParams};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav, SampleFormat, WriteReport};
pub use waveform::Waveform;
