use crate::error::{Error, Result};

/// Half-overlap frame geometry. The signal is zero-padded by `hop` samples in
/// front and by `hop` plus the remainder to a whole hop at the back, so every
/// original sample lies under exactly two frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameGrid {
    frame_len: usize,
    hop: usize,
}

impl FrameGrid {
    pub fn new(frame_len: usize) -> Result<Self> {
        if frame_len < 2 || frame_len % 2 != 0 {
            return Err(Error::invalid(format!(
                "frame length must be even and >= 2, got {frame_len}"
            )));
        }
        Ok(Self {
            frame_len,
            hop: frame_len / 2,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    /// Frames needed to cover `signal_len` samples twice: `ceil(len / H) + 1`.
    pub fn num_frames(&self, signal_len: usize) -> usize {
        signal_len.div_ceil(self.hop).max(1) + 1
    }

    pub fn padded_len(&self, signal_len: usize) -> usize {
        (self.num_frames(signal_len) + 1) * self.hop
    }
}

impl Default for FrameGrid {
    fn default() -> Self {
        Self {
            frame_len: 1024,
            hop: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    frames: Vec<Vec<f64>>,
    signal_len: usize,
}

impl Frames {
    pub fn new(frames: Vec<Vec<f64>>, signal_len: usize) -> Self {
        Self { frames, signal_len }
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }
}

pub fn frame_signal(samples: &[f64], grid: &FrameGrid) -> Frames {
    let (l, h) = (grid.frame_len, grid.hop);
    let n = grid.num_frames(samples.len());
    let mut padded = vec![0.0; grid.padded_len(samples.len())];
    padded[h..h + samples.len()].copy_from_slice(samples);
    let frames = (0..n).map(|t| padded[t * h..t * h + l].to_vec()).collect();
    Frames::new(frames, samples.len())
}

/// Sum frames at hop spacing and trim the front padding. The output has
/// `frames.signal_len()` samples (or fewer if the frames cannot cover it).
pub fn overlap_add(frames: &Frames, grid: &FrameGrid) -> Result<Vec<f64>> {
    let (l, h) = (grid.frame_len, grid.hop);
    if let Some((i, f)) = frames.frames.iter().enumerate().find(|(_, f)| f.len() != l) {
        return Err(Error::shape(format!(
            "frame {i} has length {}, expected {l}",
            f.len()
        )));
    }
    let total = (frames.len() + 1) * h;
    let mut out = vec![0.0; total.max(h)];
    for (t, frame) in frames.frames.iter().enumerate() {
        for (o, v) in out[t * h..t * h + l].iter_mut().zip(frame) {
            *o += v;
        }
    }
    let end = (h + frames.signal_len).min(out.len());
    Ok(out[h.min(end)..end].to_vec())
}
