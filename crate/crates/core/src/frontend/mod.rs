//! Audio front end: 16 kHz PCM to stacked, downsampled log-Mel frames.
//!
//! [`log_mel`] produces 80-dim frames every 10 ms from 25 ms Hann windows;
//! [`stack_downsample`] concatenates each frame with its three left
//! neighbours and keeps every third one, giving 320-dim frames at 30 ms.

mod featfile;
mod mel;
mod synth;
mod wav;

pub use featfile::{read_features, write_features};
pub use mel::{hz_to_mel, log_mel, mel_filterbank, mel_to_hz, MelConfig};
pub use synth::{SynthConfig, SynthTask, DIGIT_WORDS};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
pub const N_MELS: usize = 80;
pub const STACK: usize = 4;
pub const STACKED_DIM: usize = N_MELS * STACK;

/// Mono PCM audio scaled to [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Input("empty waveform".into()));
        }
        Ok(Waveform { samples, sample_rate })
    }
}

/// `[T × D]` feature matrix with its frame shift.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    frames: Vec<f64>,
    num_frames: usize,
    dim: usize,
    pub frame_shift_ms: u32,
}

impl FeatureSequence {
    pub fn new(frames: Vec<f64>, dim: usize, frame_shift_ms: u32) -> Result<Self> {
        if dim == 0 || frames.is_empty() || frames.len() % dim != 0 {
            return Err(Error::Dimension(format!(
                "{} values do not form frames of dim {dim}",
                frames.len()
            )));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature sequence"));
        }
        Ok(FeatureSequence { num_frames: frames.len() / dim, frames, dim, frame_shift_ms })
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.frames[t * self.dim..(t + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.frames
    }

    pub fn to_tensor(&self) -> crate::autograd::Tensor {
        crate::autograd::Tensor::matrix(self.num_frames, self.dim, self.frames.clone())
            .expect("feature sequence is a valid matrix")
    }
}

/// Stack each frame with its three predecessors (zero-padded at the start)
/// and keep frames 0, 3, 6, …
pub fn stack_downsample(f: &FeatureSequence) -> FeatureSequence {
    let t = f.num_frames();
    let d = f.dim();
    let out_len = t.div_ceil(3);
    let mut out = Vec::with_capacity(out_len * d * STACK);
    for j in 0..out_len {
        let center = 3 * j;
        for k in 0..STACK {
            match (center + k).checked_sub(STACK - 1) {
                Some(src) => out.extend_from_slice(f.frame(src)),
                None => out.extend(std::iter::repeat_n(0.0, d)),
            }
        }
    }
    FeatureSequence::new(out, d * STACK, f.frame_shift_ms * 3).expect("stacking preserves validity")
}

/// Full pipeline: waveform to `[ceil(T/3) × 320]` features at 30 ms.
pub fn featurize(w: &Waveform) -> Result<FeatureSequence> {
    Ok(stack_downsample(&log_mel(w, &MelConfig::default())?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(t: usize, d: usize) -> FeatureSequence {
        FeatureSequence::new((0..t * d).map(|v| v as f64 + 1.0).collect(), d, 10).unwrap()
    }

    #[test]
    fn nine_frames_give_three() {
        let out = stack_downsample(&ramp(9, 80));
        assert_eq!(out.num_frames(), 3);
        assert_eq!(out.dim(), 320);
        assert_eq!(out.frame_shift_ms, 30);
    }

    #[test]
    fn single_frame_is_left_padded() {
        let f = ramp(1, 80);
        let out = stack_downsample(&f);
        assert_eq!(out.num_frames(), 1);
        assert!(out.frame(0)[..240].iter().all(|&v| v == 0.0));
        assert_eq!(&out.frame(0)[240..], f.frame(0));
    }

    #[test]
    fn second_output_holds_frames_zero_to_three() {
        let f = ramp(7, 80);
        let out = stack_downsample(&f);
        let expected: Vec<f64> = (0..4).flat_map(|k| f.frame(k).to_vec()).collect();
        assert_eq!(out.frame(1), expected.as_slice());
    }

    #[test]
    fn output_entries_are_pad_or_copied() {
        for t in 1..20 {
            let f = ramp(t, 3);
            let out = stack_downsample(&f);
            assert_eq!(out.num_frames(), t.div_ceil(3));
            for &v in out.as_slice() {
                assert!(v == 0.0 || f.as_slice().contains(&v));
            }
        }
    }

    #[test]
    fn rejects_ragged_frames() {
        assert!(FeatureSequence::new(vec![1.0; 5], 2, 10).is_err());
        assert!(FeatureSequence::new(vec![f64::NAN; 2], 2, 10).is_err());
    }
}
