use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{FeatureSequence, Waveform, N_MELS, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Log-Mel analysis parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MelConfig {
    pub n_mels: usize,
    pub win_ms: u32,
    pub hop_ms: u32,
    pub n_fft: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig { n_mels: N_MELS, win_ms: 25, hop_ms: 10, n_fft: 512, f_min: 125.0, f_max: 7600.0, log_floor: 1e-10 }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    1127.0 * (1.0 + hz / 700.0).ln()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * ((mel / 1127.0).exp() - 1.0)
}

/// Triangular filters on the HTK mel scale, `[n_mels][n_fft/2 + 1]`.
///
/// Also returns each filter's center frequency in Hz.
pub fn mel_filterbank(cfg: &MelConfig, sample_rate: u32) -> (Vec<Vec<f64>>, Vec<f64>) {
    let bins = cfg.n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / cfg.n_fft as f64;
    let filters = (0..cfg.n_mels)
        .map(|m| {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= left || f >= right {
                        0.0
                    } else if f <= center {
                        (f - left) / (center - left)
                    } else {
                        (right - f) / (right - center)
                    }
                })
                .collect()
        })
        .collect();
    (filters, edges[1..=cfg.n_mels].to_vec())
}

/// Log-Mel spectrogram with `T = 1 + floor((N − win) / hop)` frames.
pub fn log_mel(w: &Waveform, cfg: &MelConfig) -> Result<FeatureSequence> {
    if w.sample_rate != SAMPLE_RATE {
        return Err(Error::Input(format!("expected {SAMPLE_RATE} Hz audio, got {}", w.sample_rate)));
    }
    let win = (w.sample_rate * cfg.win_ms / 1000) as usize;
    let hop = (w.sample_rate * cfg.hop_ms / 1000) as usize;
    if win > cfg.n_fft {
        return Err(Error::Config(format!("window {win} exceeds FFT size {}", cfg.n_fft)));
    }
    if w.samples.len() < win {
        return Err(Error::Input(format!(
            "audio has {} samples, need at least one {win}-sample window",
            w.samples.len()
        )));
    }
    let frames = 1 + (w.samples.len() - win) / hop;
    let window: Vec<f64> = (0..win).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / win as f64).cos()).collect();
    let (filters, _) = mel_filterbank(cfg, w.sample_rate);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.n_fft);
    let bins = cfg.n_fft / 2 + 1;

    let mut out = Vec::with_capacity(frames * cfg.n_mels);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    let mut power = vec![0.0; bins];
    for t in 0..frames {
        let start = t * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            let v = if i < win { w.samples[start + i] * window[i] } else { 0.0 };
            *slot = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        for f in &filters {
            let e: f64 = f.iter().zip(&power).map(|(a, b)| a * b).sum();
            out.push(e.max(cfg.log_floor).ln());
        }
    }
    FeatureSequence::new(out, cfg.n_mels, cfg.hop_ms)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(hz: f64, n: usize) -> Waveform {
        let s = (0..n).map(|i| 0.5 * (2.0 * PI * hz * i as f64 / 16000.0).sin()).collect();
        Waveform::new(s, 16000).unwrap()
    }

    #[test]
    fn one_second_gives_98_frames() {
        let f = log_mel(&tone(440.0, 16000), &MelConfig::default()).unwrap();
        // 1 + floor((16000 - 400) / 160)
        assert_eq!(f.num_frames(), 1 + (16000 - 400) / 160);
        assert_eq!(f.num_frames(), 98);
        assert_eq!(f.dim(), 80);
    }

    #[test]
    fn silence_is_the_log_floor() {
        let w = Waveform::new(vec![0.0; 4000], 16000).unwrap();
        let f = log_mel(&w, &MelConfig::default()).unwrap();
        let floor = 1e-10f64.ln();
        assert!(f.as_slice().iter().all(|&v| v == floor));
    }

    #[test]
    fn tone_peaks_at_nearest_filter_center() {
        let cfg = MelConfig::default();
        let (_, centers) = mel_filterbank(&cfg, 16000);
        let nearest = centers
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 1000.0).abs().total_cmp(&(b.1 - 1000.0).abs()))
            .unwrap()
            .0;
        let f = log_mel(&tone(1000.0, 8000), &cfg).unwrap();
        for t in 0..f.num_frames() {
            let row = f.frame(t);
            let argmax = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(argmax, nearest, "frame {t}");
        }
    }

    #[test]
    fn input_errors() {
        assert!(log_mel(&Waveform::new(vec![0.0; 399], 16000).unwrap(), &MelConfig::default()).is_err());
        assert!(log_mel(&Waveform::new(vec![0.0; 800], 8000).unwrap(), &MelConfig::default()).is_err());
        assert!(Waveform::new(vec![], 16000).is_err());
    }

    #[test]
    fn deterministic() {
        let w = tone(300.0, 3000);
        assert_eq!(log_mel(&w, &MelConfig::default()).unwrap(), log_mel(&w, &MelConfig::default()).unwrap());
    }
}
