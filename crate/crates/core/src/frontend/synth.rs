use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{FeatureSequence, STACKED_DIM};
use crate::error::{Error, Result};

pub const DIGIT_WORDS: [&str; 10] = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"];

/// Shape of the synthetic spoken-word task.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Feature dimension of each emitted frame.
    pub dim: usize,
    /// Frames emitted per word (at the 30 ms stacked rate).
    pub frames_per_word: usize,
    /// Silence frames before the first and after the last word.
    pub edge_frames: usize,
    pub noise_std: f64,
    /// Seed for the word templates; fixed per task, independent of utterance seeds.
    pub template_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { dim: STACKED_DIM, frames_per_word: 3, edge_frames: 1, noise_std: 0.5, template_seed: 17 }
    }
}

/// Closed-vocabulary generator: each word is a fixed block of frames drawn
/// from a word-specific Gaussian template plus white noise.
#[derive(Clone, Debug)]
pub struct SynthTask {
    cfg: SynthConfig,
    words: Vec<String>,
    templates: Vec<Vec<f64>>,
}

impl SynthTask {
    pub fn new(words: &[&str], cfg: SynthConfig) -> Result<Self> {
        if words.is_empty() || cfg.dim == 0 || cfg.frames_per_word == 0 {
            return Err(Error::Config("synthetic task needs words, dim > 0 and frames_per_word > 0".into()));
        }
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let templates = (0..words.len())
            .map(|w| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.template_seed.wrapping_mul(1_000_003).wrapping_add(w as u64));
                (0..cfg.frames_per_word * cfg.dim).map(|_| normal.sample(&mut rng)).collect()
            })
            .collect();
        Ok(SynthTask { cfg, words: words.iter().map(|s| s.to_string()).collect(), templates })
    }

    /// Spoken-digit task over "zero" … "nine".
    pub fn digits(cfg: SynthConfig) -> Self {
        Self::new(&DIGIT_WORDS, cfg).expect("digit task config is valid")
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    /// Render `labels` into features; identical `(labels, seed)` give
    /// bit-identical output. Returns the features and the space-joined transcript.
    pub fn synth_utterance<S: AsRef<str>>(&self, labels: &[S], seed: u64) -> Result<(FeatureSequence, String)> {
        let ids = labels
            .iter()
            .map(|l| {
                self.words
                    .iter()
                    .position(|w| w == l.as_ref())
                    .ok_or_else(|| Error::Input(format!("unknown synthetic label {:?}", l.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        let d = self.cfg.dim;
        let n_frames = 2 * self.cfg.edge_frames + ids.len() * self.cfg.frames_per_word;
        let noise = Normal::new(0.0, self.cfg.noise_std.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(n_frames * d);
        data.extend((0..self.cfg.edge_frames * d).map(|_| noise.sample(&mut rng)));
        for &w in &ids {
            data.extend(self.templates[w].iter().map(|&m| m + noise.sample(&mut rng)));
        }
        data.extend((0..self.cfg.edge_frames * d).map(|_| noise.sample(&mut rng)));
        let transcript = labels.iter().map(|l| l.as_ref()).collect::<Vec<_>>().join(" ");
        Ok((FeatureSequence::new(data, d, 30)?, transcript))
    }

    /// Draw a random label sequence of `min_words..=max_words` words.
    pub fn random_labels(&self, rng: &mut impl Rng, min_words: usize, max_words: usize) -> Vec<String> {
        let n = rng.gen_range(min_words..=max_words);
        (0..n).map(|_| self.words[rng.gen_range(0..self.words.len())].clone()).collect()
    }
}
