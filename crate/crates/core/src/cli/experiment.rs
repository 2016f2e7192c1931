//! Synthetic spoken-digit task and the E1–E8 experiment ladder.

use std::time::Instant;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoding::{decode_batch, BeamConfig, WerBreakdown};
use crate::error::{Error, Result};
use crate::frontend::{SynthConfig, SynthTask};
use crate::lm::{default_grid, rescore, train_ngram, tune_weights, Candidate, RescoreWeights};
use crate::model::{Las, ModelConfig};
use crate::training::{evaluate, TrainConfig, Trainer, Utterance};
use crate::wordpiece::{grapheme_vocab, train_wpm, WordpieceVocab};

use super::manifest::{Manifest, ManifestRecord, SynthSpec};

/// Output units of the speller.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Grapheme,
    Wordpiece,
}

/// Shape of the toy corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    /// Text-only sentences for the n-gram LM.
    pub n_lm_text: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Wordpiece inventory size (ignored for grapheme units).
    pub vocab_size: usize,
    pub lm_order: usize,
    /// Larger values make the word-to-word grammar more predictable.
    pub grammar_sharpness: f64,
    pub synth: SynthConfig,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            n_train: 2000,
            n_dev: 200,
            n_test: 200,
            n_lm_text: 5000,
            min_words: 1,
            max_words: 4,
            vocab_size: 60,
            lm_order: 3,
            grammar_sharpness: 2.0,
            synth: SynthConfig::default(),
            seed: 7,
        }
    }
}

/// Splits of the toy task plus the vocabulary and LM text.
#[derive(Clone, Debug)]
pub struct ToyData {
    pub vocab: WordpieceVocab,
    pub train: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    pub test: Vec<Utterance>,
    pub lm_text: Vec<String>,
}

/// Word sequences from a seeded first-order Markov grammar over the task words.
pub struct Grammar {
    start: WeightedIndex<f64>,
    next: Vec<WeightedIndex<f64>>,
}

impl Grammar {
    pub fn new(words: usize, sharpness: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut row = || -> Result<WeightedIndex<f64>> {
            let w: Vec<f64> = (0..words).map(|_| (sharpness * rng.gen::<f64>() * 3.0).exp()).collect();
            WeightedIndex::new(w).map_err(|e| Error::Config(e.to_string()))
        };
        let start = row()?;
        let next = (0..words).map(|_| row()).collect::<Result<_>>()?;
        Ok(Grammar { start, next })
    }

    pub fn sample(&self, rng: &mut impl Rng, len: usize) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::with_capacity(len);
        for i in 0..len {
            let w: usize = if i == 0 { self.start.sample(rng) } else { self.next[out[i - 1]].sample(rng) };
            out.push(w);
        }
        out
    }
}

fn labels(task: &SynthTask, grammar: &Grammar, rng: &mut ChaCha8Rng, cfg: &ToyConfig) -> Vec<String> {
    let n = rng.gen_range(cfg.min_words..=cfg.max_words);
    grammar.sample(rng, n).into_iter().map(|i| task.words()[i].clone()).collect()
}

/// Manifest records for each split plus text-only LM sentences.
#[derive(Clone, Debug, PartialEq)]
pub struct ToySplits {
    pub train: Vec<ManifestRecord>,
    pub dev: Vec<ManifestRecord>,
    pub test: Vec<ManifestRecord>,
    pub lm_text: Vec<String>,
}

/// Draw the toy corpus as synthetic manifest records.
pub fn toy_splits(cfg: &ToyConfig) -> Result<ToySplits> {
    if cfg.min_words == 0 || cfg.max_words < cfg.min_words || cfg.n_train == 0 {
        return Err(Error::Config("toy task needs 1 ≤ min_words ≤ max_words and a training set".into()));
    }
    let task = SynthTask::digits(cfg.synth.clone());
    let grammar = Grammar::new(task.words().len(), cfg.grammar_sharpness, cfg.seed ^ 0x6772_616d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let split = |name: &str, n: usize, rng: &mut ChaCha8Rng| -> Vec<ManifestRecord> {
        (0..n)
            .map(|i| {
                let words = labels(&task, &grammar, rng, cfg);
                ManifestRecord {
                    utt_id: format!("{name}-{i:05}"),
                    audio: None,
                    transcript: words.join(" "),
                    synth: Some(SynthSpec { words, seed: rng.gen() }),
                }
            })
            .collect()
    };
    let train = split("train", cfg.n_train, &mut rng);
    let dev = split("dev", cfg.n_dev, &mut rng);
    let test = split("test", cfg.n_test, &mut rng);
    let lm_text = (0..cfg.n_lm_text).map(|_| labels(&task, &grammar, &mut rng, cfg).join(" ")).collect();
    Ok(ToySplits { train, dev, test, lm_text })
}

/// Output inventory for `units` trained on `texts`.
pub fn units_vocab<S: AsRef<str>>(units: Units, texts: &[S], wordpiece_size: usize) -> Result<WordpieceVocab> {
    match units {
        Units::Grapheme => grapheme_vocab(texts.iter().flat_map(|s| s.as_ref().chars()).filter(|c| !c.is_whitespace())),
        Units::Wordpiece => Ok(train_wpm(texts, wordpiece_size)?.vocab),
    }
}

/// Build the synthetic spoken-digit corpus with the requested units.
pub fn build_toy(cfg: &ToyConfig, units: Units) -> Result<ToyData> {
    let splits = toy_splits(cfg)?;
    let train_m = Manifest::new(splits.train, "")?;
    let vocab = units_vocab(units, &train_m.transcripts(), cfg.vocab_size)?;
    let render = |records: Vec<ManifestRecord>| Manifest::new(records, "")?.utterances(&vocab, &cfg.synth);
    Ok(ToyData {
        train: train_m.utterances(&vocab, &cfg.synth)?,
        dev: render(splits.dev)?,
        test: render(splits.test)?,
        lm_text: splits.lm_text,
        vocab,
    })
}

/// One rung of the ladder: units, network, optimizer and second pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub units: Units,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub use_lm: bool,
}

pub const PRESET_NAMES: [&str; 8] = ["E1", "E2", "E3", "E4", "E5", "E6", "E7", "E8"];

/// Cumulative presets: E1 grapheme baseline, E2 wordpieces, E3 multi-head
/// attention, E4 synchronous-training stabilizers, E5 scheduled sampling,
/// E6 label smoothing, E7 MWER fine-tuning, E8 LM rescoring.
pub fn preset(name: &str) -> Result<Preset> {
    let rung = PRESET_NAMES
        .iter()
        .position(|p| p.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::Config(format!("unknown preset {name:?}; expected one of {PRESET_NAMES:?}")))?
        + 1;
    let base_train = TrainConfig::default();
    let train = TrainConfig {
        replicas: if rung >= 4 { 2 } else { 1 },
        lr_ramp_steps: if rung >= 4 { base_train.lr_ramp_steps } else { 0 },
        use_grad_tracker: rung >= 4,
        ss_target_prob: if rung >= 5 { base_train.ss_target_prob } else { 0.0 },
        label_smoothing_eps: if rung >= 6 { base_train.label_smoothing_eps } else { 0.0 },
        mwer_steps: if rung >= 7 { 100 } else { 0 },
        ..base_train
    };
    let model = ModelConfig { attention_heads: if rung >= 3 { 4 } else { 1 }, ..ModelConfig::desk() };
    let description = [
        "grapheme",
        "wordpiece",
        "+ multi-head attention",
        "+ sync stabilizers",
        "+ scheduled sampling",
        "+ label smoothing",
        "+ MWER",
        "+ LM rescoring",
    ][rung - 1];
    Ok(Preset {
        name: PRESET_NAMES[rung - 1].to_string(),
        description: description.to_string(),
        units: if rung >= 2 { Units::Wordpiece } else { Units::Grapheme },
        model,
        train,
        use_lm: rung >= 8,
    })
}

/// Outcome of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub name: String,
    pub description: String,
    pub test_wer: WerBreakdown,
    pub weights: Option<RescoreWeights>,
    pub train: TrainStats,
}

/// Decode with the N-best of `beam`, then rerank with tuned LM weights.
pub fn lm_rescored_wer(model: &Las, data: &ToyData, toy: &ToyConfig, beam: &BeamConfig) -> Result<(WerBreakdown, RescoreWeights)> {
    let lm = train_ngram(&data.lm_text, toy.lm_order)?;
    let to_cands = |split: &[Utterance]| -> Result<Vec<Vec<Candidate>>> {
        let feats: Vec<_> = split.iter().map(|u| u.features.clone()).collect();
        Ok(decode_batch(model, &feats, beam)?
            .into_iter()
            .map(|n| {
                n.into_iter()
                    .map(|h| Candidate { text: data.vocab.detokenize(&h.tokens).text, tokens: h.tokens, log_prob: h.log_prob })
                    .collect()
            })
            .collect())
    };
    let dev = to_cands(&data.dev)?;
    let dev_refs: Vec<&str> = data.dev.iter().map(|u| u.transcript.as_str()).collect();
    let tuned = tune_weights(&dev, &dev_refs, &lm, &default_grid(), &default_grid())?;
    let mut wer = WerBreakdown::default();
    for (cands, u) in to_cands(&data.test)?.iter().zip(&data.test) {
        let best = rescore(cands, &lm, &tuned.weights);
        let hyp = best.first().map(|c| c.text.as_str()).unwrap_or("");
        wer.merge(&crate::decoding::sentence_wer(&u.transcript, hyp));
    }
    Ok((wer, tuned.weights))
}

/// Training summary for one preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub steps: u64,
    pub final_loss: f64,
    pub rejected_steps: u64,
    pub seconds: f64,
}

/// Train the preset's model on `data.train`.
pub fn train_preset(p: &Preset, data: &ToyData, seed: u64) -> Result<(Las, TrainStats)> {
    let model_cfg = ModelConfig { vocab_size: data.vocab.len(), ..p.model.clone() };
    let train_cfg = TrainConfig { seed, ..p.train.clone() };
    let start = Instant::now();
    let mut trainer = Trainer::new(Las::new(model_cfg, seed)?, train_cfg)?;
    let records = trainer.run(&data.train, &data.vocab, None)?;
    let stats = TrainStats {
        steps: trainer.state().step,
        final_loss: records.last().map(|r| r.loss).unwrap_or(f64::NAN),
        rejected_steps: trainer.state().tracker.rejected_count,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((trainer.into_model(), stats))
}

/// Test-set WER of a trained model, with LM rescoring when the preset asks for it.
pub fn score_preset(p: &Preset, model: &Las, data: &ToyData, toy: &ToyConfig, beam: &BeamConfig) -> Result<(WerBreakdown, Option<RescoreWeights>)> {
    if p.use_lm {
        let (w, weights) = lm_rescored_wer(model, data, toy, beam)?;
        Ok((w, Some(weights)))
    } else {
        Ok((evaluate(model, &data.test, &data.vocab, beam)?.wer, None))
    }
}

/// Train and evaluate one preset on prepared toy data.
pub fn run_experiment(p: &Preset, data: &ToyData, toy: &ToyConfig, beam: &BeamConfig, seed: u64) -> Result<ExperimentResult> {
    let (model, stats) = train_preset(p, data, seed)?;
    let (test_wer, weights) = score_preset(p, &model, data, toy, beam)?;
    Ok(ExperimentResult { name: p.name.clone(), description: p.description.clone(), test_wer, weights, train: stats })
}

/// Relative WER reduction `(prev − cur) / prev`; zero when `prev` is zero.
pub fn werr(prev: f64, cur: f64) -> f64 {
    if prev == 0.0 {
        0.0
    } else {
        (prev - cur) / prev
    }
}

/// One-decimal rendering that rounds halves away from zero after removing
/// float noise, so 3.75 prints as 3.8.
pub fn format_tenths(v: f64) -> String {
    let v = (v * 1e6).round() / 1e6;
    format!("{:.1}", (v * 10.0).round() / 10.0)
}

/// Render ladder results as a text table with a WERR column.
pub fn ladder_table(results: &[ExperimentResult]) -> String {
    let mut s = format!("{:<4} {:<24} {:>8} {:>8}\n", "Exp", "System", "WER(%)", "WERR(%)");
    let mut prev: Option<f64> = None;
    for r in results {
        let wer = 100.0 * r.test_wer.rate();
        let rel = prev.map(|p| format_tenths(100.0 * werr(p, wer))).unwrap_or_else(|| "-".into());
        s.push_str(&format!("{:<4} {:<24} {:>8.2} {:>8}\n", r.name, r.description, wer, rel));
        prev = Some(wer);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn werr_follows_the_reference_convention() {
        assert!((werr(8.0, 7.7) - 0.0375).abs() < 1e-12);
        assert_eq!(format_tenths(100.0 * werr(8.0, 7.7)), "3.8");
        assert_eq!(format_tenths(-0.25), "-0.3");
        assert_eq!(werr(0.0, 1.0), 0.0);
    }

    #[test]
    fn presets_are_cumulative() {
        let all: Vec<Preset> = PRESET_NAMES.iter().map(|n| preset(n).unwrap()).collect();
        assert_eq!(all[0].units, Units::Grapheme);
        assert_eq!(all[1].units, Units::Wordpiece);
        assert_eq!((all[1].model.attention_heads, all[2].model.attention_heads), (1, 4));
        assert!(!all[2].train.use_grad_tracker && all[3].train.use_grad_tracker);
        assert_eq!((all[3].train.ss_target_prob, all[4].train.ss_target_prob), (0.0, 0.4));
        assert_eq!((all[4].train.label_smoothing_eps, all[5].train.label_smoothing_eps), (0.0, 0.1));
        assert_eq!((all[5].train.mwer_steps, all[6].train.mwer_steps > 0), (0, true));
        assert!(!all[6].use_lm && all[7].use_lm);
        assert!(preset("e3").is_ok());
        assert!(matches!(preset("E9"), Err(Error::Config(_))));
    }

    #[test]
    fn toy_data_is_reproducible_and_consistent() {
        let cfg = ToyConfig { n_train: 30, n_dev: 5, n_test: 5, n_lm_text: 20, vocab_size: 40, ..ToyConfig::default() };
        let a = build_toy(&cfg, Units::Wordpiece).unwrap();
        let b = build_toy(&cfg, Units::Wordpiece).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.lm_text, b.lm_text);
        for u in a.train.iter().chain(&a.test) {
            assert_eq!(a.vocab.detokenize(&u.tokens).text, u.transcript);
            assert_eq!(u.features.cols(), 320);
        }
        let g = build_toy(&cfg, Units::Grapheme).unwrap();
        assert!(g.vocab.pieces().iter().all(|p| p.chars().filter(|c| *c != '\u{2581}').count() <= 1 || p.starts_with('<') || p.starts_with("\u{2581}<")));
    }
}
