//! Subcommand implementations. Each returns data so it can be driven from
//! tests and examples as well as the binary.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{resolve, ExperimentConfig, Overrides};
use super::experiment::{build_toy, format_tenths, score_preset, toy_splits, train_preset, werr, ExperimentResult, ToyConfig, ToyData, TrainStats, Units};
use super::manifest::Manifest;
use crate::decoding::{decode_batch, group_nbest, read_nbest, sentence_wer, write_nbest, BeamConfig, NBestEntry, WerBreakdown};
use crate::error::{Error, Result};
use crate::frontend::{write_features, SynthConfig};
use crate::lm::{default_grid, rescore, train_ngram, tune_weights, Candidate, NGramLM, RescoreWeights};
use crate::model::{Las, ModelConfig};
use crate::training::{TrainConfig, Trainer};
use crate::wordpiece::{normalize_whitespace, train_wpm, WordpieceVocab};

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(text.lines().map(normalize_whitespace).filter(|l| !l.is_empty()).collect())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Write train/dev/test manifests and an LM text corpus for the toy task.
pub fn cmd_toy_data(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let splits = toy_splits(&cfg.toy)?;
    fs::create_dir_all(out)?;
    for (name, records) in [("train", splits.train), ("dev", splits.dev), ("test", splits.test)] {
        let m = Manifest::new(records, out)?;
        m.save(&out.join(format!("{name}.jsonl")))?;
        fs::write(out.join(format!("{name}.txt")), m.transcripts().join("\n") + "\n")?;
    }
    fs::write(out.join("lm.txt"), splits.lm_text.join("\n") + "\n")?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparedUtterance {
    pub utt_id: String,
    pub features: PathBuf,
    pub frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<PathBuf>,
}

/// Featurize a manifest into `out/feats/<utt>.feat`, write `out/tokens/<utt>.txt`
/// when a vocabulary is given, and index everything in `out/prepared.jsonl`.
/// Re-running on the same inputs rewrites identical files.
pub fn cmd_prepare(cfg: &ExperimentConfig, manifest: &Path, vocab: Option<&Path>, out: &Path) -> Result<Vec<PreparedUtterance>> {
    let m = Manifest::load(manifest)?;
    let vocab = vocab.map(WordpieceVocab::load).transpose()?;
    fs::create_dir_all(out.join("feats"))?;
    if vocab.is_some() {
        fs::create_dir_all(out.join("tokens"))?;
    }
    let mut index = Vec::with_capacity(m.len());
    for rec in m.records() {
        let feats = m.features(rec, &cfg.toy.synth)?;
        let feat_rel = PathBuf::from("feats").join(format!("{}.feat", rec.utt_id));
        write_features(&out.join(&feat_rel), &feats)?;
        let tokens = match &vocab {
            Some(v) => {
                let ids = v.segment(&normalize_whitespace(&rec.transcript)).ids;
                let rel = PathBuf::from("tokens").join(format!("{}.txt", rec.utt_id));
                let line: Vec<String> = ids.iter().map(usize::to_string).collect();
                fs::write(out.join(&rel), line.join(" ") + "\n")?;
                Some(rel)
            }
            None => None,
        };
        index.push(PreparedUtterance { utt_id: rec.utt_id.clone(), features: feat_rel, frames: feats.num_frames(), tokens });
    }
    let mut w = create(&out.join("prepared.jsonl"))?;
    for p in &index {
        writeln!(w, "{}", serde_json::to_string(p)?)?;
    }
    w.flush()?;
    Ok(index)
}

/// Train a wordpiece inventory of `size` pieces on a text corpus (one sentence per line).
pub fn cmd_wpm_train(corpus: &Path, size: usize, out: &Path) -> Result<WordpieceVocab> {
    let outcome = train_wpm(&read_lines(corpus)?, size)?;
    outcome.vocab.save(out)?;
    Ok(outcome.vocab)
}

/// Text lines to space-separated piece ids.
pub fn cmd_wpm_encode(vocab: &WordpieceVocab, input: impl BufRead, mut out: impl Write) -> Result<()> {
    for line in input.lines() {
        let seg = vocab.segment(&normalize_whitespace(&line?));
        if !seg.unknown.is_empty() {
            log::warn!("characters {:?} map to the unknown piece", seg.unknown);
        }
        let ids: Vec<String> = seg.ids.iter().map(usize::to_string).collect();
        writeln!(out, "{}", ids.join(" "))?;
    }
    Ok(())
}

/// Space-separated piece ids back to text.
pub fn cmd_wpm_decode(vocab: &WordpieceVocab, input: impl BufRead, mut out: impl Write) -> Result<()> {
    for (n, line) in input.lines().enumerate() {
        let ids = line?
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| Error::Parse(format!("line {}: {t:?} is not a piece id", n + 1))))
            .collect::<Result<Vec<_>>>()?;
        let d = vocab.detokenize(&ids);
        if d.malformed {
            log::warn!("line {}: id sequence is not a well-formed segmentation", n + 1);
        }
        writeln!(out, "{}", d.text)?;
    }
    Ok(())
}

/// Train an n-gram LM on a text corpus and write it in ARPA format.
pub fn cmd_lm_train(corpus: &Path, order: usize, out: &Path) -> Result<NGramLM> {
    let lm = train_ngram(&read_lines(corpus)?, order)?;
    lm.save(out)?;
    Ok(lm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: u64,
    pub final_loss: Option<f64>,
    pub resumed_from: Option<u64>,
}

/// Train on a manifest. Progress goes to `out/train_log.jsonl` and resumable
/// state to `out/checkpoint/`; an existing checkpoint is resumed.
pub fn cmd_train(cfg: &ExperimentConfig, manifest: &Path, vocab: &Path, out: &Path) -> Result<TrainSummary> {
    let vocab = WordpieceVocab::load(vocab)?;
    let data = Manifest::load(manifest)?.utterances(&vocab, &cfg.toy.synth)?;
    let ckpt = out.join("checkpoint");
    let (mut trainer, resumed_from) = if ckpt.join("optim.json").is_file() {
        let t = Trainer::resume(&ckpt)?;
        if t.model().config().vocab_size != vocab.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} output units but the vocabulary has {}",
                t.model().config().vocab_size,
                vocab.len()
            )));
        }
        let step = t.state().step;
        log::info!("resuming from step {step}");
        (t, Some(step))
    } else {
        let p = cfg.as_preset()?;
        let model = Las::new(ModelConfig { vocab_size: vocab.len(), ..p.model }, cfg.seed)?;
        (Trainer::new(model, p.train)?, None)
    };
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    let records = trainer.run(&data, &vocab, Some(out))?;
    Ok(TrainSummary { steps: trainer.state().step, final_loss: records.last().map(|r| r.loss), resumed_from })
}

fn load_model(checkpoint: &Path) -> Result<Las> {
    let (bin, json) = (checkpoint.join("model.bin"), checkpoint.join("model.json"));
    if !json.is_file() {
        return Err(Error::Input(format!("no model checkpoint in {}", checkpoint.display())));
    }
    Las::load(&bin, &json)
}

/// Beam-decode a manifest and write an N-best file.
pub fn cmd_decode(checkpoint: &Path, manifest: &Path, vocab: &Path, beam: &BeamConfig, synth: &SynthConfig, out: &Path) -> Result<Vec<NBestEntry>> {
    let model = load_model(checkpoint)?;
    let vocab = WordpieceVocab::load(vocab)?;
    let m = Manifest::load(manifest)?;
    let feats = m.records().iter().map(|r| Ok(m.features(r, synth)?.to_tensor())).collect::<Result<Vec<_>>>()?;
    let nbest = decode_batch(&model, &feats, beam)?;
    let entries: Vec<NBestEntry> = m
        .records()
        .iter()
        .zip(&nbest)
        .flat_map(|(r, hyps)| {
            hyps.iter().enumerate().map(|(rank, h)| NBestEntry {
                utt_id: r.utt_id.clone(),
                rank,
                log_prob: h.log_prob,
                text: vocab.detokenize(&h.tokens).text,
            })
        })
        .collect();
    write_nbest(create(out)?, &entries)?;
    Ok(entries)
}

fn load_nbest(path: &Path) -> Result<Vec<(String, Vec<Candidate>)>> {
    let file = fs::File::open(path).map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    Ok(group_nbest(read_nbest(BufReader::new(file))?)
        .into_iter()
        .map(|(id, mut es)| {
            es.sort_by_key(|e| e.rank);
            (id, es.into_iter().map(|e| Candidate { text: e.text, tokens: Vec::new(), log_prob: e.log_prob }).collect())
        })
        .collect())
}

/// Where rescoring weights come from.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightSource {
    Fixed(RescoreWeights),
    /// Grid-search on a dev N-best file against a dev manifest.
    Tune { nbest: PathBuf, manifest: PathBuf },
}

/// Rerank an N-best file with an ARPA LM and write `utt_id<TAB>text` top-1 lines.
pub fn cmd_rescore(nbest: &Path, lm: &Path, weights: &WeightSource, out: &Path) -> Result<RescoreWeights> {
    let lm = NGramLM::load(lm)?;
    let w = match weights {
        WeightSource::Fixed(w) => *w,
        WeightSource::Tune { nbest, manifest } => {
            let refs: HashMap<String, String> = Manifest::load(manifest)?
                .records()
                .iter()
                .map(|r| (r.utt_id.clone(), normalize_whitespace(&r.transcript)))
                .collect();
            let dev = load_nbest(nbest)?;
            let mut lists = Vec::with_capacity(dev.len());
            let mut dev_refs = Vec::with_capacity(dev.len());
            for (id, cands) in dev {
                let r = refs.get(&id).ok_or_else(|| Error::Input(format!("dev N-best has {id:?}, which the manifest lacks")))?;
                dev_refs.push(r.clone());
                lists.push(cands);
            }
            let tuned = tune_weights(&lists, &dev_refs, &lm, &default_grid(), &default_grid())?;
            log::info!("tuned weights {:?}: dev WER {:.4} (untuned {:.4})", tuned.weights, tuned.wer.rate(), tuned.baseline.rate());
            tuned.weights
        }
    };
    let mut f = create(out)?;
    for (id, cands) in load_nbest(nbest)? {
        let best = rescore(&cands, &lm, &w);
        writeln!(f, "{id}\t{}", best.first().map(|c| c.text.as_str()).unwrap_or(""))?;
    }
    f.flush()?;
    Ok(w)
}

/// Read `utt_id<TAB>text` hypothesis lines.
pub fn read_hyps(path: &Path) -> Result<HashMap<String, String>> {
    let mut out = HashMap::new();
    for (n, line) in read_raw_lines(path)?.into_iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line.split_once('\t').unwrap_or((line.trim(), ""));
        if out.insert(id.trim().to_string(), normalize_whitespace(text)).is_some() {
            return Err(Error::Parse(format!("{} line {}: duplicate id {id:?}", path.display(), n + 1)));
        }
    }
    Ok(out)
}

fn read_raw_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(text.lines().map(str::to_string).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemReport {
    pub name: String,
    pub corpus: WerBreakdown,
    pub per_utterance: Vec<(String, WerBreakdown)>,
}

/// Score one or more hypothesis files against a manifest. Missing
/// hypotheses count as empty output; unknown ids are an error.
pub fn cmd_eval(refs: &Path, hyps: &[PathBuf]) -> Result<Vec<SystemReport>> {
    let m = Manifest::load(refs)?;
    hyps.iter()
        .map(|path| {
            let h = read_hyps(path)?;
            if let Some(extra) = h.keys().find(|k| !m.records().iter().any(|r| &r.utt_id == *k)) {
                return Err(Error::Input(format!("{}: hypothesis for unknown utterance {extra:?}", path.display())));
            }
            let mut corpus = WerBreakdown::default();
            let per_utterance = m
                .records()
                .iter()
                .map(|r| {
                    let w = sentence_wer(&r.transcript, h.get(&r.utt_id).map(String::as_str).unwrap_or(""));
                    corpus.merge(&w);
                    (r.utt_id.clone(), w)
                })
                .collect();
            Ok(SystemReport { name: path.display().to_string(), corpus, per_utterance })
        })
        .collect()
}

/// Text report: per-utterance lines for every system, then a summary table
/// whose WERR column compares each system with the previous one.
pub fn format_eval(reports: &[SystemReport]) -> String {
    let mut s = String::new();
    for r in reports {
        s.push_str(&format!("# {}\n{:<20} {:>5} {:>4} {:>4} {:>4} {:>8}\n", r.name, "utt_id", "words", "sub", "del", "ins", "WER(%)"));
        for (id, w) in &r.per_utterance {
            s.push_str(&format!(
                "{:<20} {:>5} {:>4} {:>4} {:>4} {:>8.2}\n",
                id,
                w.ref_words,
                w.substitutions,
                w.deletions,
                w.insertions,
                100.0 * w.rate()
            ));
        }
        s.push('\n');
    }
    s.push_str(&format!("{:<32} {:>8} {:>8}\n", "System", "WER(%)", "WERR(%)"));
    let mut prev: Option<f64> = None;
    for r in reports {
        let wer = 100.0 * r.corpus.rate();
        let rel = prev.map(|p| format_tenths(100.0 * werr(p, wer))).unwrap_or_else(|| "-".into());
        s.push_str(&format!("{:<32} {:>8.2} {:>8}\n", r.name, wer, rel));
        prev = Some(wer);
    }
    s
}

/// Run the named presets in order on the toy task. Overrides apply to every
/// rung. A rung whose training setup matches the previous one reuses its model.
pub fn cmd_ladder(base: &Overrides, presets: &[String]) -> Result<Vec<ExperimentResult>> {
    let mut results = Vec::with_capacity(presets.len());
    let mut data_cache: Vec<(Units, ToyConfig, ToyData)> = Vec::new();
    let mut last: Option<((Units, ModelConfig, TrainConfig, ToyConfig), Las, TrainStats)> = None;
    for name in presets {
        let cfg = resolve(&Overrides { preset: Some(name.clone()), ..base.clone() })?;
        let p = cfg.as_preset()?;
        if !data_cache.iter().any(|(u, t, _)| *u == cfg.units && *t == cfg.toy) {
            data_cache.push((cfg.units, cfg.toy.clone(), build_toy(&cfg.toy, cfg.units)?));
        }
        let data = &data_cache.iter().find(|(u, t, _)| *u == cfg.units && *t == cfg.toy).expect("cached above").2;
        let key = (cfg.units, p.model.clone(), p.train.clone(), cfg.toy.clone());
        let (model, stats) = match last.take() {
            Some((k, m, s)) if k == key => (m, s),
            _ => train_preset(&p, data, cfg.seed)?,
        };
        let (test_wer, weights) = score_preset(&p, &model, data, &cfg.toy, &cfg.beam)?;
        log::info!("{}: test WER {:.4}", p.name, test_wer.rate());
        results.push(ExperimentResult { name: p.name.clone(), description: p.description.clone(), test_wer, weights, train: stats.clone() });
        last = Some((key, model, stats));
    }
    Ok(results)
}
