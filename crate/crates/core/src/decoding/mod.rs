//! Beam-search N-best decoding, a brute-force oracle decoder, and word error
//! rate scoring.
//!
//! Scores are plain `log P(y | x)` with no length normalization. Every
//! vocabulary id except eos may appear inside a hypothesis; eos terminates it.

mod wer;

use std::cmp::Ordering;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use wer::{corpus_wer, sentence_wer, word_edit_distance, WerBreakdown};

use crate::autograd::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::model::{DecoderState, Las};

/// Largest search space `brute_force_decode` will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

/// A finished token sequence (ending in eos) with its model score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
}

/// Descending score, then ascending token ids.
pub fn rank_order(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.log_prob.total_cmp(&a.log_prob).then_with(|| a.tokens.cmp(&b.tokens))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamConfig {
    pub beam_width: usize,
    pub nbest: usize,
    /// Maximum hypothesis length including eos; `None` means twice the
    /// number of encoder frames.
    pub max_len: Option<usize>,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig { beam_width: 8, nbest: 4, max_len: None }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nbest == 0 || self.beam_width < self.nbest {
            return Err(Error::Config(format!(
                "need beam_width ≥ nbest ≥ 1, got beam_width {} nbest {}",
                self.beam_width, self.nbest
            )));
        }
        if self.max_len == Some(0) {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        Ok(())
    }

    fn resolve_max_len(&self, frames: usize) -> usize {
        self.max_len.unwrap_or((2 * frames).max(1))
    }
}

struct Active {
    tokens: Vec<usize>,
    score: f64,
    state: DecoderState,
}

/// Label-synchronous beam search returning up to `nbest` hypotheses.
///
/// Each step expands every active prefix by every token and ranks the
/// candidates. Eos candidates ranked within the top `beam_width` finish;
/// the best non-eos candidates refill up to `beam_width` active slots. At
/// length `max_len` only eos is allowed. Search stops once the best active
/// prefix scores below the N-th finished hypothesis.
pub fn beam_search(model: &Las, features: &Tensor, cfg: &BeamConfig) -> Result<Vec<Hypothesis>> {
    cfg.validate()?;
    let mc = model.config();
    let (eos, vocab) = (mc.eos_id, mc.vocab_size);
    let max_len = cfg.resolve_max_len(features.rows());

    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let mem = model.listen(&mut tape, &bound, features)?;
    let init = model.initial_state(&mut tape);
    let mut active = vec![Active { tokens: Vec::new(), score: 0.0, state: init }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for step in 0..max_len {
        let forced = step + 1 == max_len;
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        let mut states = Vec::with_capacity(active.len());
        for (k, a) in active.iter().enumerate() {
            let prev = a.tokens.last().copied().unwrap_or(mc.sos_id);
            let out = model.decode_step(&mut tape, &bound, &mem, &a.state, prev)?;
            let lp = tape.log_softmax(out.logits, 1)?;
            let lp = tape.value(lp).data();
            if forced {
                cands.push((a.score + lp[eos], k, eos));
            } else {
                cands.extend((0..vocab).map(|v| (a.score + lp[v], k, v)));
            }
            states.push(out.state);
        }
        cands.sort_by(|x, y| {
            y.0.total_cmp(&x.0).then_with(|| {
                let tx = active[x.1].tokens.iter().chain(std::iter::once(&x.2));
                let ty = active[y.1].tokens.iter().chain(std::iter::once(&y.2));
                tx.cmp(ty)
            })
        });
        let mut next = Vec::new();
        for (rank, &(score, k, v)) in cands.iter().enumerate() {
            if rank >= cfg.beam_width && next.len() >= cfg.beam_width {
                break;
            }
            let mut tokens = active[k].tokens.clone();
            tokens.push(v);
            if v == eos {
                if rank < cfg.beam_width {
                    finished.push(Hypothesis { tokens, log_prob: score });
                }
            } else if next.len() < cfg.beam_width {
                next.push(Active { tokens, score, state: states[k].clone() });
            }
        }
        active = next;
        if active.is_empty() {
            break;
        }
        if finished.len() >= cfg.nbest {
            finished.sort_by(rank_order);
            if active[0].score < finished[cfg.nbest - 1].log_prob {
                break;
            }
        }
    }
    finished.sort_by(rank_order);
    finished.truncate(cfg.nbest);
    Ok(finished)
}

/// Step-wise argmax decoding (lowest id wins ties), eos forced at `max_len`.
pub fn greedy_decode(model: &Las, features: &Tensor, max_len: usize) -> Result<Hypothesis> {
    if max_len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    let mc = model.config();
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let mem = model.listen(&mut tape, &bound, features)?;
    let mut state = model.initial_state(&mut tape);
    let mut prev = mc.sos_id;
    let mut hyp = Hypothesis { tokens: Vec::new(), log_prob: 0.0 };
    for step in 0..max_len {
        let out = model.decode_step(&mut tape, &bound, &mem, &state, prev)?;
        let lp = tape.log_softmax(out.logits, 1)?;
        let lp = tape.value(lp).data();
        let best = if step + 1 == max_len {
            mc.eos_id
        } else {
            (0..lp.len()).fold(0, |b, v| if lp[v] > lp[b] { v } else { b })
        };
        hyp.tokens.push(best);
        hyp.log_prob += lp[best];
        if best == mc.eos_id {
            break;
        }
        state = out.state;
        prev = best;
    }
    Ok(hyp)
}

/// Score every eos-terminated sequence of length ≤ `max_len` and rank them.
///
/// Refuses when `V^max_len` exceeds [`BRUTE_FORCE_LIMIT`].
pub fn brute_force_decode(model: &Las, features: &Tensor, max_len: usize) -> Result<Vec<Hypothesis>> {
    let mc = model.config();
    if max_len == 0 || (mc.vocab_size as f64).powi(max_len as i32) > BRUTE_FORCE_LIMIT {
        return Err(Error::Config(format!(
            "brute force over V={} and max_len={max_len} exceeds the enumeration limit",
            mc.vocab_size
        )));
    }
    let symbols: Vec<usize> = (0..mc.vocab_size).filter(|&v| v != mc.eos_id).collect();
    let mut out = Vec::new();
    let mut prefixes: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut longer = Vec::new();
        for p in &prefixes {
            let mut y = p.clone();
            y.push(mc.eos_id);
            let log_prob = model.log_prob(features, &y)?;
            out.push(Hypothesis { tokens: y, log_prob });
            for &s in &symbols {
                let mut q = p.clone();
                q.push(s);
                longer.push(q);
            }
        }
        prefixes = longer;
    }
    out.sort_by(rank_order);
    Ok(out)
}

/// Beam-search many utterances in parallel; output order follows input.
pub fn decode_batch(model: &Las, features: &[Tensor], cfg: &BeamConfig) -> Result<Vec<Vec<Hypothesis>>> {
    features.par_iter().map(|f| beam_search(model, f, cfg)).collect()
}

/// One line of an N-best file: `utt_id rank log_prob<TAB>text`.
#[derive(Clone, Debug, PartialEq)]
pub struct NBestEntry {
    pub utt_id: String,
    pub rank: usize,
    pub log_prob: f64,
    pub text: String,
}

pub fn write_nbest<W: Write>(mut w: W, entries: &[NBestEntry]) -> Result<()> {
    for e in entries {
        if e.utt_id.is_empty() || e.utt_id.contains(char::is_whitespace) || e.text.contains(['\t', '\n']) {
            return Err(Error::Input(format!("entry for {:?} cannot be written as one N-best line", e.utt_id)));
        }
        writeln!(w, "{} {} {}\t{}", e.utt_id, e.rank, e.log_prob, e.text)?;
    }
    Ok(())
}

pub fn read_nbest<R: BufRead>(r: R) -> Result<Vec<NBestEntry>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Parse(format!("N-best line {}: expected `utt_id rank log_prob<TAB>text`", n + 1));
        let (head, text) = line.split_once('\t').ok_or_else(bad)?;
        let mut parts = head.split(' ');
        let (Some(utt), Some(rank), Some(lp), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        let log_prob: f64 = lp.parse().map_err(|_| bad())?;
        if !log_prob.is_finite() {
            return Err(bad());
        }
        out.push(NBestEntry {
            utt_id: utt.to_string(),
            rank: rank.parse().map_err(|_| bad())?,
            log_prob,
            text: text.to_string(),
        });
    }
    Ok(out)
}

/// Group consecutive entries by utterance id, keeping first-seen order.
pub fn group_nbest(entries: Vec<NBestEntry>) -> Vec<(String, Vec<NBestEntry>)> {
    let mut groups: Vec<(String, Vec<NBestEntry>)> = Vec::new();
    for e in entries {
        match groups.iter_mut().find(|(id, _)| *id == e.utt_id) {
            Some((_, g)) => g.push(e),
            None => groups.push((e.utt_id.clone(), vec![e])),
        }
    }
    groups
}
