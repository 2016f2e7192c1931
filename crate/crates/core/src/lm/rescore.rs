use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::NGramLM;
use crate::decoding::{sentence_wer, WerBreakdown};
use crate::error::{Error, Result};

/// One first-pass hypothesis to rerank.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub text: String,
    /// Wordpiece ids when known; empty for hypotheses read back from text.
    pub tokens: Vec<usize>,
    /// First-pass `log P(y | x)`.
    pub log_prob: f64,
}

/// Log-linear weights: `log P(y|x) + λ·log P_LM(y) + γ·|y|` with `|y|` in words.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RescoreWeights {
    pub lambda: f64,
    pub gamma: f64,
}

fn combined(c: &Candidate, lm_score: f64, w: &RescoreWeights) -> f64 {
    c.log_prob + w.lambda * lm_score + w.gamma * c.text.split_whitespace().count() as f64
}

fn order(a: (&Candidate, f64), b: (&Candidate, f64)) -> Ordering {
    b.1.total_cmp(&a.1)
        .then_with(|| b.0.log_prob.total_cmp(&a.0.log_prob))
        .then_with(|| a.0.tokens.cmp(&b.0.tokens))
        .then_with(|| a.0.text.cmp(&b.0.text))
}

fn rerank_with(nbest: &[Candidate], lm_scores: &[f64], w: &RescoreWeights) -> Vec<usize> {
    let scores: Vec<f64> = nbest.iter().zip(lm_scores).map(|(c, &l)| combined(c, l, w)).collect();
    let mut idx: Vec<usize> = (0..nbest.len()).collect();
    idx.sort_by(|&i, &j| order((&nbest[i], scores[i]), (&nbest[j], scores[j])));
    idx
}

/// Rerank by combined score. Ties fall back to the first-pass score, then
/// token ids, then text, so the result does not depend on input order.
pub fn rescore(nbest: &[Candidate], lm: &NGramLM, w: &RescoreWeights) -> Vec<Candidate> {
    let lm_scores: Vec<f64> = nbest.iter().map(|c| lm.sentence_logprob(&c.text.split_whitespace().collect::<Vec<_>>())).collect();
    rerank_with(nbest, &lm_scores, w).into_iter().map(|i| nbest[i].clone()).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub weights: RescoreWeights,
    pub wer: WerBreakdown,
    /// Dev WER with `λ = γ = 0`.
    pub baseline: WerBreakdown,
}

/// Exhaustive grid search for the weights minimizing pooled dev WER of the
/// reranked top hypothesis. Zero is always added to both grids; ties go to
/// the smaller `|λ|`, then the smaller `|γ|`.
pub fn tune_weights<S: AsRef<str>>(
    dev: &[Vec<Candidate>],
    refs: &[S],
    lm: &NGramLM,
    lambdas: &[f64],
    gammas: &[f64],
) -> Result<TuneResult> {
    if dev.len() != refs.len() {
        return Err(Error::Input(format!("{} N-best lists for {} references", dev.len(), refs.len())));
    }
    if lambdas.iter().chain(gammas).any(|v| !v.is_finite()) {
        return Err(Error::Config("rescoring grid values must be finite".into()));
    }
    let grid = |g: &[f64]| {
        let mut v: Vec<f64> = g.iter().copied().chain(std::iter::once(0.0)).collect();
        v.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
        v.dedup();
        v
    };
    let (lambdas, gammas) = (grid(lambdas), grid(gammas));
    let lm_scores: Vec<Vec<f64>> = dev
        .iter()
        .map(|n| n.iter().map(|c| lm.sentence_logprob(&c.text.split_whitespace().collect::<Vec<_>>())).collect())
        .collect();
    let errors = |w: &RescoreWeights| {
        let mut total = WerBreakdown::default();
        for ((n, s), r) in dev.iter().zip(&lm_scores).zip(refs) {
            let hyp = rerank_with(n, s, w).first().map(|&i| n[i].text.as_str()).unwrap_or("");
            total.merge(&sentence_wer(r.as_ref(), hyp));
        }
        total
    };
    let baseline = errors(&RescoreWeights::default());
    let mut best = (RescoreWeights::default(), baseline);
    for &lambda in &lambdas {
        for &gamma in &gammas {
            let w = RescoreWeights { lambda, gamma };
            let e = errors(&w);
            if e.errors() < best.1.errors() {
                best = (w, e);
            }
        }
    }
    Ok(TuneResult { weights: best.0, wer: best.1, baseline })
}

/// `[0, 0.1, …, 1.0]`
pub fn default_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}
