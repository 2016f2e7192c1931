//! Word n-gram language model with interpolated Witten–Bell smoothing,
//! ARPA persistence, and log-linear N-best rescoring.
//!
//! Probabilities are stored the way ARPA files hold them: log10 values for
//! every observed n-gram plus a log10 backoff weight for every observed
//! history. For interpolated Witten–Bell the stored value of an observed
//! n-gram is already the interpolated estimate, and the backoff weight of a
//! history `h` is `N1+(h·) / (c(h) + N1+(h·))`, so the usual backoff lookup
//! reproduces the interpolated distribution exactly. The lowest order is
//! interpolated with a uniform distribution over the vocabulary.

mod rescore;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub use rescore::{default_grid, rescore, tune_weights, Candidate, RescoreWeights, TuneResult};

use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// log10 value ARPA files use for "impossible" (the sentence-begin unigram).
const LOG10_ZERO: f64 = -99.0;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Entry {
    log10_prob: f64,
    log10_backoff: f64,
}

/// Backoff n-gram model over words.
#[derive(Clone, Debug, PartialEq)]
pub struct NGramLM {
    order: usize,
    /// `tables[k]` holds the (k+1)-grams.
    tables: Vec<HashMap<Vec<String>, Entry>>,
}

impl NGramLM {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Predictable words: every unigram except the sentence-begin symbol.
    pub fn vocab(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.tables[0].keys().map(|k| k[0].as_str()).filter(|w| *w != BOS).collect();
        v.sort_unstable();
        v
    }

    pub fn contains(&self, word: &str) -> bool {
        word != BOS && self.tables[0].contains_key(&[word.to_string()][..])
    }

    /// Number of stored n-grams per order.
    pub fn counts(&self) -> Vec<usize> {
        self.tables.iter().map(HashMap::len).collect()
    }

    fn map_word(&self, w: &str) -> String {
        if self.contains(w) {
            w.to_string()
        } else {
            UNK.to_string()
        }
    }

    /// log10 P(word | history) by standard backoff; `history` is truncated
    /// to the model order.
    fn log10_prob(&self, history: &[String], word: &str) -> f64 {
        let start = history.len().saturating_sub(self.order - 1);
        let mut h = &history[start..];
        let mut bow = 0.0;
        loop {
            let mut gram: Vec<String> = h.to_vec();
            gram.push(word.to_string());
            if let Some(e) = self.tables[h.len()].get(&gram) {
                return bow + e.log10_prob;
            }
            if h.is_empty() {
                return bow + LOG10_ZERO;
            }
            if let Some(e) = self.tables[h.len() - 1].get(h) {
                bow += e.log10_backoff;
            }
            h = &h[1..];
        }
    }

    /// Natural-log conditional probability.
    pub fn cond_logprob(&self, history: &[&str], word: &str) -> f64 {
        let h: Vec<String> = history.iter().map(|w| if *w == BOS { BOS.to_string() } else { self.map_word(w) }).collect();
        self.log10_prob(&h, &self.map_word(word)) * std::f64::consts::LN_10
    }

    /// Natural-log probability of a sentence including the end-of-sentence
    /// term; unknown words score as the unknown symbol.
    pub fn sentence_logprob<S: AsRef<str>>(&self, words: &[S]) -> f64 {
        let mut history = vec![BOS.to_string()];
        let mut total = 0.0;
        for w in words.iter().map(|w| self.map_word(w.as_ref())).chain(std::iter::once(EOS.to_string())) {
            total += self.log10_prob(&history, &w);
            history.push(w);
        }
        total * std::f64::consts::LN_10
    }

    /// Largest `|Σ_w P(w | h) − 1|` over every stored history and the empty history.
    pub fn max_normalization_error(&self) -> f64 {
        let vocab: Vec<String> = self.vocab().into_iter().map(str::to_string).collect();
        let mut histories: Vec<Vec<String>> = vec![Vec::new()];
        for table in &self.tables[..self.order - 1] {
            histories.extend(table.keys().cloned());
        }
        histories
            .iter()
            .map(|h| {
                let s: f64 = vocab.iter().map(|w| 10f64.powf(self.log10_prob(h, w))).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Serialize in ARPA format with n-grams sorted for stable output.
    pub fn to_arpa(&self) -> String {
        let mut s = String::from("\n\\data\\\n");
        for (k, t) in self.tables.iter().enumerate() {
            let _ = writeln!(s, "ngram {}={}", k + 1, t.len());
        }
        for (k, t) in self.tables.iter().enumerate() {
            let _ = write!(s, "\n\\{}-grams:\n", k + 1);
            let sorted: BTreeMap<&Vec<String>, &Entry> = t.iter().collect();
            for (gram, e) in sorted {
                let _ = write!(s, "{}\t{}", e.log10_prob, gram.join(" "));
                if k + 1 < self.order && e.log10_backoff != 0.0 {
                    let _ = write!(s, "\t{}", e.log10_backoff);
                }
                s.push('\n');
            }
        }
        s.push_str("\n\\end\\\n");
        s
    }

    pub fn from_arpa(text: &str) -> Result<Self> {
        let bad = |line: usize, m: &str| Error::Parse(format!("ARPA line {line}: {m}"));
        let mut declared: Vec<usize> = Vec::new();
        let mut tables: Vec<HashMap<Vec<String>, Entry>> = Vec::new();
        let mut section: Option<usize> = None;
        let mut in_data = false;
        let mut ended = false;
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if ended {
                return Err(bad(n, "content after \\end\\"));
            }
            if line == "\\data\\" {
                in_data = true;
                continue;
            }
            if line == "\\end\\" {
                ended = true;
                continue;
            }
            if let Some(rest) = line.strip_prefix('\\').and_then(|l| l.strip_suffix("-grams:")) {
                let k: usize = rest.parse().map_err(|_| bad(n, "bad section header"))?;
                if k == 0 || k > declared.len() || k != tables.len() + 1 {
                    return Err(bad(n, "unexpected n-gram section"));
                }
                tables.push(HashMap::new());
                section = Some(k);
                in_data = false;
                continue;
            }
            if in_data {
                let (k, c) = line
                    .strip_prefix("ngram ")
                    .and_then(|l| l.split_once('='))
                    .ok_or_else(|| bad(n, "expected `ngram k=count`"))?;
                let k: usize = k.trim().parse().map_err(|_| bad(n, "bad order"))?;
                if k != declared.len() + 1 {
                    return Err(bad(n, "orders must be declared in sequence"));
                }
                declared.push(c.trim().parse().map_err(|_| bad(n, "bad count"))?);
                continue;
            }
            let k = section.ok_or_else(|| bad(n, "n-gram outside a section"))?;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 2 || fields.len() > 3 {
                return Err(bad(n, "expected `log10p<TAB>words[<TAB>backoff]`"));
            }
            let log10_prob: f64 = fields[0].parse().map_err(|_| bad(n, "bad probability"))?;
            let gram: Vec<String> = fields[1].split(' ').map(str::to_string).collect();
            if gram.len() != k {
                return Err(bad(n, "n-gram length differs from its section"));
            }
            let log10_backoff: f64 = match fields.get(2) {
                Some(b) => b.parse().map_err(|_| bad(n, "bad backoff"))?,
                None => 0.0,
            };
            if !(log10_prob.is_finite() && log10_prob <= 0.0 && log10_backoff.is_finite()) {
                return Err(bad(n, "probabilities must be finite log10 values ≤ 0"));
            }
            tables[k - 1].insert(gram, Entry { log10_prob, log10_backoff });
        }
        if !ended || tables.is_empty() || tables.len() != declared.len() {
            return Err(Error::Parse("ARPA file is truncated".into()));
        }
        for (k, (t, &d)) in tables.iter().zip(&declared).enumerate() {
            if t.len() != d {
                return Err(Error::Parse(format!("{}-gram count {} differs from declared {d}", k + 1, t.len())));
            }
        }
        let lm = NGramLM { order: tables.len(), tables };
        for w in [BOS, EOS, UNK] {
            if !lm.tables[0].contains_key(&[w.to_string()][..]) {
                return Err(Error::Parse(format!("ARPA unigrams lack {w}")));
            }
        }
        Ok(lm)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_arpa())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_arpa(&fs::read_to_string(path)?)
    }
}

/// Train an interpolated Witten–Bell model of the given order on
/// whitespace-tokenized sentences.
pub fn train_ngram<S: AsRef<str>>(corpus: &[S], order: usize) -> Result<NGramLM> {
    if order == 0 {
        return Err(Error::Config("n-gram order must be at least 1".into()));
    }
    if corpus.is_empty() {
        return Err(Error::Input("language model corpus is empty".into()));
    }
    // counts[k][gram] for (k+1)-grams ending in a predicted token
    let mut counts: Vec<HashMap<Vec<String>, f64>> = vec![HashMap::new(); order];
    for sentence in corpus {
        let mut toks = vec![BOS.to_string()];
        for w in sentence.as_ref().split_whitespace() {
            if [BOS, EOS, UNK].contains(&w) {
                return Err(Error::Input(format!("corpus contains reserved token {w}")));
            }
            toks.push(w.to_string());
        }
        toks.push(EOS.to_string());
        for i in 1..toks.len() {
            for k in 0..order.min(i + 1) {
                *counts[k].entry(toks[i - k..=i].to_vec()).or_insert(0.0) += 1.0;
            }
        }
    }
    let mut words: Vec<String> = counts[0].keys().map(|g| g[0].clone()).collect();
    words.push(UNK.to_string());
    words.sort();
    words.dedup();
    let vocab_size = words.len() as f64;

    // history statistics: c(h) and N1+(h·) for each order
    let history_stats = |k: usize| {
        let mut stats: HashMap<Vec<String>, (f64, f64)> = HashMap::new();
        for (gram, &c) in &counts[k] {
            let s = stats.entry(gram[..k].to_vec()).or_insert((0.0, 0.0));
            s.0 += c;
            s.1 += 1.0;
        }
        stats
    };

    let mut lm = NGramLM { order, tables: vec![HashMap::new(); order] };
    let (total, types) = history_stats(0).remove(&Vec::new()).expect("corpus yields unigrams");
    for w in &words {
        let c = counts[0].get(&[w.clone()][..]).copied().unwrap_or(0.0);
        let p = (c + types / vocab_size) / (total + types);
        lm.tables[0].insert(vec![w.clone()], Entry { log10_prob: p.log10(), log10_backoff: 0.0 });
    }
    lm.tables[0].insert(vec![BOS.to_string()], Entry { log10_prob: LOG10_ZERO, log10_backoff: 0.0 });

    for k in 1..order {
        let stats = history_stats(k);
        for (h, &(c_h, n1)) in &stats {
            let bow = (n1 / (c_h + n1)).log10();
            lm.tables[k - 1].get_mut(h).expect("history is a stored lower-order n-gram").log10_backoff = bow;
        }
        let mut level = HashMap::with_capacity(counts[k].len());
        for (gram, &c) in &counts[k] {
            let (c_h, n1) = stats[&gram[..k]];
            let lower = 10f64.powf(lm.log10_prob(&gram[1..k], &gram[k]));
            let p = (c + n1 * lower) / (c_h + n1);
            level.insert(gram.clone(), Entry { log10_prob: p.log10(), log10_backoff: 0.0 });
        }
        lm.tables[k] = level;
    }
    Ok(lm)
}

#[cfg(test)]
mod tests;
