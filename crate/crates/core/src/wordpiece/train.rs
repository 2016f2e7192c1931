use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{WordpieceVocab, RESERVED, WORD_BEGIN};
use crate::error::{Error, Result};

/// Result of [`train_wpm`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub vocab: WordpieceVocab,
    /// Unigram-piece log-likelihood of the training corpus before any merge
    /// and after each accepted merge.
    pub log_likelihoods: Vec<f64>,
    /// Accepted merges in order, as (left, right) piece strings.
    pub merges: Vec<(String, String)>,
}

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Σ c·ln(c / N) over piece counts.
pub fn corpus_log_likelihood<'a>(counts: impl IntoIterator<Item = &'a f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0.0);
    for &c in counts {
        s += xlogx(c);
        n += c;
    }
    s - xlogx(n)
}

struct Trainer {
    /// Piece strings by training-local id.
    names: Vec<String>,
    lookup: HashMap<String, usize>,
    counts: Vec<f64>,
    /// Word types with frequency and current segmentation.
    words: Vec<(f64, Vec<usize>)>,
}

impl Trainer {
    fn intern(&mut self, s: String) -> usize {
        if let Some(&i) = self.lookup.get(&s) {
            return i;
        }
        self.lookup.insert(s.clone(), self.names.len());
        self.names.push(s);
        self.counts.push(0.0);
        self.names.len() - 1
    }

    /// Non-overlapping left-to-right occurrence counts of every adjacent pair.
    fn pair_counts(&self) -> BTreeMap<(usize, usize), f64> {
        let mut pairs = BTreeMap::new();
        let mut last_end: HashMap<(usize, usize), usize> = HashMap::new();
        for (freq, seq) in &self.words {
            last_end.clear();
            for i in 0..seq.len().saturating_sub(1) {
                let key = (seq[i], seq[i + 1]);
                if key.0 == key.1 && last_end.get(&key) == Some(&i) {
                    continue;
                }
                last_end.insert(key, i + 1);
                *pairs.entry(key).or_insert(0.0) += freq;
            }
        }
        pairs
    }

    fn gain(&self, (a, b): (usize, usize), m: f64) -> f64 {
        let merged = format!("{}{}", self.names[a], self.names[b]);
        let c_new = self.lookup.get(&merged).map_or(0.0, |&i| self.counts[i]);
        let n: f64 = self.counts.iter().sum();
        let mut ds = xlogx(c_new + m) - xlogx(c_new);
        if a == b {
            ds += xlogx(self.counts[a] - 2.0 * m) - xlogx(self.counts[a]);
        } else {
            ds += xlogx(self.counts[a] - m) - xlogx(self.counts[a]);
            ds += xlogx(self.counts[b] - m) - xlogx(self.counts[b]);
        }
        ds - (xlogx(n - m) - xlogx(n))
    }

    fn apply(&mut self, a: usize, b: usize) -> usize {
        let merged = format!("{}{}", self.names[a], self.names[b]);
        let new = self.intern(merged);
        for (freq, seq) in &mut self.words {
            let mut out = Vec::with_capacity(seq.len());
            let mut i = 0;
            while i < seq.len() {
                if i + 1 < seq.len() && seq[i] == a && seq[i + 1] == b {
                    out.push(new);
                    self.counts[a] -= *freq;
                    self.counts[b] -= *freq;
                    self.counts[new] += *freq;
                    i += 2;
                } else {
                    out.push(seq[i]);
                    i += 1;
                }
            }
            *seq = out;
        }
        new
    }
}

/// Grow a wordpiece inventory from characters by repeatedly applying the
/// within-word merge that most increases the corpus log-likelihood under a
/// maximum-likelihood unigram piece model.
///
/// Stops at `target_size` pieces (reserved symbols included) or when no
/// merge has positive gain.
pub fn train_wpm<S: AsRef<str>>(corpus: &[S], target_size: usize) -> Result<TrainOutcome> {
    let mut word_freq: BTreeMap<&str, f64> = BTreeMap::new();
    for line in corpus {
        for w in line.as_ref().split_whitespace() {
            *word_freq.entry(w).or_insert(0.0) += 1.0;
        }
    }
    if word_freq.is_empty() {
        return Err(Error::Config("wordpiece corpus has no words".into()));
    }
    let charset: BTreeSet<char> = word_freq.keys().flat_map(|w| w.chars()).collect();
    if charset.contains(&WORD_BEGIN) {
        return Err(Error::Config("corpus contains the word-begin marker".into()));
    }
    let base = RESERVED.len() + 2 * charset.len();
    if target_size < base {
        return Err(Error::Config(format!(
            "vocab size {target_size} below minimum {base} for {} characters",
            charset.len()
        )));
    }

    let mut t = Trainer { names: Vec::new(), lookup: HashMap::new(), counts: Vec::new(), words: Vec::new() };
    for &c in &charset {
        t.intern(format!("{WORD_BEGIN}{c}"));
        t.intern(c.to_string());
    }
    for (w, &freq) in &word_freq {
        let seq: Vec<usize> = w
            .chars()
            .enumerate()
            .map(|(i, c)| if i == 0 { t.lookup[&format!("{WORD_BEGIN}{c}")] } else { t.lookup[&c.to_string()] })
            .collect();
        for &p in &seq {
            t.counts[p] += freq;
        }
        t.words.push((freq, seq));
    }

    let mut log_likelihoods = vec![corpus_log_likelihood(&t.counts)];
    let mut merges = Vec::new();
    let mut merged_names: Vec<String> = Vec::new();
    let mut size = base;
    while size < target_size {
        let mut best: Option<((usize, usize), f64)> = None;
        for (pair, m) in t.pair_counts() {
            let g = t.gain(pair, m);
            let better = match best {
                None => true,
                Some((bp, bg)) => {
                    g > bg || (g == bg && (&t.names[pair.0], &t.names[pair.1]) < (&t.names[bp.0], &t.names[bp.1]))
                }
            };
            if better {
                best = Some((pair, g));
            }
        }
        let Some(((a, b), gain)) = best else { break };
        if gain <= 1e-12 {
            break;
        }
        let before = t.names.len();
        let new = t.apply(a, b);
        merges.push((t.names[a].clone(), t.names[b].clone()));
        if t.names.len() > before {
            merged_names.push(t.names[new].clone());
            size += 1;
        }
        log_likelihoods.push(corpus_log_likelihood(&t.counts));
    }

    let vocab = WordpieceVocab::from_charset_and_merges(&charset, &merged_names)?;
    Ok(TrainOutcome { vocab, log_likelihoods, merges })
}
