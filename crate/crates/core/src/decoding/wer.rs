use serde::{Deserialize, Serialize};

/// Word error counts against a reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WerBreakdown {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub ref_words: usize,
}

impl WerBreakdown {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// `(S + I + D) / max(ref_words, 1)`
    pub fn rate(&self) -> f64 {
        self.errors() as f64 / self.ref_words.max(1) as f64
    }

    pub fn merge(&mut self, other: &WerBreakdown) {
        self.substitutions += other.substitutions;
        self.insertions += other.insertions;
        self.deletions += other.deletions;
        self.ref_words += other.ref_words;
    }
}

/// Levenshtein alignment with unit costs.
///
/// The backtrace prefers substitution (or match), then deletion, then
/// insertion whenever several moves reach the same cost.
pub fn word_edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> WerBreakdown {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut dp = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        dp[i * w] = i;
    }
    for j in 0..=m {
        dp[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = dp[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = dp[(i - 1) * w + j] + 1;
            let ins = dp[i * w + j - 1] + 1;
            dp[i * w + j] = sub.min(del).min(ins);
        }
    }
    let mut out = WerBreakdown { ref_words: n, ..Default::default() };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * w + j];
        if i > 0 && j > 0 {
            let differ = reference[i - 1] != hypothesis[j - 1];
            if dp[(i - 1) * w + j - 1] + usize::from(differ) == here {
                out.substitutions += usize::from(differ);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[(i - 1) * w + j] + 1 == here {
            out.deletions += 1;
            i -= 1;
        } else {
            out.insertions += 1;
            j -= 1;
        }
    }
    out
}

/// Word-level comparison of two whitespace-separated strings.
pub fn sentence_wer(reference: &str, hypothesis: &str) -> WerBreakdown {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    word_edit_distance(&r, &h)
}

/// Pooled counts over a corpus: total errors over total reference words.
///
/// # Panics
/// If `refs` and `hyps` differ in length.
pub fn corpus_wer<R: AsRef<str>, H: AsRef<str>>(refs: &[R], hyps: &[H]) -> WerBreakdown {
    assert_eq!(refs.len(), hyps.len(), "reference and hypothesis counts differ");
    let mut total = WerBreakdown::default();
    for (r, h) in refs.iter().zip(hyps) {
        total.merge(&sentence_wer(r.as_ref(), h.as_ref()));
    }
    total
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn oracle(r: &[u8], h: &[u8]) -> usize {
        match (r.split_first(), h.split_first()) {
            (None, _) => h.len(),
            (_, None) => r.len(),
            (Some((a, rr)), Some((b, hh))) => {
                let sub = oracle(rr, hh) + usize::from(a != b);
                sub.min(oracle(rr, h) + 1).min(oracle(r, hh) + 1)
            }
        }
    }

    #[test]
    fn identical_and_single_substitution() {
        let b = sentence_wer("a b c", "a b c");
        assert_eq!((b.substitutions, b.insertions, b.deletions, b.rate()), (0, 0, 0, 0.0));
        let b = sentence_wer("a b c", "a x c");
        assert_eq!((b.substitutions, b.insertions, b.deletions), (1, 0, 0));
        assert!((b.rate() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_sides() {
        let b = sentence_wer("", "x y");
        assert_eq!((b.insertions, b.ref_words, b.rate()), (2, 0, 2.0));
        let b = sentence_wer("a b", "");
        assert_eq!(b.deletions, 2);
    }

    #[test]
    fn tie_prefers_substitution_then_deletion() {
        // "a b" vs "c": one substitution plus one deletion either way round.
        let b = sentence_wer("a b", "c");
        assert_eq!((b.substitutions, b.deletions, b.insertions), (1, 1, 0));
        let b = sentence_wer("a", "b c");
        assert_eq!((b.substitutions, b.deletions, b.insertions), (1, 0, 1));
    }

    #[test]
    fn corpus_wer_pools_counts() {
        let refs = ["a", "a b c d"];
        let hyps = ["b", "a b c d"];
        let b = corpus_wer(&refs, &hyps);
        assert_eq!(b.errors(), 1);
        assert!((b.rate() - 0.2).abs() < 1e-15);
        assert_eq!(corpus_wer(&refs, &refs).rate(), 0.0);
    }

    proptest! {
        #[test]
        fn matches_recursive_oracle(r in prop::collection::vec(0u8..4, 0..7), h in prop::collection::vec(0u8..4, 0..7)) {
            prop_assert_eq!(word_edit_distance(&r, &h).errors(), oracle(&r, &h));
        }

        #[test]
        fn swapping_roles_swaps_insertions_and_deletions(r in prop::collection::vec(0u8..4, 0..8), h in prop::collection::vec(0u8..4, 0..8)) {
            let a = word_edit_distance(&r, &h);
            let b = word_edit_distance(&h, &r);
            prop_assert_eq!(a.errors(), b.errors());
            prop_assert_eq!(a.insertions as i64 - a.deletions as i64, b.deletions as i64 - b.insertions as i64);
            prop_assert_eq!(a.insertions as i64 - a.deletions as i64, h.len() as i64 - r.len() as i64);
        }

        #[test]
        fn triangle_inequality(a in prop::collection::vec(0u8..3, 0..6), b in prop::collection::vec(0u8..3, 0..6), c in prop::collection::vec(0u8..3, 0..6)) {
            let ab = word_edit_distance(&a, &b).errors();
            let bc = word_edit_distance(&b, &c).errors();
            let ac = word_edit_distance(&a, &c).errors();
            prop_assert!(ac <= ab + bc);
        }
    }
}
