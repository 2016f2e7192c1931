use proptest::prelude::*;

use super::*;

const CORPUS: [&str; 6] = ["one two three", "one two", "two three four", "one two three", "four", "three one two"];

#[test]
fn single_type_unigram_closed_form() {
    let lm = train_ngram(&["a a a"], 1).unwrap();
    // tokens a a a </s>: c(a) = 3 of 4, two types, vocab {a, </s>, <unk>}
    let want = (3.0 + 2.0 / 3.0) / (4.0 + 2.0);
    assert!((lm.cond_logprob(&[], "a").exp() - want).abs() < 1e-12);
    let unk = (0.0 + 2.0 / 3.0) / 6.0;
    assert!((lm.cond_logprob(&[], "zzz").exp() - unk).abs() < 1e-12);
    assert!(lm.cond_logprob(&[], "a") > lm.cond_logprob(&[], "</s>"));
}

#[test]
fn equal_counts_give_equal_probabilities() {
    let lm = train_ngram(&["x y", "y x"], 1).unwrap();
    assert_eq!(lm.cond_logprob(&[], "x"), lm.cond_logprob(&[], "y"));
}

#[test]
fn interpolation_matches_hand_computation() {
    let lm = train_ngram(&["a b", "a c"], 2).unwrap();
    // unigram: tokens a b </s> a c </s>; total 6, 4 types, |V| = 5
    let p1 = |c: f64| (c + 4.0 / 5.0) / 10.0;
    // history "a": c = 2, N1+ = 2 (b, c)
    let pb_a = (1.0 + 2.0 * p1(1.0)) / 4.0;
    assert!((lm.cond_logprob(&["a"], "b").exp() - pb_a).abs() < 1e-12);
    let pa_a = 2.0 * p1(2.0) / 4.0;
    assert!((lm.cond_logprob(&["a"], "a").exp() - pa_a).abs() < 1e-12);
    // unseen history backs off with weight one
    assert!((lm.cond_logprob(&["c"], "a").exp() - (2.0 * p1(2.0) / 4.0)).abs() < 1e-12);
}

#[test]
fn every_history_is_normalized() {
    for order in 1..=5 {
        let lm = train_ngram(&CORPUS, order).unwrap();
        assert!(lm.max_normalization_error() < 1e-9, "order {order}");
    }
}

#[test]
fn empty_sentence_scores_only_the_end() {
    let lm = train_ngram(&CORPUS, 3).unwrap();
    let empty: [&str; 0] = [];
    assert_eq!(lm.sentence_logprob(&empty), lm.cond_logprob(&["<s>"], "</s>"));
}

#[test]
fn training_sentence_beats_its_permutations() {
    let corpus = ["the cat sat", "the cat sat", "the cat sat", "a dog ran"];
    let lm = train_ngram(&corpus, 3).unwrap();
    let best = lm.sentence_logprob(&["the", "cat", "sat"]);
    for p in [["cat", "the", "sat"], ["sat", "cat", "the"], ["the", "sat", "cat"], ["cat", "sat", "the"], ["sat", "the", "cat"]] {
        assert!(best >= lm.sentence_logprob(&p));
    }
}

#[test]
fn unknown_words_use_the_unknown_symbol() {
    let lm = train_ngram(&CORPUS, 2).unwrap();
    assert_eq!(lm.sentence_logprob(&["one", "zebra"]), lm.sentence_logprob(&["one", "<unk>"]));
    assert!(lm.vocab().contains(&"<unk>"));
    assert!(!lm.vocab().contains(&"<s>"));
}

#[test]
fn invalid_training_inputs() {
    assert!(matches!(train_ngram(&CORPUS, 0), Err(Error::Config(_))));
    let empty: [&str; 0] = [];
    assert!(matches!(train_ngram(&empty, 2), Err(Error::Input(_))));
    assert!(matches!(train_ngram(&["a </s> b"], 2), Err(Error::Input(_))));
}

#[test]
fn arpa_round_trip() {
    let lm = train_ngram(&CORPUS, 5).unwrap();
    let text = lm.to_arpa();
    assert!(text.contains("\\data\\\nngram 1="));
    let back = NGramLM::from_arpa(&text).unwrap();
    assert_eq!(back, lm);
    assert_eq!(back.to_arpa(), text);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lm.arpa");
    lm.save(&path).unwrap();
    assert_eq!(NGramLM::load(&path).unwrap(), lm);
}

#[test]
fn malformed_arpa_is_rejected() {
    let good = train_ngram(&CORPUS, 2).unwrap().to_arpa();
    let truncated = good.replace("\\end\\", "");
    let miscounted = good.replacen("ngram 1=", "ngram 1=9", 1);
    let nonsense = good.replacen("\\1-grams:\n", "\\1-grams:\nabc\tone\n", 1);
    for bad in [truncated, miscounted, nonsense, String::from("hello")] {
        assert!(matches!(NGramLM::from_arpa(&bad), Err(Error::Parse(_))));
    }
}

fn cand(text: &str, lp: f64, tokens: Vec<usize>) -> Candidate {
    Candidate { text: text.into(), tokens, log_prob: lp }
}

fn nbest() -> Vec<Candidate> {
    vec![
        cand("one two", -1.0, vec![4, 5, 1]),
        cand("one too", -1.2, vec![4, 6, 1]),
        cand("one two three", -1.5, vec![4, 5, 7, 1]),
        cand("won", -3.0, vec![8, 1]),
    ]
}

#[test]
fn identity_weights_keep_first_pass_order() {
    let lm = train_ngram(&CORPUS, 3).unwrap();
    assert_eq!(rescore(&nbest(), &lm, &RescoreWeights::default()), nbest());
}

#[test]
fn lm_breaks_acoustic_ties() {
    let lm = train_ngram(&CORPUS, 3).unwrap();
    let tied = vec![cand("two one", -2.0, vec![9]), cand("one two", -2.0, vec![10])];
    for lambda in [1e-6, 0.1, 1.0, 10.0] {
        let out = rescore(&tied, &lm, &RescoreWeights { lambda, gamma: 0.0 });
        assert_eq!(out[0].text, "one two");
    }
}

#[test]
fn large_word_reward_picks_the_longest() {
    let lm = train_ngram(&CORPUS, 3).unwrap();
    let out = rescore(&nbest(), &lm, &RescoreWeights { lambda: 0.5, gamma: 1e6 });
    assert_eq!(out[0].text, "one two three");
}

#[test]
fn rescoring_ignores_input_order() {
    let lm = train_ngram(&CORPUS, 3).unwrap();
    let w = RescoreWeights { lambda: 0.3, gamma: 0.2 };
    let mut rev = nbest();
    rev.reverse();
    assert_eq!(rescore(&rev, &lm, &w), rescore(&nbest(), &lm, &w));
}

#[test]
fn tuning_never_loses_to_identity() {
    let lm = train_ngram(&CORPUS, 3).unwrap();
    let dev = vec![
        vec![cand("one too", -1.0, vec![1]), cand("one two", -1.1, vec![2])],
        vec![cand("three", -0.5, vec![3]), cand("two three", -0.9, vec![4])],
    ];
    let refs = ["one two", "two three"];
    let r = tune_weights(&dev, &refs, &lm, &default_grid(), &default_grid()).unwrap();
    assert!(r.wer.errors() <= r.baseline.errors());
    assert_eq!(r.baseline.errors(), 2);
    assert_eq!(r.wer.errors(), 0);
    assert!(r.weights.lambda > 0.0);

    let already = vec![vec![cand("one two", -1.0, vec![1])]];
    let r = tune_weights(&already, &["one two"], &lm, &default_grid(), &default_grid()).unwrap();
    assert_eq!(r.weights, RescoreWeights::default());
    assert!(tune_weights(&already, &refs, &lm, &[0.1], &[0.1]).is_err());
}

proptest! {
    #[test]
    fn normalization_holds_on_random_corpora(
        sents in prop::collection::vec(prop::collection::vec(0usize..5, 0..6), 1..8),
        order in 1usize..4,
    ) {
        let words = ["p", "q", "r", "s", "t"];
        let corpus: Vec<String> = sents.iter().map(|s| s.iter().map(|&i| words[i]).collect::<Vec<_>>().join(" ")).collect();
        let lm = train_ngram(&corpus, order).unwrap();
        prop_assert!(lm.max_normalization_error() < 1e-6);
    }

    #[test]
    fn raising_lm_score_never_lowers_rank(boost in 0.0f64..5.0, idx in 0usize..4) {
        let lm = train_ngram(&CORPUS, 2).unwrap();
        let w = RescoreWeights { lambda: 0.7, gamma: 0.1 };
        let base = rescore(&nbest(), &lm, &w);
        let target = nbest()[idx].clone();
        let rank = base.iter().position(|c| *c == target).unwrap();
        // an LM gain of `boost` is equivalent to a first-pass gain of λ·boost
        let mut better = nbest();
        better[idx].log_prob += w.lambda * boost;
        let after = rescore(&better, &lm, &w);
        let new_rank = after.iter().position(|c| c.tokens == target.tokens).unwrap();
        prop_assert!(new_rank <= rank);
    }
}
