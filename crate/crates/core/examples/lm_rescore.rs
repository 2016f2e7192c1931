//! Train a trigram LM, write it as ARPA, and rerank an N-best list.
//!
//! cargo run --release --example lm_rescore

use las::lm::{default_grid, rescore, train_ngram, tune_weights, Candidate, RescoreWeights};

fn cand(text: &str, log_prob: f64) -> Candidate {
    Candidate { text: text.into(), tokens: Vec::new(), log_prob }
}

fn main() -> las::Result<()> {
    let corpus = [
        "call mom", "call mom now", "call dad", "what is the weather", "what is the time", "play music", "play some music",
        "what is the weather today", "call mom please",
    ];
    let lm = train_ngram(&corpus, 3)?;
    println!("trigram LM over {} words; max normalization error {:.1e}", lm.vocab().len(), lm.max_normalization_error());
    let arpa = lm.to_arpa();
    println!("{}", arpa.lines().take(6).collect::<Vec<_>>().join("\n"));

    let nbest = vec![cand("call tom", -1.1), cand("call mom", -1.3), cand("cole mom", -2.0), cand("call mom now", -2.4)];
    for w in [RescoreWeights::default(), RescoreWeights { lambda: 0.5, gamma: 0.0 }, RescoreWeights { lambda: 0.5, gamma: 1.0 }] {
        let top = rescore(&nbest, &lm, &w);
        println!("λ={:.1} γ={:.1}: {:?}", w.lambda, w.gamma, top.iter().map(|c| c.text.as_str()).collect::<Vec<_>>());
    }

    let dev = vec![nbest.clone(), vec![cand("play music", -0.4), cand("play some music", -0.9)]];
    let tuned = tune_weights(&dev, &["call mom", "play some music"], &lm, &default_grid(), &default_grid())?;
    println!(
        "tuned λ={} γ={}: dev errors {} -> {}",
        tuned.weights.lambda,
        tuned.weights.gamma,
        tuned.baseline.errors(),
        tuned.wer.errors()
    );
    Ok(())
}
