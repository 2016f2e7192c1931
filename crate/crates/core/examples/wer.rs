//! Word error rate with substitution, deletion and insertion counts.
//!
//! cargo run --release --example wer

use las::decoding::{corpus_wer, sentence_wer};

fn main() {
    let pairs = [
        ("what is the weather in new york", "what is the weather in new york"),
        ("call mom on her cell phone", "call tom on her cell"),
        ("play the rolling stones", "play the the rolling stone"),
        ("navigate home", ""),
    ];
    println!("{:<36} {:<32} {:>3} {:>3} {:>3} {:>7}", "reference", "hypothesis", "S", "D", "I", "WER");
    for (r, h) in pairs {
        let w = sentence_wer(r, h);
        println!("{r:<36} {h:<32} {:>3} {:>3} {:>3} {:>6.1}%", w.substitutions, w.deletions, w.insertions, 100.0 * w.rate());
    }
    let refs: Vec<&str> = pairs.iter().map(|p| p.0).collect();
    let hyps: Vec<&str> = pairs.iter().map(|p| p.1).collect();
    let total = corpus_wer(&refs, &hyps);
    println!("corpus: {} errors over {} words = {:.2}%", total.errors(), total.ref_words, 100.0 * total.rate());
}
