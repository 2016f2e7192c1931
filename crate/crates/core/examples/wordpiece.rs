//! Train a wordpiece inventory, segment text and detokenize it back.
//!
//! cargo run --release --example wordpiece [size]

use las::wordpiece::{grapheme_vocab, train_wpm};

const CORPUS: &[&str] = &[
    "call mom on her cell phone",
    "what is the weather in new york",
    "navigate to the nearest coffee shop",
    "play the new album by the rolling stones",
    "what time is it in new delhi",
    "call the coffee shop",
    "weather tomorrow morning in york",
    "play some music",
];

fn main() -> las::Result<()> {
    let size = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(80);
    let outcome = train_wpm(CORPUS, size)?;
    let ll = &outcome.log_likelihoods;
    println!("{} pieces after {} merges; corpus log-likelihood {:.1} -> {:.1}", outcome.vocab.len(), outcome.merges.len(), ll[0], ll[ll.len() - 1]);
    for (a, b) in outcome.merges.iter().take(8) {
        println!("  merge {a:?} + {b:?}");
    }

    let graphemes = grapheme_vocab(CORPUS.iter().flat_map(|s| s.chars()).filter(|c| !c.is_whitespace()))?;
    for text in ["call the weather shop", "play jazz"] {
        let seg = outcome.vocab.segment(text);
        let pieces: Vec<&str> = seg.ids.iter().filter_map(|&id| outcome.vocab.piece(id)).collect();
        println!("{text:?}");
        println!("  wordpieces {pieces:?} (unknown chars {:?})", seg.unknown);
        println!("  graphemes  {} ids vs {} wordpiece ids", graphemes.segment(text).ids.len(), seg.ids.len());
        println!("  detokenized {:?}", outcome.vocab.detokenize(&seg.ids).text);
    }
    Ok(())
}
