//! Multi-head additive attention over a random encoder memory.
//!
//! cargo run --release --example attention

use las::autograd::Tape;
use las::model::{Las, ModelConfig};

fn main() -> las::Result<()> {
    let cfg = ModelConfig { attention_heads: 4, init_scale: 1.0, ..ModelConfig::micro() };
    let model = Las::new(cfg.clone(), 3)?;
    let x = las::autograd::Tensor::matrix(6, cfg.input_dim, (0..6 * cfg.input_dim).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect())?;

    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let mem = model.listen(&mut tape, &bound, &x)?;
    let mut state = model.initial_state(&mut tape);
    let mut prev = cfg.sos_id;
    for step in 0..3 {
        let out = model.decode_step(&mut tape, &bound, &mem, &state, prev)?;
        println!("step {step}");
        for (h, w) in out.attention.weights.iter().enumerate() {
            let alpha: Vec<String> = tape.value(*w).data().iter().map(|a| format!("{a:.4}")).collect();
            println!("  head {h}: [{}]", alpha.join(", "));
        }
        let logits = tape.value(out.logits).data();
        prev = (0..logits.len()).max_by(|&a, &b| logits[a].total_cmp(&logits[b])).unwrap_or(cfg.eos_id);
        state = out.state;
    }
    Ok(())
}
