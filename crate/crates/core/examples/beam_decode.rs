//! Beam search against greedy decoding and exhaustive enumeration on a
//! small trained model.
//!
//! cargo run --release --example beam_decode

use las::autograd::Tensor;
use las::decoding::{beam_search, brute_force_decode, greedy_decode, BeamConfig};
use las::model::{Las, ModelConfig};
use las::training::{TrainConfig, Trainer, Utterance};
use las::wordpiece::grapheme_vocab;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> las::Result<()> {
    // Four outputs: sos, eos and two labels (ids 2 and 3) marked in the input.
    let cfg = ModelConfig { vocab_size: 4, ..ModelConfig::micro() };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data: Vec<Utterance> = (0..32)
        .map(|i| {
            let mut tokens: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(2..4)).collect();
            let frames = tokens.len() + 2;
            let mut x: Vec<f64> = (0..frames * cfg.input_dim).map(|_| rng.gen_range(-0.3..0.3)).collect();
            for (t, &tok) in tokens.iter().enumerate() {
                x[(t + 1) * cfg.input_dim + tok] += 2.0;
            }
            tokens.push(cfg.eos_id);
            Utterance { id: format!("u{i}"), features: Tensor::new(vec![frames, cfg.input_dim], x).unwrap(), tokens, transcript: String::new() }
        })
        .collect();
    let train = TrainConfig { batch_size: 8, ce_steps: 150, peak_lr: 0.02, lr_ramp_steps: 10, ss_ramp_steps: 100, ..TrainConfig::default() };
    let mut trainer = Trainer::new(Las::new(cfg.clone(), 2)?, train)?;
    trainer.run(&data, &grapheme_vocab(std::iter::empty::<char>())?, None)?;
    let model = trainer.into_model();

    for u in &data[..3] {
        println!("{}: reference {:?}", u.id, u.tokens);
        let greedy = greedy_decode(&model, &u.features, 4)?;
        println!("  greedy        {:?} {:.4}", greedy.tokens, greedy.log_prob);
        for width in [1, 2, 8] {
            let hyps = beam_search(&model, &u.features, &BeamConfig { beam_width: width, nbest: width.min(3), max_len: Some(4) })?;
            let shown: Vec<String> = hyps.iter().map(|h| format!("{:?} {:.4}", h.tokens, h.log_prob)).collect();
            println!("  beam {width:<3}      {}", shown.join(" | "));
        }
        let exact = brute_force_decode(&model, &u.features, 4)?;
        let shown: Vec<String> = exact.iter().take(3).map(|h| format!("{:?} {:.4}", h.tokens, h.log_prob)).collect();
        println!("  exhaustive    {}", shown.join(" | "));
    }
    Ok(())
}
