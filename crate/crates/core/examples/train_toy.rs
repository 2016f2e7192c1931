//! Train a desk-scale LAS model on the synthetic spoken-digit task and report test WER.
//!
//! cargo run --release --example train_toy -- [ce_steps] [eval_every]

use std::time::Instant;

use las::cli::experiment::{build_toy, ToyConfig, Units};
use las::decoding::BeamConfig;
use las::model::{Las, ModelConfig};
use las::training::{evaluate, TrainConfig, Trainer};

fn main() -> las::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().expect("integer argument"));
    let ce_steps = args.next().unwrap_or(600);
    let eval_every = args.next().unwrap_or(100);

    let toy = ToyConfig::default();
    let t0 = Instant::now();
    let data = build_toy(&toy, Units::Wordpiece)?;
    println!("{} train / {} test utterances, {} wordpieces ({:.1}s)", data.train.len(), data.test.len(), data.vocab.len(), t0.elapsed().as_secs_f64());

    let model = Las::new(ModelConfig { vocab_size: data.vocab.len(), ..ModelConfig::desk() }, 1)?;
    let mut trainer = Trainer::new(model, TrainConfig { ce_steps, ..TrainConfig::default() })?;
    let beam = BeamConfig::default();
    let t0 = Instant::now();
    while !trainer.is_done() {
        let rec = trainer.step(&data.train, &data.vocab)?;
        if rec.step % eval_every == 0 || trainer.is_done() {
            let wer = evaluate(trainer.model(), &data.test, &data.vocab, &beam)?.wer;
            println!(
                "step {:>5}  loss {:.4}  lr {:.2e}  |g| {:.3}  test WER {:.2}%  ({:.0}s)",
                rec.step,
                rec.loss,
                rec.lr,
                rec.grad_norm,
                100.0 * wer.rate(),
                t0.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
