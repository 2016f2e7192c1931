//! Run part of the E1..E8 ladder on a reduced toy task and print the table.
//!
//! cargo run --release --example ladder -- [presets] [ce_steps]
//! e.g. `-- E1,E2,E3 400`. Defaults to all presets at 300 CE steps.

use las::cli::commands::cmd_ladder;
use las::cli::config::Overrides;
use las::cli::experiment::{ladder_table, PRESET_NAMES};

fn main() -> las::Result<()> {
    let mut args = std::env::args().skip(1);
    let presets: Vec<String> = match args.next() {
        Some(list) => list.split(',').map(str::to_string).collect(),
        None => PRESET_NAMES.iter().map(|s| s.to_string()).collect(),
    };
    let ce_steps = args.next().unwrap_or_else(|| "300".into());
    let overrides = Overrides {
        sets: vec!["toy.n_train=600".into(), "toy.n_dev=60".into(), "toy.n_test=100".into(), format!("train.ce_steps={ce_steps}")],
        ..Overrides::default()
    };
    let results = cmd_ladder(&overrides, &presets)?;
    print!("{}", ladder_table(&results));
    for r in &results {
        println!(
            "{}: {} steps, {} rejected, {:.0}s{}",
            r.name,
            r.train.steps,
            r.train.rejected_steps,
            r.train.seconds,
            r.weights.map(|w| format!(", LM weights λ={} γ={}", w.lambda, w.gamma)).unwrap_or_default()
        );
    }
    Ok(())
}
