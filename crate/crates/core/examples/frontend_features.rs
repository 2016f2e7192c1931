//! Waveform to stacked log-mel features, plus the synthetic digit task.
//!
//! cargo run --release --example frontend_features [path.wav]

use std::f64::consts::PI;

use las::frontend::{featurize, read_features, read_wav, write_features, write_wav, SynthConfig, SynthTask, Waveform, SAMPLE_RATE};

fn main() -> las::Result<()> {
    let wave = match std::env::args().nth(1) {
        Some(path) => read_wav(path.as_ref())?,
        None => {
            // Half a second of a 440 Hz tone gliding to 880 Hz.
            let n = SAMPLE_RATE as usize / 2;
            let samples = (0..n)
                .map(|i| {
                    let t = i as f64 / SAMPLE_RATE as f64;
                    0.3 * (2.0 * PI * (440.0 * t + 440.0 * t * t)).sin()
                })
                .collect();
            Waveform::new(samples, SAMPLE_RATE)?
        }
    };
    let feats = featurize(&wave)?;
    println!(
        "{} samples at {} Hz -> {} frames of {} dims every {} ms",
        wave.samples.len(),
        wave.sample_rate,
        feats.num_frames(),
        feats.dim(),
        feats.frame_shift_ms
    );

    let dir = std::env::temp_dir().join("las-frontend-example");
    std::fs::create_dir_all(&dir)?;
    write_wav(&dir.join("tone.wav"), &wave)?;
    write_features(&dir.join("tone.feat"), &feats)?;
    let back = read_features(&dir.join("tone.feat"), feats.frame_shift_ms)?;
    println!("feature file round trip exact: {}", back == feats);

    let task = SynthTask::digits(SynthConfig::default());
    let (synth, transcript) = task.synth_utterance(&["four", "two"], 9)?;
    println!("synthetic {:?}: {} frames × {} dims", transcript, synth.num_frames(), synth.dim());
    Ok(())
}
