//! Command-line experiment runner.
//!
//! ```text
//! las [--seed N] [--config FILE] [--preset E1..E8] [--set key=value]... <command>
//! ```
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 for bad
//! data or I/O, 4 for runtime failures.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod manifest;

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::lm::RescoreWeights;
use crate::wordpiece::WordpieceVocab;
use commands::WeightSource;
use config::{resolve, Overrides};
use experiment::{ladder_table, PRESET_NAMES};

#[derive(Debug, Parser)]
#[command(name = "las", version, about = "Listen, Attend and Spell speech recognition toolkit")]
pub struct Cli {
    /// Seed for parameter init, batching and sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Experiment preset, E1 through E8.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Override one configuration value, e.g. `--set train.ce_steps=200`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the resolved configuration as TOML.
    Config,
    /// Write synthetic spoken-digit manifests and LM text.
    ToyData {
        #[arg(long)]
        out: PathBuf,
    },
    /// Featurize a manifest and segment its transcripts.
    Prepare {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Train a wordpiece inventory on a text corpus.
    WpmTrain {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Text lines (stdin or --input) to piece ids.
    WpmEncode {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Piece-id lines (stdin or --input) to text.
    WpmDecode {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train an n-gram LM and write it in ARPA format.
    LmTrain {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train (or resume) a model on a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Beam-decode a manifest into an N-best file.
    Decode {
        /// Directory holding model.bin and model.json.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        nbest: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
    },
    /// Rerank an N-best file with an n-gram LM and write top-1 hypotheses.
    Rescore {
        #[arg(long)]
        nbest: PathBuf,
        #[arg(long)]
        lm: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        /// Tune the weights on this dev N-best file instead.
        #[arg(long, requires = "dev_manifest")]
        dev_nbest: Option<PathBuf>,
        #[arg(long, requires = "dev_nbest")]
        dev_manifest: Option<PathBuf>,
    },
    /// Score hypothesis files against a manifest.
    Eval {
        #[arg(long)]
        refs: PathBuf,
        /// `utt_id<TAB>text` files; WERR compares each with the previous one.
        #[arg(long, required = true)]
        hyps: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the preset ladder on the toy task and print a summary table.
    Ladder {
        /// Comma-separated presets to run, in order.
        #[arg(long, value_delimiter = ',', default_values_t = PRESET_NAMES.map(String::from))]
        presets: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn open_input(path: Option<&PathBuf>) -> Result<Box<dyn io::BufRead>> {
    Ok(match path {
        Some(p) => Box::new(BufReader::new(
            fs::File::open(p).map_err(|e| Error::Input(format!("cannot open {}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdin().lock()),
    })
}

/// Execute a parsed command line.
pub fn execute(cli: Cli) -> Result<()> {
    let overrides = Overrides { preset: cli.preset, config: cli.config, sets: cli.sets, seed: cli.seed };
    let cfg = resolve(&overrides)?;
    match cli.command {
        Command::Config => emit(&cfg.to_toml()?, None),
        Command::ToyData { out } => commands::cmd_toy_data(&cfg, &out),
        Command::Prepare { manifest, out, vocab } => {
            let n = commands::cmd_prepare(&cfg, &manifest, vocab.as_deref(), &out)?.len();
            log::info!("prepared {n} utterances in {}", out.display());
            Ok(())
        }
        Command::WpmTrain { corpus, size, out } => {
            let v = commands::cmd_wpm_train(&corpus, size, &out)?;
            log::info!("wrote {} pieces to {}", v.len(), out.display());
            Ok(())
        }
        Command::WpmEncode { vocab, input } => {
            commands::cmd_wpm_encode(&WordpieceVocab::load(&vocab)?, open_input(input.as_ref())?, io::stdout().lock())
        }
        Command::WpmDecode { vocab, input } => {
            commands::cmd_wpm_decode(&WordpieceVocab::load(&vocab)?, open_input(input.as_ref())?, io::stdout().lock())
        }
        Command::LmTrain { corpus, order, out } => commands::cmd_lm_train(&corpus, order, &out).map(|_| ()),
        Command::Train { manifest, vocab, out } => {
            let s = commands::cmd_train(&cfg, &manifest, &vocab, &out)?;
            log::info!("finished at step {} (final loss {:?})", s.steps, s.final_loss);
            Ok(())
        }
        Command::Decode { checkpoint, manifest, vocab, out, beam, nbest, max_len } => {
            let mut b = cfg.beam;
            b.beam_width = beam.unwrap_or(b.beam_width);
            b.nbest = nbest.unwrap_or(b.nbest);
            b.max_len = max_len.or(b.max_len);
            b.validate()?;
            commands::cmd_decode(&checkpoint, &manifest, &vocab, &b, &cfg.toy.synth, &out).map(|_| ())
        }
        Command::Rescore { nbest, lm, out, lambda, gamma, dev_nbest, dev_manifest } => {
            let source = match (dev_nbest, dev_manifest) {
                (Some(nbest), Some(manifest)) => WeightSource::Tune { nbest, manifest },
                _ => WeightSource::Fixed(RescoreWeights { lambda, gamma }),
            };
            let w = commands::cmd_rescore(&nbest, &lm, &source, &out)?;
            log::info!("rescored with lambda {} gamma {}", w.lambda, w.gamma);
            Ok(())
        }
        Command::Eval { refs, hyps, out } => emit(&commands::format_eval(&commands::cmd_eval(&refs, &hyps)?), out.as_ref()),
        Command::Ladder { presets, out } => {
            let overrides = Overrides { preset: None, ..overrides };
            emit(&ladder_table(&commands::cmd_ladder(&overrides, &presets)?), out.as_ref())
        }
    }
}

/// Parse `args` (program name first), run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
