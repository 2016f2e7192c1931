//! Listen, attend and spell.
//!
//! The listener is a stack of LSTMs over feature frames (optionally
//! bidirectional). The attender is multi-head additive attention over the
//! listener output. The speller is an LSTM stack fed with the previous token
//! embedding concatenated with the previous attention context; its top
//! state queries the attender, and `[state; context]` is projected to
//! vocabulary logits.

mod attention;
mod config;
mod lstm;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use attention::{AttentionMemory, AttentionParams, AttentionResult, HeadParams};
pub use config::ModelConfig;
pub use lstm::{lstm_cell, lstm_sequence, LstmParams, LstmState};

use crate::autograd::{checkpoint, BoundParams, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy)]
enum Init {
    Uniform,
    Zeros,
    /// Zeros with the forget-gate block of an LSTM bias set to 1.
    ForgetBias(usize),
}

#[derive(Clone, Debug, PartialEq)]
struct LasIds {
    /// `[layer][direction]`
    enc: Vec<Vec<LstmParams>>,
    attention: AttentionParams,
    embedding: ParamId,
    dec: Vec<LstmParams>,
    w_out: ParamId,
    b_out: ParamId,
}

/// Listener output for one utterance.
#[derive(Clone, Copy, Debug)]
pub struct EncoderOutput {
    /// `[T × H]`
    pub h_enc: Var,
    /// Number of valid frames.
    pub len: usize,
}

/// Speller recurrent state plus the previous attention context.
#[derive(Clone, Debug)]
pub struct DecoderState {
    pub layers: Vec<LstmState>,
    /// `[1 × C]`
    pub context: Var,
}

/// Result of one speller step.
#[derive(Clone, Debug)]
pub struct StepOutput {
    /// `[1 × V]`
    pub logits: Var,
    pub state: DecoderState,
    pub attention: AttentionResult,
}

/// Teacher-forced sequence score.
#[derive(Clone, Debug)]
pub struct SequenceScore {
    /// Scalar `log P(y | x)`.
    pub total: Var,
    /// Per-step `log P(y_i | y_<i, x)` scalars.
    pub steps: Vec<Var>,
}

/// The full network with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Las {
    cfg: ModelConfig,
    params: ParamStore,
    ids: LasIds,
}

fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let mut out = Vec::new();
    let lstm = |prefix: String, input: usize, units: usize, out: &mut Vec<(String, Vec<usize>, Init)>| {
        out.push((format!("{prefix}.w_x"), vec![input, 4 * units], Init::Uniform));
        out.push((format!("{prefix}.w_h"), vec![units, 4 * units], Init::Uniform));
        out.push((format!("{prefix}.b"), vec![1, 4 * units], Init::ForgetBias(units)));
    };
    let dirs: &[&str] = if cfg.bidirectional { &["fw", "bw"] } else { &["fw"] };
    for l in 0..cfg.enc_layers {
        let input = if l == 0 { cfg.input_dim } else { cfg.enc_output_dim() };
        for d in dirs {
            lstm(format!("enc.l{l}.{d}"), input, cfg.enc_units, &mut out);
        }
    }
    let h = cfg.enc_output_dim();
    for k in 0..cfg.attention_heads {
        out.push((format!("att.h{k}.w_query"), vec![cfg.dec_units, cfg.attention_dim], Init::Uniform));
        out.push((format!("att.h{k}.w_key"), vec![h, cfg.attention_dim], Init::Uniform));
        out.push((format!("att.h{k}.v"), vec![cfg.attention_dim, 1], Init::Uniform));
    }
    out.push(("att.w_out".into(), vec![cfg.attention_heads * h, cfg.context_dim], Init::Uniform));
    out.push(("att.b_out".into(), vec![1, cfg.context_dim], Init::Zeros));
    out.push(("dec.embedding".into(), vec![cfg.vocab_size, cfg.embedding_dim], Init::Uniform));
    for l in 0..cfg.dec_layers {
        let input = if l == 0 { cfg.embedding_dim + cfg.context_dim } else { cfg.dec_units };
        lstm(format!("dec.l{l}"), input, cfg.dec_units, &mut out);
    }
    out.push(("dec.w_out".into(), vec![cfg.dec_units + cfg.context_dim, cfg.vocab_size], Init::Uniform));
    out.push(("dec.b_out".into(), vec![1, cfg.vocab_size], Init::Zeros));
    out
}

fn resolve_ids(cfg: &ModelConfig, params: &ParamStore) -> Result<LasIds> {
    for (name, shape, _) in layout(cfg) {
        match params.by_name(&name) {
            Some(t) if t.shape() == shape.as_slice() => {}
            Some(t) => {
                return Err(Error::Config(format!("parameter {name} has shape {:?}, expected {shape:?}", t.shape())))
            }
            None => return Err(Error::Config(format!("missing parameter {name}"))),
        }
    }
    let id = |n: String| params.id(&n).expect("checked above");
    let lstm = |prefix: String, units: usize| LstmParams {
        w_x: id(format!("{prefix}.w_x")),
        w_h: id(format!("{prefix}.w_h")),
        b: id(format!("{prefix}.b")),
        units,
    };
    let dirs: &[&str] = if cfg.bidirectional { &["fw", "bw"] } else { &["fw"] };
    let enc = (0..cfg.enc_layers)
        .map(|l| dirs.iter().map(|d| lstm(format!("enc.l{l}.{d}"), cfg.enc_units)).collect())
        .collect();
    let heads = (0..cfg.attention_heads)
        .map(|k| HeadParams {
            w_query: id(format!("att.h{k}.w_query")),
            w_key: id(format!("att.h{k}.w_key")),
            v: id(format!("att.h{k}.v")),
        })
        .collect();
    Ok(LasIds {
        enc,
        attention: AttentionParams { heads, w_out: id("att.w_out".into()), b_out: id("att.b_out".into()) },
        embedding: id("dec.embedding".into()),
        dec: (0..cfg.dec_layers).map(|l| lstm(format!("dec.l{l}"), cfg.dec_units)).collect(),
        w_out: id("dec.w_out".into()),
        b_out: id("dec.b_out".into()),
    })
}

impl Las {
    /// Fresh model: weights uniform in ±`init_scale`, biases zero, LSTM
    /// forget-gate biases one.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (name, shape, init) in layout(&cfg) {
            let n: usize = shape.iter().product();
            let data = match init {
                Init::Uniform if cfg.init_scale > 0.0 => {
                    (0..n).map(|_| rng.gen_range(-cfg.init_scale..cfg.init_scale)).collect()
                }
                Init::Uniform | Init::Zeros => vec![0.0; n],
                Init::ForgetBias(units) => (0..n).map(|i| if (units..2 * units).contains(&i) { 1.0 } else { 0.0 }).collect(),
            };
            params.insert(name, Tensor::new(shape, data)?)?;
        }
        let ids = resolve_ids(&cfg, &params)?;
        Ok(Las { cfg, params, ids })
    }

    /// Wrap existing parameters, checking every name and shape against `cfg`.
    pub fn from_params(cfg: ModelConfig, params: ParamStore) -> Result<Self> {
        cfg.validate()?;
        let ids = resolve_ids(&cfg, &params)?;
        if params.len() != layout(&cfg).len() {
            return Err(Error::Config("checkpoint holds parameters the config does not describe".into()));
        }
        Ok(Las { cfg, params, ids })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn attention_params(&self) -> &AttentionParams {
        &self.ids.attention
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>) -> BoundParams {
        self.params.bind(tape)
    }

    /// Listener forward pass over features `[T × input_dim]`.
    pub fn encode(&self, tape: &mut Tape<'_>, bound: &BoundParams, features: &Tensor) -> Result<EncoderOutput> {
        let dims = features.shape();
        if dims.len() != 2 || dims[1] != self.cfg.input_dim {
            return Err(Error::Config(format!(
                "features {dims:?} do not match input_dim {}",
                self.cfg.input_dim
            )));
        }
        let mut x = tape.constant(features.clone());
        for layer in &self.ids.enc {
            let fw = lstm_sequence(tape, &layer[0], bound, x, false)?;
            x = match layer.get(1) {
                Some(bw) => {
                    let back = lstm_sequence(tape, bw, bound, x, true)?;
                    tape.concat_cols(&[fw, back])?
                }
                None => fw,
            };
        }
        Ok(EncoderOutput { h_enc: x, len: dims[0] })
    }

    /// Project encoder output for attention.
    pub fn memory(&self, tape: &mut Tape<'_>, bound: &BoundParams, enc: &EncoderOutput) -> Result<AttentionMemory> {
        self.ids.attention.prepare(tape, bound, enc.h_enc, enc.len)
    }

    /// Encode and prepare attention memory in one call.
    pub fn listen(&self, tape: &mut Tape<'_>, bound: &BoundParams, features: &Tensor) -> Result<AttentionMemory> {
        let enc = self.encode(tape, bound, features)?;
        self.memory(tape, bound, &enc)
    }

    pub fn initial_state(&self, tape: &mut Tape<'_>) -> DecoderState {
        let layers = (0..self.cfg.dec_layers).map(|_| LstmState::zeros(tape, self.cfg.dec_units)).collect();
        let context = tape.constant(Tensor::zeros(&[1, self.cfg.context_dim]));
        DecoderState { layers, context }
    }

    /// One speller step conditioned on `prev_token`.
    pub fn decode_step(
        &self,
        tape: &mut Tape<'_>,
        bound: &BoundParams,
        mem: &AttentionMemory,
        state: &DecoderState,
        prev_token: usize,
    ) -> Result<StepOutput> {
        if prev_token >= self.cfg.vocab_size {
            return Err(Error::Input(format!("token {prev_token} outside vocabulary of {}", self.cfg.vocab_size)));
        }
        let emb = tape.slice_rows(bound.var(self.ids.embedding), prev_token, 1)?;
        let mut input = tape.concat_cols(&[emb, state.context])?;
        let mut layers = Vec::with_capacity(state.layers.len());
        for (p, prev) in self.ids.dec.iter().zip(&state.layers) {
            let next = lstm_cell(tape, p, bound, input, *prev)?;
            input = next.h;
            layers.push(next);
        }
        let attention = self.ids.attention.attend(tape, bound, input, mem)?;
        let out_in = tape.concat_cols(&[input, attention.context])?;
        let proj = tape.matmul(out_in, bound.var(self.ids.w_out))?;
        let logits = tape.add(proj, bound.var(self.ids.b_out))?;
        Ok(StepOutput { logits, state: DecoderState { layers, context: attention.context }, attention })
    }

    /// Logits for each position when the speller is fed `inputs`
    /// (teacher forcing when `inputs = [sos, y_0, …, y_{n−2}]`).
    pub fn forced_logits(&self, tape: &mut Tape<'_>, bound: &BoundParams, mem: &AttentionMemory, inputs: &[usize]) -> Result<Vec<Var>> {
        let mut state = self.initial_state(tape);
        let mut out = Vec::with_capacity(inputs.len());
        for &tok in inputs {
            let step = self.decode_step(tape, bound, mem, &state, tok)?;
            out.push(step.logits);
            state = step.state;
        }
        Ok(out)
    }

    /// Speller inputs for teacher forcing on `target`.
    pub fn teacher_inputs(&self, target: &[usize]) -> Vec<usize> {
        std::iter::once(self.cfg.sos_id).chain(target.iter().copied()).take(target.len()).collect()
    }

    /// `log P(y | x)` under teacher forcing; `y` must end with eos.
    pub fn seq_log_prob(&self, tape: &mut Tape<'_>, bound: &BoundParams, mem: &AttentionMemory, y: &[usize]) -> Result<SequenceScore> {
        if y.last() != Some(&self.cfg.eos_id) {
            return Err(Error::Contract("scored sequence must end with eos".into()));
        }
        let logits = self.forced_logits(tape, bound, mem, &self.teacher_inputs(y))?;
        let mut steps = Vec::with_capacity(y.len());
        for (&l, &tok) in logits.iter().zip(y) {
            let lp = tape.log_softmax(l, 1)?;
            steps.push(tape.pick(lp, tok)?);
        }
        let mut total = steps[0];
        for &s in &steps[1..] {
            total = tape.add(total, s)?;
        }
        Ok(SequenceScore { total, steps })
    }

    /// Convenience scorer on a private tape.
    pub fn log_prob(&self, features: &Tensor, y: &[usize]) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let mem = self.listen(&mut tape, &bound, features)?;
        let s = self.seq_log_prob(&mut tape, &bound, &mem, y)?;
        Ok(tape.value(s.total).item())
    }

    /// Save parameters and a manifest carrying the model config.
    pub fn save(&self, bin: &Path, manifest: &Path) -> Result<()> {
        checkpoint::save(&self.params, bin, manifest, serde_json::json!({ "model": self.cfg }))
    }

    pub fn load(bin: &Path, manifest: &Path) -> Result<Self> {
        let (params, meta) = checkpoint::load(bin, manifest)?;
        let cfg: ModelConfig = serde_json::from_value(meta["model"].clone())
            .map_err(|e| Error::Parse(format!("checkpoint manifest lacks a model config: {e}")))?;
        Self::from_params(cfg, params)
    }
}
