use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::losses::{ce_loss_smoothed, mwer_first_term, mwer_loss};
use super::optim::{clip_by_global_norm, sum_gradients, sync_accumulate, Adam};
use super::schedule::{lr_schedule, ss_probability, GradTracker};
use super::TrainConfig;
use crate::autograd::{checkpoint, BoundParams, ParamStore, Tape, Tensor, Var};
use crate::decoding::{beam_search, decode_batch, sentence_wer, BeamConfig, WerBreakdown};
use crate::error::{Error, Result};
use crate::model::{AttentionMemory, Las};
use crate::wordpiece::WordpieceVocab;

/// One training or evaluation example.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    /// `[T × input_dim]`
    pub features: Tensor,
    /// Target wordpiece ids ending in eos.
    pub tokens: Vec<usize>,
    pub transcript: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Ce,
    Mwer,
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub phase: Phase,
    pub lr: f64,
    pub ss_prob: f64,
    pub loss: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub accepted: bool,
}

/// Everything besides parameters needed to resume training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub adam: Adam,
    pub tracker: GradTracker,
}

/// Speller logits where each input after the first is, with probability `p`,
/// a sample from the previous step's softmax instead of the ground truth.
pub fn forward_scheduled_sampling(
    model: &Las,
    tape: &mut Tape<'_>,
    bound: &BoundParams,
    mem: &AttentionMemory,
    target: &[usize],
    p: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Var>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("sampling probability {p} outside [0, 1]")));
    }
    let mut state = model.initial_state(tape);
    let mut prev = model.config().sos_id;
    let mut out = Vec::with_capacity(target.len());
    for (i, &gold) in target.iter().enumerate() {
        let step = model.decode_step(tape, bound, mem, &state, prev)?;
        out.push(step.logits);
        if i + 1 < target.len() {
            prev = if p > 0.0 && rng.gen::<f64>() < p {
                let logits = tape.value(step.logits).data();
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
                WeightedIndex::new(&weights).map_err(|e| Error::Domain(e.to_string()))?.sample(rng)
            } else {
                gold
            };
        }
        state = step.state;
    }
    Ok(out)
}

/// Dataset indices for global step `step`: consecutive slices of per-epoch
/// seeded permutations.
pub fn batch_indices(n: usize, step: u64, batch_size: usize, seed: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(batch_size);
    let mut cached: Option<(u64, Vec<usize>)> = None;
    for j in 0..batch_size as u64 {
        let pos = step * batch_size as u64 + j;
        let epoch = pos / n as u64;
        if cached.as_ref().map(|c| c.0) != Some(epoch) {
            let mut perm: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(epoch);
            perm.shuffle(&mut rng);
            cached = Some((epoch, perm));
        }
        out.push(cached.as_ref().expect("just set").1[(pos % n as u64) as usize]);
    }
    out
}

fn utterance_rng(seed: u64, step: u64, slot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a_5a5a_5a5a_5a5a);
    rng.set_stream((step << 20) | slot as u64);
    rng
}

fn word_errors(vocab: &WordpieceVocab, reference: &str, tokens: &[usize]) -> f64 {
    sentence_wer(reference, &vocab.detokenize(tokens).text).errors() as f64
}

fn mwer_beam(cfg: &TrainConfig) -> BeamConfig {
    BeamConfig { beam_width: cfg.mwer_beam, nbest: cfg.mwer_nbest, max_len: None }
}

pub struct Trainer {
    model: Las,
    cfg: TrainConfig,
    state: TrainState,
}

impl Trainer {
    pub fn new(model: Las, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let adam = Adam::new(model.params(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
        let tracker = GradTracker::new(cfg.grad_tracker_decay, cfg.grad_tracker_factor);
        Ok(Trainer { model, cfg, state: TrainState { step: 0, adam, tracker } })
    }

    pub fn model(&self) -> &Las {
        &self.model
    }

    pub fn into_model(self) -> Las {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn total_steps(&self) -> u64 {
        self.cfg.ce_steps + self.cfg.mwer_steps
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.total_steps()
    }

    pub fn phase_at(&self, step: u64) -> Phase {
        if step < self.cfg.ce_steps {
            Phase::Ce
        } else {
            Phase::Mwer
        }
    }

    fn ce_gradient(&self, u: &Utterance, p: f64, rng: &mut ChaCha8Rng) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let bound = self.model.bind(&mut tape);
        let mem = self.model.listen(&mut tape, &bound, &u.features)?;
        let logits = forward_scheduled_sampling(&self.model, &mut tape, &bound, &mem, &u.tokens, p, rng)?;
        let loss = ce_loss_smoothed(&mut tape, &logits, &u.tokens, self.cfg.label_smoothing_eps)?;
        let value = tape.value(loss).item();
        let mut grads = tape.backward(loss)?;
        Ok((value, bound.collect(self.model.params(), &mut grads)))
    }

    fn mwer_gradient(&self, u: &Utterance, vocab: &WordpieceVocab) -> Result<(f64, Vec<Tensor>)> {
        let nbest = beam_search(&self.model, &u.features, &mwer_beam(&self.cfg))?;
        let errors: Vec<f64> = nbest.iter().map(|h| word_errors(vocab, &u.transcript, &h.tokens)).collect();
        let mut tape = Tape::new();
        let bound = self.model.bind(&mut tape);
        let mem = self.model.listen(&mut tape, &bound, &u.features)?;
        let log_probs = nbest
            .iter()
            .map(|h| Ok(self.model.seq_log_prob(&mut tape, &bound, &mem, &h.tokens)?.total))
            .collect::<Result<Vec<_>>>()?;
        let inputs = self.model.teacher_inputs(&u.tokens);
        let logits = self.model.forced_logits(&mut tape, &bound, &mem, &inputs)?;
        let ce = ce_loss_smoothed(&mut tape, &logits, &u.tokens, self.cfg.label_smoothing_eps)?;
        let loss = mwer_loss(&mut tape, &log_probs, &errors, ce, self.cfg.mwer_lambda)?.loss;
        let value = tape.value(loss).item();
        let mut grads = tape.backward(loss)?;
        Ok((value, bound.collect(self.model.params(), &mut grads)))
    }

    /// Run one global step on a batch drawn from `data`.
    pub fn step(&mut self, data: &[Utterance], vocab: &WordpieceVocab) -> Result<StepRecord> {
        if data.is_empty() {
            return Err(Error::Input("training set is empty".into()));
        }
        let step = self.state.step;
        let phase = self.phase_at(step);
        let ss_prob = if phase == Phase::Ce { ss_probability(step, &self.cfg) } else { 0.0 };
        let lr = if phase == Phase::Ce { lr_schedule(step, &self.cfg) } else { self.cfg.mwer_lr };
        let batch = batch_indices(data.len(), step, self.cfg.batch_size, self.cfg.seed);
        let this = &*self;
        let results = batch
            .par_iter()
            .enumerate()
            .map(|(slot, &i)| match phase {
                Phase::Ce => this.ce_gradient(&data[i], ss_prob, &mut utterance_rng(this.cfg.seed, step, slot)),
                Phase::Mwer => this.mwer_gradient(&data[i], vocab),
            })
            .collect::<Result<Vec<_>>>()?;

        let loss = results.iter().map(|r| r.0).sum::<f64>() / results.len() as f64;
        let per_replica = self.cfg.batch_size / self.cfg.replicas;
        let replica_grads = results
            .chunks(per_replica)
            .map(|chunk| {
                let sets: Vec<Vec<Tensor>> = chunk.iter().map(|r| r.1.clone()).collect();
                let mut g = sum_gradients(&sets)?;
                g.iter_mut().for_each(|t| t.scale_in_place(1.0 / chunk.len() as f64));
                Ok(g)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut grads = sync_accumulate(&replica_grads)?;
        let grad_norm = clip_by_global_norm(&mut grads, self.cfg.clip_norm);
        let accepted = !self.cfg.use_grad_tracker || self.state.tracker.update(grad_norm.min(self.cfg.clip_norm));
        if accepted {
            self.state.adam.step(self.model.params_mut(), &grads, lr)?;
        }
        self.state.step += 1;
        Ok(StepRecord { step, phase, lr, ss_prob, loss, grad_norm, accepted })
    }

    /// Train until all configured steps are done. With `out_dir`, appends a
    /// JSON line per step to `train_log.jsonl` and writes resumable
    /// checkpoints under `checkpoint/`.
    pub fn run(&mut self, data: &[Utterance], vocab: &WordpieceVocab, out_dir: Option<&Path>) -> Result<Vec<StepRecord>> {
        let mut log = match out_dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                Some(OpenOptions::new().create(true).append(true).open(dir.join("train_log.jsonl"))?)
            }
            None => None,
        };
        let mut records = Vec::new();
        while !self.is_done() {
            let rec = self.step(data, vocab)?;
            if let Some(f) = log.as_mut() {
                writeln!(f, "{}", serde_json::to_string(&rec)?)?;
            }
            log::debug!("step {} loss {:.4} norm {:.3} accepted {}", rec.step, rec.loss, rec.grad_norm, rec.accepted);
            records.push(rec);
            if let Some(dir) = out_dir {
                let every = self.cfg.checkpoint_every;
                if (every > 0 && self.state.step % every == 0) || self.is_done() {
                    self.save(&dir.join("checkpoint"))?;
                }
            }
        }
        Ok(records)
    }

    /// Write model parameters, optimizer moments and counters to `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.model.save(&dir.join("model.bin"), &dir.join("model.json"))?;
        let mut moments = ParamStore::new();
        for ((name, _), (m, v)) in self.model.params().iter().zip(self.state.adam.m.iter().zip(&self.state.adam.v)) {
            moments.insert(format!("m/{name}"), m.clone())?;
            moments.insert(format!("v/{name}"), v.clone())?;
        }
        let meta = serde_json::json!({
            "step": self.state.step,
            "adam": self.state.adam,
            "tracker": self.state.tracker,
            "train": self.cfg,
        });
        checkpoint::save(&moments, &dir.join("optim.bin"), &dir.join("optim.json"), meta)
    }

    /// Restore a trainer saved by [`Trainer::save`].
    pub fn resume(dir: &Path) -> Result<Self> {
        let model = Las::load(&dir.join("model.bin"), &dir.join("model.json"))?;
        let (moments, meta) = checkpoint::load(&dir.join("optim.bin"), &dir.join("optim.json"))?;
        let field = |k: &str| meta.get(k).cloned().ok_or_else(|| Error::Parse(format!("optimizer state lacks {k}")));
        let cfg: TrainConfig = serde_json::from_value(field("train")?)?;
        let step: u64 = serde_json::from_value(field("step")?)?;
        let mut adam: Adam = serde_json::from_value(field("adam")?)?;
        let tracker: GradTracker = serde_json::from_value(field("tracker")?)?;
        let get = |prefix: &str, name: &str| {
            moments
                .by_name(&format!("{prefix}/{name}"))
                .cloned()
                .ok_or_else(|| Error::Parse(format!("optimizer state lacks {prefix}/{name}")))
        };
        adam.m = model.params().iter().map(|(n, _)| get("m", n)).collect::<Result<_>>()?;
        adam.v = model.params().iter().map(|(n, _)| get("v", n)).collect::<Result<_>>()?;
        cfg.validate()?;
        Ok(Trainer { model, cfg, state: TrainState { step, adam, tracker } })
    }
}

/// Corpus WER of top-1 beam hypotheses.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub wer: WerBreakdown,
    pub hypotheses: Vec<String>,
}

pub fn evaluate(model: &Las, data: &[Utterance], vocab: &WordpieceVocab, beam: &BeamConfig) -> Result<Evaluation> {
    let feats: Vec<Tensor> = data.iter().map(|u| u.features.clone()).collect();
    let nbest = decode_batch(model, &feats, beam)?;
    let hypotheses: Vec<String> = nbest
        .iter()
        .map(|n| n.first().map(|h| vocab.detokenize(&h.tokens).text).unwrap_or_default())
        .collect();
    let mut wer = WerBreakdown::default();
    for (u, h) in data.iter().zip(&hypotheses) {
        wer.merge(&sentence_wer(&u.transcript, h));
    }
    Ok(Evaluation { wer, hypotheses })
}

/// Mean over `data` of the MWER expected-error term on freshly decoded N-best lists.
pub fn expected_word_errors(model: &Las, data: &[Utterance], vocab: &WordpieceVocab, cfg: &TrainConfig) -> Result<f64> {
    let beam = mwer_beam(cfg);
    let terms = data
        .par_iter()
        .map(|u| {
            let nbest = beam_search(model, &u.features, &beam)?;
            let lps: Vec<f64> = nbest.iter().map(|h| h.log_prob).collect();
            let errs: Vec<f64> = nbest.iter().map(|h| word_errors(vocab, &u.transcript, &h.tokens)).collect();
            mwer_first_term(&lps, &errs)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(terms.iter().sum::<f64>() / terms.len().max(1) as f64)
}

#[cfg(test)]
mod tests;
