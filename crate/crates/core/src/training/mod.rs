//! Optimization for the LAS model.
//!
//! Cross-entropy with label smoothing and scheduled sampling initializes the
//! model; N-best minimum word error rate training fine-tunes it. Each global
//! step computes per-utterance gradients on independent tapes, merges them
//! in a fixed order across simulated synchronous replicas, clips the global
//! norm, consults the gradient-norm tracker and applies Adam.

mod losses;
mod optim;
mod schedule;
mod trainer;

use serde::{Deserialize, Serialize};

pub use losses::{ce_loss_smoothed, mwer_first_term, mwer_loss, target_distribution, MwerLoss};
pub use optim::{clip_by_global_norm, global_norm, sum_gradients, sync_accumulate, Adam};
pub use schedule::{lr_schedule, ss_probability, GradTracker};
pub use trainer::{
    batch_indices, evaluate, expected_word_errors, forward_scheduled_sampling, Evaluation, Phase, StepRecord, TrainState,
    Trainer, Utterance,
};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Utterances per global step, split evenly across `replicas`.
    pub batch_size: usize,
    pub replicas: usize,
    pub peak_lr: f64,
    /// Steps of the linear learning-rate warm-up; 0 disables it.
    pub lr_ramp_steps: u64,
    pub label_smoothing_eps: f64,
    pub ss_target_prob: f64,
    pub ss_ramp_steps: u64,
    pub mwer_lambda: f64,
    pub mwer_nbest: usize,
    /// Beam width used to produce the MWER N-best list.
    pub mwer_beam: usize,
    /// Constant learning rate of the MWER phase.
    pub mwer_lr: f64,
    pub use_grad_tracker: bool,
    pub grad_tracker_factor: f64,
    pub grad_tracker_decay: f64,
    pub clip_norm: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub ce_steps: u64,
    pub mwer_steps: u64,
    /// Save a resumable checkpoint every this many steps; 0 saves only at the end.
    pub checkpoint_every: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            replicas: 1,
            peak_lr: 3e-3,
            lr_ramp_steps: 50,
            label_smoothing_eps: 0.1,
            ss_target_prob: 0.4,
            ss_ramp_steps: 500,
            mwer_lambda: 0.01,
            mwer_nbest: 4,
            mwer_beam: 4,
            mwer_lr: 1e-3,
            use_grad_tracker: true,
            grad_tracker_factor: 4.0,
            grad_tracker_decay: 0.99,
            clip_norm: 1.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            ce_steps: 1500,
            mwer_steps: 0,
            checkpoint_every: 0,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 || self.replicas == 0 || self.batch_size % self.replicas != 0 {
            return fail("batch_size must be a positive multiple of replicas");
        }
        if !(0.0..=1.0).contains(&self.ss_target_prob) {
            return fail("ss_target_prob must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.label_smoothing_eps) {
            return fail("label_smoothing_eps must lie in [0, 1)");
        }
        if !(self.mwer_lambda.is_finite() && self.mwer_lambda >= 0.0) {
            return fail("mwer_lambda must be non-negative");
        }
        if self.mwer_nbest == 0 || self.mwer_beam < self.mwer_nbest {
            return fail("need mwer_beam ≥ mwer_nbest ≥ 1");
        }
        for (name, v) in [("peak_lr", self.peak_lr), ("mwer_lr", self.mwer_lr)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        if !(self.clip_norm > 0.0 && self.grad_tracker_factor > 0.0) {
            return fail("clip_norm and grad_tracker_factor must be positive");
        }
        if !(0.0..1.0).contains(&self.grad_tracker_decay)
            || !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
        {
            return fail("decay rates must lie in [0, 1)");
        }
        Ok(())
    }
}
