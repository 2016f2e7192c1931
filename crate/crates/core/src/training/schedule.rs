use serde::{Deserialize, Serialize};

use super::TrainConfig;

/// Linear ramp from 0 to `target` over `ramp_steps`, constant afterwards.
fn ramp(step: u64, ramp_steps: u64, target: f64) -> f64 {
    if ramp_steps == 0 || step >= ramp_steps {
        target
    } else {
        step as f64 / ramp_steps as f64 * target
    }
}

/// Probability of feeding the model's own sample instead of the ground truth.
pub fn ss_probability(step: u64, cfg: &TrainConfig) -> f64 {
    ramp(step, cfg.ss_ramp_steps, cfg.ss_target_prob)
}

/// Learning rate during the cross-entropy phase.
pub fn lr_schedule(step: u64, cfg: &TrainConfig) -> f64 {
    ramp(step, cfg.lr_ramp_steps, cfg.peak_lr)
}

/// Moving average of gradient norms that rejects outliers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradTracker {
    pub ema_norm: f64,
    pub ema_decay: f64,
    /// Reject when the norm exceeds `factor × ema_norm`.
    pub factor: f64,
    pub initialized: bool,
    pub rejected_count: u64,
}

impl GradTracker {
    pub fn new(ema_decay: f64, factor: f64) -> Self {
        GradTracker { ema_norm: 0.0, ema_decay, factor, initialized: false, rejected_count: 0 }
    }

    /// Returns `true` when the gradient should be applied.
    pub fn update(&mut self, grad_norm: f64) -> bool {
        if !self.initialized {
            self.ema_norm = grad_norm;
            self.initialized = true;
            return true;
        }
        if grad_norm > self.factor * self.ema_norm {
            self.rejected_count += 1;
            return false;
        }
        self.ema_norm = self.ema_decay * self.ema_norm + (1.0 - self.ema_decay) * grad_norm;
        true
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn cfg() -> TrainConfig {
        TrainConfig { ss_ramp_steps: 1000, ss_target_prob: 0.4, lr_ramp_steps: 200, peak_lr: 0.002, ..TrainConfig::default() }
    }

    #[test]
    fn sampling_probability_anchors() {
        let c = cfg();
        assert_eq!(ss_probability(0, &c), 0.0);
        assert_eq!(ss_probability(1000, &c), 0.4);
        assert_eq!(ss_probability(2000, &c), 0.4);
        assert!((ss_probability(500, &c) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn learning_rate_anchors() {
        let c = cfg();
        assert_eq!(lr_schedule(0, &c), 0.0);
        assert_eq!(lr_schedule(200, &c), 0.002);
        assert_eq!(lr_schedule(100, &c), 0.001);
        assert_eq!(lr_schedule(10_000, &c), 0.002);
        assert_eq!(lr_schedule(0, &TrainConfig { lr_ramp_steps: 0, ..c }), 0.002);
    }

    #[test]
    fn tracker_rejects_the_outlier() {
        let mut t = GradTracker::new(0.99, 4.0);
        let accepted: Vec<bool> = [1.0, 1.0, 1.0, 100.0].iter().map(|&n| t.update(n)).collect();
        assert_eq!(accepted, vec![true, true, true, false]);
        assert_eq!(t.rejected_count, 1);
        assert_eq!(t.ema_norm, 1.0);
    }

    #[test]
    fn first_update_always_accepts() {
        let mut t = GradTracker::new(0.99, 4.0);
        assert!(t.update(1e9));
        assert_eq!(t.ema_norm, 1e9);
    }

    proptest! {
        #[test]
        fn constant_norms_never_reject(norm in 0.0f64..1e6, n in 1usize..2000) {
            let mut t = GradTracker::new(0.99, 4.0);
            for _ in 0..n {
                prop_assert!(t.update(norm));
            }
            prop_assert_eq!(t.rejected_count, 0);
            prop_assert!(t.ema_norm >= 0.0);
        }

        #[test]
        fn ramps_are_monotone_and_bounded(a in 0u64..5000, b in 0u64..5000) {
            let c = cfg();
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(ss_probability(lo, &c) <= ss_probability(hi, &c));
            prop_assert!(lr_schedule(hi, &c) <= c.peak_lr);
        }
    }
}
