use crate::autograd::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Smoothed target for one step: `(1 − eps)·onehot(target) + eps / V`.
pub fn target_distribution(vocab: usize, target: usize, eps: f64) -> Vec<f64> {
    let mut q = vec![eps / vocab as f64; vocab];
    q[target] += 1.0 - eps;
    q
}

/// Label-smoothed cross-entropy averaged over steps.
///
/// `logits` holds one `[1 × V]` row per step and must match `target` in length.
pub fn ce_loss_smoothed(tape: &mut Tape<'_>, logits: &[Var], target: &[usize], eps: f64) -> Result<Var> {
    if logits.len() != target.len() || logits.is_empty() {
        return Err(Error::Contract(format!("{} logit rows for {} targets", logits.len(), target.len())));
    }
    if !(0.0..1.0).contains(&eps) && eps != 1.0 {
        return Err(Error::Config(format!("label smoothing eps {eps} outside [0, 1]")));
    }
    let rows = tape.concat_rows(logits)?;
    let vocab = tape.shape(rows)[1];
    if let Some(&bad) = target.iter().find(|&&t| t >= vocab) {
        return Err(Error::Input(format!("target id {bad} outside vocabulary of {vocab}")));
    }
    let lp = tape.log_softmax(rows, 1)?;
    let q: Vec<f64> = target.iter().flat_map(|&t| target_distribution(vocab, t, eps)).collect();
    let q = tape.constant(Tensor::new(vec![target.len(), vocab], q)?);
    let weighted = tape.mul(lp, q)?;
    let total = tape.sum(weighted)?;
    tape.scale(total, -1.0 / target.len() as f64)
}

/// Value of the expected-error term `(1/N)·Σ (W_i − Ŵ)·P̂_i` where `P̂` is
/// the softmax of the N-best log-probabilities and `Ŵ` the mean error.
pub fn mwer_first_term(log_probs: &[f64], word_errors: &[f64]) -> Result<f64> {
    let dev = deviations(log_probs.len(), word_errors)?;
    let m = log_probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = log_probs.iter().map(|l| (l - m).exp()).sum();
    Ok(log_probs.iter().zip(&dev).map(|(l, d)| d * (l - m).exp() / z).sum())
}

/// `(W_i − Ŵ) / N`. The mean is taken relative to `W_0`, so equal errors
/// give exact zeros.
fn deviations(n: usize, word_errors: &[f64]) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Contract("MWER needs a non-empty N-best list".into()));
    }
    if word_errors.len() != n {
        return Err(Error::Contract(format!("{n} hypotheses but {} error counts", word_errors.len())));
    }
    let w0 = word_errors[0];
    let mean = w0 + word_errors.iter().map(|w| w - w0).sum::<f64>() / n as f64;
    Ok(word_errors.iter().map(|w| (w - mean) / n as f64).collect())
}

/// Tape terms of the MWER objective.
#[derive(Clone, Copy, Debug)]
pub struct MwerLoss {
    /// `first + λ·ce`
    pub loss: Var,
    /// `(1/N)·Σ (W_i − Ŵ)·P̂_i`
    pub first: Var,
}

/// N-best MWER loss interpolated with cross-entropy.
///
/// `log_probs` are scalar sequence log-probabilities on the tape; gradients
/// flow through their renormalized softmax.
pub fn mwer_loss(tape: &mut Tape<'_>, log_probs: &[Var], word_errors: &[f64], ce: Var, lambda: f64) -> Result<MwerLoss> {
    let dev = deviations(log_probs.len(), word_errors)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Config(format!("MWER lambda {lambda} must be finite and non-negative")));
    }
    let rows: Vec<Var> = log_probs
        .iter()
        .map(|&v| tape.reshape(v, vec![1, 1]))
        .collect::<Result<_>>()?;
    let row = tape.concat_cols(&rows)?;
    let p_hat = tape.softmax(row, 1)?;
    let d = tape.constant(Tensor::row(dev));
    let weighted = tape.mul(p_hat, d)?;
    let first = tape.sum(weighted)?;
    let ce_term = tape.scale(ce, lambda)?;
    let loss = tape.add(first, ce_term)?;
    Ok(MwerLoss { loss, first })
}
