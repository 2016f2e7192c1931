use serde::{Deserialize, Serialize};

use crate::autograd::{ParamStore, Tensor};
use crate::error::{Error, Result};

/// Euclidean norm over every coordinate of every tensor.
pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().map(Tensor::sq_norm).sum::<f64>().sqrt()
}

/// Scale `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_by_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.scale_in_place(s);
        }
    }
    norm
}

/// Element-wise sum of gradient sets in the given order.
pub fn sum_gradients(sets: &[Vec<Tensor>]) -> Result<Vec<Tensor>> {
    let (first, rest) = sets.split_first().ok_or_else(|| Error::Contract("no gradients to merge".into()))?;
    let mut total = first.clone();
    for set in rest {
        if set.len() != total.len() {
            return Err(Error::Dimension("gradient sets differ in tensor count".into()));
        }
        for (t, g) in total.iter_mut().zip(set) {
            if t.shape() != g.shape() {
                return Err(Error::Dimension(format!("cannot merge {:?} into {:?}", g.shape(), t.shape())));
            }
            t.add_assign(g);
        }
    }
    Ok(total)
}

/// Merge the gradients of `R` replicas: sum in replica order, then divide by `R`.
pub fn sync_accumulate(replicas: &[Vec<Tensor>]) -> Result<Vec<Tensor>> {
    let mut total = sum_gradients(replicas)?;
    if replicas.len() > 1 {
        let s = 1.0 / replicas.len() as f64;
        for t in &mut total {
            t.scale_in_place(s);
        }
    }
    Ok(total)
}

/// Adam moments and step count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    #[serde(skip)]
    pub m: Vec<Tensor>,
    #[serde(skip)]
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamStore, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { beta1, beta2, eps, t: 0, m: params.zeros_like(), v: params.zeros_like() }
    }

    /// One bias-corrected Adam update with learning rate `lr`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Dimension("gradient count differs from parameter count".into()));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.tensors_mut().iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if p.shape() != g.shape() {
                return Err(Error::Dimension(format!("gradient {:?} for parameter {:?}", g.shape(), p.shape())));
            }
            for (((pi, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                *pi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
