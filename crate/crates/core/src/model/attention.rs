use crate::autograd::{BoundParams, ParamId, Tape, Var};
use crate::error::{Error, Result};

/// One additive-attention head: query projection `[Q × A]`, key projection
/// `[H × A]` and energy vector `[A × 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeadParams {
    pub w_query: ParamId,
    pub w_key: ParamId,
    pub v: ParamId,
}

/// All heads plus the output projection `[heads·H × C]`, `[1 × C]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionParams {
    pub heads: Vec<HeadParams>,
    pub w_out: ParamId,
    pub b_out: ParamId,
}

/// Encoder states prepared for attention: values `[T × H]`, one projected key
/// matrix `[T × A]` per head, and a validity mask over frames.
#[derive(Clone, Debug)]
pub struct AttentionMemory {
    pub values: Var,
    pub keys: Vec<Var>,
    pub mask: Vec<bool>,
}

/// Context vector and per-head alignment.
#[derive(Clone, Debug)]
pub struct AttentionResult {
    /// Projected context `[1 × C]`.
    pub context: Var,
    /// Per-head context before the output projection, each `[1 × H]`.
    pub head_contexts: Vec<Var>,
    /// Per-head weights, each `[1 × T]`.
    pub weights: Vec<Var>,
}

impl AttentionParams {
    /// Project encoder states once per utterance. Frames at or beyond
    /// `valid_len` are masked.
    pub fn prepare(&self, tape: &mut Tape<'_>, bound: &BoundParams, values: Var, valid_len: usize) -> Result<AttentionMemory> {
        let frames = tape.shape(values)[0];
        if valid_len == 0 || valid_len > frames {
            return Err(Error::Contract(format!("valid length {valid_len} for {frames} frames")));
        }
        let mask = (0..frames).map(|t| t < valid_len).collect();
        self.prepare_masked(tape, bound, values, mask)
    }

    pub fn prepare_masked(&self, tape: &mut Tape<'_>, bound: &BoundParams, values: Var, mask: Vec<bool>) -> Result<AttentionMemory> {
        if mask.len() != tape.shape(values)[0] {
            return Err(Error::Dimension("mask length differs from frame count".into()));
        }
        let keys = self
            .heads
            .iter()
            .map(|h| tape.matmul(values, bound.var(h.w_key)))
            .collect::<Result<_>>()?;
        Ok(AttentionMemory { values, keys, mask })
    }

    /// Multi-head additive attention: per head, e_t = vᵀ tanh(W_q s + W_k h_t),
    /// α = masked softmax over t, c = Σ α_t h_t; head contexts are
    /// concatenated and projected.
    pub fn attend(&self, tape: &mut Tape<'_>, bound: &BoundParams, query: Var, mem: &AttentionMemory) -> Result<AttentionResult> {
        let mut head_contexts = Vec::with_capacity(self.heads.len());
        let mut weights = Vec::with_capacity(self.heads.len());
        for (h, &keys) in self.heads.iter().zip(&mem.keys) {
            let (alpha, ctx) = head(tape, bound, h, query, keys, mem)?;
            weights.push(alpha);
            head_contexts.push(ctx);
        }
        let joined = tape.concat_cols(&head_contexts)?;
        let proj = tape.matmul(joined, bound.var(self.w_out))?;
        let context = tape.add(proj, bound.var(self.b_out))?;
        Ok(AttentionResult { context, head_contexts, weights })
    }

    /// Conventional single-head additive attention using only the first head.
    pub fn attend_single(&self, tape: &mut Tape<'_>, bound: &BoundParams, query: Var, mem: &AttentionMemory) -> Result<AttentionResult> {
        let h = self.heads.first().ok_or_else(|| Error::Config("no attention heads".into()))?;
        let frames = tape.shape(mem.values)[0];
        let q = tape.matmul(query, bound.var(h.w_query))?;
        let q = tape.repeat_rows(q, frames)?;
        let pre = tape.add(mem.keys[0], q)?;
        let act = tape.tanh(pre)?;
        let energy = tape.matmul(act, bound.var(h.v))?;
        let energy = tape.reshape(energy, vec![1, frames])?;
        let alpha = tape.masked_softmax(energy, &mem.mask)?;
        let ctx = tape.matmul(alpha, mem.values)?;
        let joined = tape.concat_cols(&[ctx])?;
        let proj = tape.matmul(joined, bound.var(self.w_out))?;
        let context = tape.add(proj, bound.var(self.b_out))?;
        Ok(AttentionResult { context, head_contexts: vec![ctx], weights: vec![alpha] })
    }
}

fn head(tape: &mut Tape<'_>, bound: &BoundParams, h: &HeadParams, query: Var, keys: Var, mem: &AttentionMemory) -> Result<(Var, Var)> {
    let frames = tape.shape(keys)[0];
    let q = tape.matmul(query, bound.var(h.w_query))?;
    let q = tape.repeat_rows(q, frames)?;
    let pre = tape.add(keys, q)?;
    let act = tape.tanh(pre)?;
    let energy = tape.matmul(act, bound.var(h.v))?;
    let energy = tape.reshape(energy, vec![1, frames])?;
    let alpha = tape.masked_softmax(energy, &mem.mask)?;
    let ctx = tape.matmul(alpha, mem.values)?;
    Ok((alpha, ctx))
}
