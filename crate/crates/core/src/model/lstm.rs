use crate::autograd::{BoundParams, ParamId, Tape, Var};
use crate::error::Result;

/// Parameter handles for one LSTM: input weights `[in × 4U]`, recurrent
/// weights `[U × 4U]`, bias `[1 × 4U]`. Gate order is input, forget, cell, output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub units: usize,
}

/// Hidden and cell state, each `[1 × U]`.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmState {
    pub fn zeros(tape: &mut Tape<'_>, units: usize) -> Self {
        let h = tape.constant(crate::autograd::Tensor::zeros(&[1, units]));
        let c = tape.constant(crate::autograd::Tensor::zeros(&[1, units]));
        LstmState { h, c }
    }
}

/// Apply the gate nonlinearities to pre-activations `[1 × 4U]`.
fn cell_from_gates(tape: &mut Tape<'_>, gates: Var, c_prev: Var, units: usize) -> Result<LstmState> {
    let i = tape.slice_cols(gates, 0, units)?;
    let f = tape.slice_cols(gates, units, units)?;
    let g = tape.slice_cols(gates, 2 * units, units)?;
    let o = tape.slice_cols(gates, 3 * units, units)?;
    let i = tape.sigmoid(i)?;
    let f = tape.sigmoid(f)?;
    let g = tape.tanh(g)?;
    let o = tape.sigmoid(o)?;
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok(LstmState { h, c })
}

/// One LSTM step on input row `x` `[1 × in]`.
pub fn lstm_cell(tape: &mut Tape<'_>, p: &LstmParams, bound: &BoundParams, x: Var, prev: LstmState) -> Result<LstmState> {
    let xw = tape.matmul(x, bound.var(p.w_x))?;
    let hw = tape.matmul(prev.h, bound.var(p.w_h))?;
    let s = tape.add(xw, hw)?;
    let gates = tape.add(s, bound.var(p.b))?;
    cell_from_gates(tape, gates, prev.c, p.units)
}

/// Run an LSTM over every row of `xs` `[T × in]`, left-to-right or
/// right-to-left. Returns hidden states `[T × U]` in time order.
pub fn lstm_sequence(tape: &mut Tape<'_>, p: &LstmParams, bound: &BoundParams, xs: Var, reverse: bool) -> Result<Var> {
    let steps = tape.shape(xs)[0];
    // input projection for all frames at once
    let xw = tape.matmul(xs, bound.var(p.w_x))?;
    let bias = tape.repeat_rows(bound.var(p.b), steps)?;
    let xwb = tape.add(xw, bias)?;
    let mut outputs = Vec::with_capacity(steps);
    let mut state: Option<LstmState> = None;
    let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
    for t in order {
        let row = tape.slice_rows(xwb, t, 1)?;
        state = Some(match state {
            None => {
                let zero_c = tape.constant(crate::autograd::Tensor::zeros(&[1, p.units]));
                cell_from_gates(tape, row, zero_c, p.units)?
            }
            Some(prev) => {
                let hw = tape.matmul(prev.h, bound.var(p.w_h))?;
                let gates = tape.add(row, hw)?;
                cell_from_gates(tape, gates, prev.c, p.units)?
            }
        });
        outputs.push(state.expect("just set").h);
    }
    if reverse {
        outputs.reverse();
    }
    tape.concat_rows(&outputs)
}
