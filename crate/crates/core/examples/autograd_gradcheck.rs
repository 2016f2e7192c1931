//! Reverse-mode gradients on the tape, checked against central differences.
//!
//! cargo run --release --example autograd_gradcheck

use las::autograd::{grad_check, grad_check_params, ParamStore, Tape, Tensor};

fn main() -> las::Result<()> {
    // f(x) = Σ log_softmax(tanh(x W))[0] for a 2×3 input and a fixed 3×4 W.
    let w = Tensor::matrix(3, 4, (0..12).map(|i| (i as f64 * 0.37).sin()).collect())?;
    let x = Tensor::matrix(2, 3, vec![0.1, -0.4, 0.9, 0.3, 0.2, -0.7])?;
    let f = |tape: &mut Tape<'_>, x| {
        let w = tape.constant(w.clone());
        let h = tape.matmul(x, w)?;
        let h = tape.tanh(h)?;
        let lp = tape.log_softmax(h, 1)?;
        let first = tape.slice_cols(lp, 0, 1)?;
        tape.sum(first)
    };

    let mut tape = Tape::new();
    let xv = tape.variable(x.clone());
    let loss = f(&mut tape, xv)?;
    let grads = tape.backward(loss)?;
    println!("loss = {:.6}", tape.value(loss).item());
    println!("dloss/dx = {:?}", grads.get(xv).map(|g| g.data().to_vec()));
    println!("max relative error vs finite differences: {:.2e}", grad_check(f, &x, 1e-6)?);

    // The same check over named parameters of a store.
    let mut store = ParamStore::new();
    let a = store.insert("a", Tensor::row(vec![0.5, -1.5, 2.0]))?;
    let b = store.insert("b", Tensor::matrix(3, 1, vec![1.0, 0.25, -0.5])?)?;
    let report = grad_check_params(
        |_, tape, bound| {
            let ab = tape.matmul(bound.var(a), bound.var(b))?;
            let e = tape.exp(ab)?;
            tape.sum(e)
        },
        &store,
        1e-6,
    )?;
    println!(
        "parameter check over {} coordinates: max relative error {:.2e} (worst {:?})",
        report.coordinates, report.max_rel_error, report.worst
    );
    Ok(())
}
