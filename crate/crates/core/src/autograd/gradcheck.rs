use super::params::{BoundParams, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Largest finite-difference disagreement found by a gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name (or `"x"`) and flat index of the worst coordinate.
    pub worst: (String, usize),
    pub coordinates: usize,
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

/// Compare the tape gradient of scalar `f` at `x` against central differences.
///
/// Returns max over coordinates of |analytic − numeric| / max(1, |analytic|).
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: for<'t> Fn(&mut Tape<'t>, Var) -> Result<Var>,
{
    if eps <= 0.0 {
        return Err(Error::Config("gradient check eps must be positive".into()));
    }
    let mut tape = Tape::new();
    let xv = tape.variable(x.clone());
    let loss = f(&mut tape, xv)?;
    let mut grads = tape.backward(loss)?;
    let analytic = grads.take(xv).unwrap_or_else(|| Tensor::zeros(x.shape()));

    let eval = |t: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.constant(t);
        let out = f(&mut tape, v)?;
        Ok(tape.value(out).item())
    };
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        worst = worst.max(rel_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

/// Gradient check over every coordinate of every tensor in a parameter store.
pub fn grad_check_params<F>(f: F, params: &ParamStore, eps: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&ParamStore, &mut Tape<'t>, &BoundParams) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let loss = f(params, &mut tape, &bound)?;
    let mut grads = tape.backward(loss)?;
    let analytic = bound.collect(params, &mut grads);
    drop(tape);

    let eval = |p: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let out = f(p, &mut tape, &bound)?;
        Ok(tape.value(out).item())
    };
    let mut probe = params.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: (String::new(), 0), coordinates: 0 };
    for (k, g) in analytic.iter().enumerate() {
        let id = super::ParamId(k);
        for i in 0..g.len() {
            let orig = probe.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = orig + eps;
            let up = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig - eps;
            let down = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig;
            let err = rel_error(g.data()[i], (up - down) / (2.0 * eps));
            report.coordinates += 1;
            if err > report.max_rel_error || report.coordinates == 1 {
                report.max_rel_error = err;
                report.worst = (params.name(id).to_string(), i);
            }
        }
    }
    Ok(report)
}
