//! Central-difference verification of analytic gradients.

use serde::Serialize;

use super::params::ParamStore;
use super::tape::{NodeId, Tape};
use crate::error::{MftError, Result};

/// A deterministic scalar objective over a parameter store.
pub trait Objective {
    fn loss(&self, params: &ParamStore) -> Result<f64>;

    /// Adds d(loss)/d(params) into the gradient buffers and returns the loss.
    fn accumulate_gradient(&self, params: &mut ParamStore) -> Result<f64>;
}

/// Wraps a closure that records a forward pass on a tape.
pub struct TapeObjective<F> {
    forward: F,
}

impl<F> TapeObjective<F>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<NodeId>,
{
    pub fn new(forward: F) -> Self {
        TapeObjective { forward }
    }
}

impl<F> Objective for TapeObjective<F>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<NodeId>,
{
    fn loss(&self, params: &ParamStore) -> Result<f64> {
        let mut tape = Tape::new();
        let node = (self.forward)(&mut tape, params)?;
        Ok(tape.scalar(node))
    }

    fn accumulate_gradient(&self, params: &mut ParamStore) -> Result<f64> {
        let mut tape = Tape::new();
        let node = (self.forward)(&mut tape, params)?;
        tape.backward(node, params)?;
        Ok(tape.scalar(node))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub per_param: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares analytic gradients with central differences for every entry of
/// every parameter. `params` is restored (values and zeroed grads) on return.
pub fn grad_check<O: Objective + ?Sized>(
    objective: &O,
    params: &mut ParamStore,
    eps: f64,
) -> Result<GradCheckReport> {
    params.zero_grads();
    let base = objective.accumulate_gradient(params)?;
    if !base.is_finite() {
        return Err(MftError::Numerical(format!("non-finite loss {base}")));
    }
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|(_, p)| p.grad.as_slice().to_vec())
        .collect();
    params.zero_grads();

    let mut per_param = Vec::with_capacity(params.len());
    let ids: Vec<_> = params.ids().collect();
    for (k, id) in ids.into_iter().enumerate() {
        let mut worst = ParamCheck {
            name: params.name(id).to_string(),
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
            rel_error: 0.0,
        };
        for j in 0..params.get(id).value.len() {
            let orig = params.get(id).value.as_slice()[j];
            params.get_mut(id).value.as_mut_slice()[j] = orig + eps;
            let plus = objective.loss(params);
            params.get_mut(id).value.as_mut_slice()[j] = orig - eps;
            let minus = objective.loss(params);
            params.get_mut(id).value.as_mut_slice()[j] = orig;
            let (plus, minus) = (plus?, minus?);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(MftError::Numerical("non-finite loss during perturbation".into()));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[k][j];
            let err = relative_error(a, numeric);
            if err > worst.rel_error || j == 0 {
                worst.worst_index = j;
                worst.analytic = a;
                worst.numeric = numeric;
                worst.rel_error = err;
            }
        }
        per_param.push(worst);
    }
    let max_rel_error = per_param.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        per_param,
    })
}
