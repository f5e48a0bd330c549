//! Central-difference verification of tape gradients (64-bit only).

use super::params::ParameterStore;
use super::tape::{NodeId, Tape};
use crate::error::{Error, Result};

/// Magnitudes below this are compared absolutely rather than relatively.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `(parameter name, max relative error over its elements)`
    pub per_parameter: Vec<(String, f64)>,
    pub max_relative_error: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

fn eval_loss<F>(loss: &mut F, store: &ParameterStore<f64>) -> Result<f64>
where
    F: FnMut(&mut Tape<f64>, &ParameterStore<f64>) -> Result<NodeId>,
{
    let mut tape = Tape::inference();
    let root = loss(&mut tape, store)?;
    let v = tape.value(root);
    if !v.is_scalar() {
        return Err(Error::NonScalarRoot {
            shape: v.shape().to_vec(),
        });
    }
    Ok(v.item())
}

/// Compares tape gradients of `loss` against central differences with step
/// `epsilon`, for every element of every parameter in `store`.
pub fn finite_difference_check<F>(
    mut loss: F,
    store: &ParameterStore<f64>,
    epsilon: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<f64>, &ParameterStore<f64>) -> Result<NodeId>,
{
    let first = eval_loss(&mut loss, store)?;
    let second = eval_loss(&mut loss, store)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }

    let mut analytic = store.clone();
    analytic.zero_grads();
    let mut tape = Tape::new();
    let root = loss(&mut tape, &analytic)?;
    tape.backward(root, &mut analytic)?;

    let mut probe = store.clone();
    let mut per_parameter = Vec::with_capacity(store.len());
    for (name, param) in analytic.iter() {
        let mut worst = 0.0f64;
        for (k, &grad) in param.grad.iter().enumerate() {
            let base = param.value.data()[k];
            probe.value_mut(name)?.data_mut()[k] = base + epsilon;
            let plus = eval_loss(&mut loss, &probe)?;
            probe.value_mut(name)?.data_mut()[k] = base - epsilon;
            let minus = eval_loss(&mut loss, &probe)?;
            probe.value_mut(name)?.data_mut()[k] = base;
            let numeric = (plus - minus) / (2.0 * epsilon);
            worst = worst.max(relative_error(grad, numeric));
        }
        per_parameter.push((name.to_string(), worst));
    }
    let max_relative_error = per_parameter.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(GradCheckReport {
        per_parameter,
        max_relative_error,
    })
}
