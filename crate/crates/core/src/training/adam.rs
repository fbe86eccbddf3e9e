use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::Scalar;

/// Adam moments for every parameter, keyed by parameter name.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: BTreeMap<String, Vec<T>>,
    pub v: BTreeMap<String, Vec<T>>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ModelParams<T>, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: BTreeMap<String, Vec<T>> = params
            .iter()
            .map(|(k, t)| (k.clone(), vec![T::zero(); t.len()]))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            lr,
            beta1,
            beta2,
            eps,
        }
    }
}

/// One bias-corrected Adam update from the gradients stored on `params`:
///
/// ```text
/// m ← β₁m + (1-β₁)g        v ← β₂v + (1-β₂)g²
/// θ ← θ - lr · (m / (1-β₁ᵗ)) / (√(v / (1-β₂ᵗ)) + ε)
/// ```
///
/// Nothing is modified if any gradient is non-finite.
pub fn adam_step<T: Scalar>(params: &mut ModelParams<T>, state: &mut AdamState<T>) -> Result<()> {
    for (name, p) in params.iter() {
        let g = p
            .grad()
            .ok_or_else(|| Error::Contract(format!("parameter `{name}` has no gradient buffer")))?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NanGradient(name.clone()));
        }
        let m = state
            .m
            .get(name)
            .ok_or_else(|| Error::Contract(format!("no Adam state for `{name}`")))?;
        if m.len() != g.len() {
            return Err(Error::Contract(format!("Adam state for `{name}` has the wrong size")));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let b1 = T::from_f64_lossy(state.beta1);
    let b2 = T::from_f64_lossy(state.beta2);
    let one = T::one();
    let c1 = T::from_f64_lossy(1.0 - state.beta1.powi(t));
    let c2 = T::from_f64_lossy(1.0 - state.beta2.powi(t));
    let lr = T::from_f64_lossy(state.lr);
    let eps = T::from_f64_lossy(state.eps);
    for (name, p) in params.iter_mut() {
        let g: Vec<T> = p.grad().expect("checked above").to_vec();
        let m = state.m.get_mut(name).expect("checked above");
        let v = state.v.get_mut(name).expect("checked above");
        for (((theta, g), m), v) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *theta -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
