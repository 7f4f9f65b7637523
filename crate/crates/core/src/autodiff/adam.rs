//! Adam with bias correction.

use super::params::ParamSet;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First/second-moment accumulators, laid out in [`ParamSet`] order.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        AdamState {
            m: params.iter().map(|p| vec![0.0; p.values.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.values.len()]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update over every parameter. `grads` must be aligned with the
/// parameter set (one gradient vector per parameter, zeros for untouched
/// ones).
pub fn adam_step(
    params: &mut ParamSet,
    grads: &[Vec<f64>],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::domain(format!(
            "Adam state/gradient count mismatch: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - ADAM_BETA1.powi(t);
    let bias2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..params.len() {
        let p = params.by_index_mut(i);
        if grads[i].len() != p.values.len() {
            return Err(Error::domain(format!(
                "gradient length {} for parameter {:?} of length {}",
                grads[i].len(),
                p.name,
                p.values.len()
            )));
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for ((pv, &g), (mi, vi)) in p
            .values
            .iter_mut()
            .zip(&grads[i])
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * g;
            *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *mi / bias1;
            let v_hat = *vi / bias2;
            *pv -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
    }
    Ok(())
}
