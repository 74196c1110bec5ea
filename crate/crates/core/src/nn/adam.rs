use super::network::Network;
use super::tensor::Scalar;
use crate::error::{Error, Result};

pub const DEFAULT_LR: f64 = 1e-4;

/// Adam moments for every parameter group of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<T: Scalar>(net: &Network<T>, lr: f64) -> Self {
        let sizes: Vec<usize> = net.params().iter().map(|p| p.value.len()).collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One bias-corrected Adam update from the network's accumulated gradients.
/// Parameters are left untouched if any gradient is non-finite.
pub fn adam_step<T: Scalar>(state: &mut AdamState, net: &mut Network<T>) -> Result<()> {
    let mut params = net.params_mut();
    if params.len() != state.m.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![state.m.len()],
            got: vec![params.len()],
        });
    }
    for (i, p) in params.iter().enumerate() {
        if p.grad.len() != state.m[i].len() {
            return Err(Error::ShapeMismatch {
                expected: vec![state.m[i].len()],
                got: vec![p.grad.len()],
            });
        }
        if p.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(i));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..p.value.len() {
            let g = p.grad[j].f64();
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            let delta = state.lr * mhat / (vhat.sqrt() + state.eps);
            p.value[j] = T::of(p.value[j].f64() - delta);
        }
    }
    Ok(())
}
