//! Bias-corrected ADAM.

use crate::error::{Error, Result};
use crate::nncore::{Param, Tensor};

/// Optimizer hyperparameters used by [`adam_step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 2e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moments per parameter plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[Param]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        AdamState { m: zeros(), v: zeros(), t: 0 }
    }
}

/// One ADAM update of `params` with `grads`. Nothing is modified on error.
pub fn adam_step(params: &mut [Param], grads: &[Tensor], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::shape(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        g.expect_shape(p.value.shape(), "adam gradient")?;
        if !g.is_finite() {
            return Err(Error::NonFinite("adam gradient"));
        }
    }
    let t = state.t + 1;
    let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
    // Complements in f64: 1 - 0.999f32 is off by 1.3e-5 relative.
    let (a1, a2) = ((1.0 - cfg.beta1) as f32, (1.0 - cfg.beta2) as f32);
    let c1 = (1.0 - cfg.beta1.powf(t as f64)) as f32;
    let c2 = (1.0 - cfg.beta2.powf(t as f64)) as f32;
    let (lr, eps) = (cfg.lr as f32, cfg.eps as f32);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((w, &gv), mv), vv) in p.value.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *mv = b1 * *mv + a1 * gv;
            *vv = b2 * *vv + a2 * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    state.t = t;
    Ok(())
}
