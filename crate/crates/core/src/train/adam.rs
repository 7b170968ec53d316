use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Param;
use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Param<T>], config: AdamConfig) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| vec![T::zero(); p.tensor.numel()])
                .collect()
        };
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// One bias-corrected Adam update using each parameter's stored gradient;
/// parameters without a gradient are left alone. Any non-finite gradient
/// aborts before anything is modified.
pub fn adam_step<T: Scalar>(
    params: &mut [Param<T>],
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::Config(format!(
            "optimizer tracks {} parameters, model has {}",
            state.m.len(),
            params.len()
        )));
    }
    for p in params.iter() {
        if let Some(g) = p.tensor.grad() {
            let count = g.iter().filter(|v| !v.is_finite()).count();
            if count > 0 {
                return Err(Error::NonFiniteGradient {
                    param: p.name.clone(),
                    count,
                });
            }
        }
    }
    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let (b1, b2) = (T::from_f64_lossy(beta1), T::from_f64_lossy(beta2));
    let (c1, c2) = (
        T::from_f64_lossy(1.0 - beta1),
        T::from_f64_lossy(1.0 - beta2),
    );
    let bc1 = T::from_f64_lossy(1.0 - beta1.powi(t));
    let bc2 = T::from_f64_lossy(1.0 - beta2.powi(t));
    let (lr, eps) = (T::from_f64_lossy(lr), T::from_f64_lossy(eps));
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let Some(g) = p.tensor.grad().map(<[T]>::to_vec) else {
            continue;
        };
        for (((theta, &gi), mi), vi) in p
            .tensor
            .data_mut()
            .iter_mut()
            .zip(&g)
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mi = b1 * *mi + c1 * gi;
            *vi = b2 * *vi + c2 * gi * gi;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *theta -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
