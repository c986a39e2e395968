//! SGD with momentum and AdamW, both with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgdm,
    Adamw,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgdm" => Ok(OptimizerKind::Sgdm),
            "adamw" => Ok(OptimizerKind::Adamw),
            _ => Err(Error::InvalidParameter(format!("unknown optimizer `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerParams {
    /// SGD momentum, also AdamW's `beta1`.
    pub momentum: f64,
    pub weight_decay: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            weight_decay: 5e-4,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub params: OptimizerParams,
    /// Velocity (SGDM) or first moment (AdamW).
    pub first: Vec<f64>,
    /// Second moment, AdamW only.
    pub second: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, params: OptimizerParams, n: usize) -> Self {
        let second = match kind {
            OptimizerKind::Sgdm => Vec::new(),
            OptimizerKind::Adamw => vec![0.0; n],
        };
        Self {
            kind,
            params,
            first: vec![0.0; n],
            second,
            step: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgdm => sgdm_step(self, theta, grads, lr),
            OptimizerKind::Adamw => adamw_step(self, theta, grads, lr),
        }
    }
}

fn check(state: &OptimizerState, theta: &[f64], grads: &[f64]) -> Result<()> {
    if theta.len() != state.first.len() {
        return Err(Error::ShapeMismatch {
            expected: state.first.len(),
            actual: theta.len(),
        });
    }
    if grads.len() != theta.len() {
        return Err(Error::ShapeMismatch {
            expected: theta.len(),
            actual: grads.len(),
        });
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(i));
    }
    Ok(())
}

/// `theta *= 1 - lr*wd; v = mu*v + g; theta -= lr*v`.
pub fn sgdm_step(state: &mut OptimizerState, theta: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    check(state, theta, grads)?;
    let mu = state.params.momentum;
    let decay = 1.0 - lr * state.params.weight_decay;
    for ((th, v), g) in theta.iter_mut().zip(state.first.iter_mut()).zip(grads) {
        *th *= decay;
        *v = mu * *v + g;
        *th -= lr * *v;
    }
    state.step += 1;
    Ok(())
}

pub fn adamw_step(state: &mut OptimizerState, theta: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    check(state, theta, grads)?;
    if state.second.len() != theta.len() {
        state.second = vec![0.0; theta.len()];
    }
    state.step += 1;
    let p = state.params;
    let (b1, b2) = (p.momentum, p.beta2);
    let t = state.step as i32;
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let decay = 1.0 - lr * p.weight_decay;
    for (((th, m), v), g) in theta
        .iter_mut()
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
        .zip(grads)
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *th = *th * decay - lr * m_hat / (v_hat.sqrt() + p.eps);
    }
    Ok(())
}
