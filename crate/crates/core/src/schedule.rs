//! Learning-rate schedules, stepped once per mini-batch.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// 1cycle policy with cosine legs.
///
/// The rate climbs from `lr_max / div_factor` to `lr_max` over the first
/// `warmup_fraction` of the iterations, then anneals to
/// `lr_max / div_factor / final_div_factor` at `total_iterations`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneCycleConfig {
    pub lr_max: f64,
    pub div_factor: f64,
    pub warmup_fraction: f64,
    pub total_iterations: usize,
    pub final_div_factor: f64,
}

impl OneCycleConfig {
    pub fn new(lr_max: f64, total_iterations: usize) -> Self {
        Self {
            lr_max,
            div_factor: 25.0,
            warmup_fraction: 0.30,
            total_iterations,
            final_div_factor: 1e4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_max > 0.0 && self.lr_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("lr_max must be positive, got {}", self.lr_max)));
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "warmup_fraction must lie in (0, 1), got {}",
                self.warmup_fraction
            )));
        }
        if self.total_iterations < 2 {
            return Err(Error::InvalidParameter("1cycle needs at least 2 iterations".into()));
        }
        if !(self.div_factor > 0.0 && self.final_div_factor > 0.0) {
            return Err(Error::InvalidParameter("division factors must be positive".into()));
        }
        Ok(())
    }

    pub fn initial_lr(&self) -> f64 {
        self.lr_max / self.div_factor
    }

    pub fn final_lr(&self) -> f64 {
        self.initial_lr() / self.final_div_factor
    }

    pub fn lr_at(&self, iteration: usize) -> Result<f64> {
        self.validate()?;
        if iteration > self.total_iterations {
            return Err(Error::InvalidParameter(format!(
                "iteration {iteration} beyond total {}",
                self.total_iterations
            )));
        }
        let t = iteration as f64;
        let total = self.total_iterations as f64;
        let warm = self.warmup_fraction * total;
        Ok(if t <= warm {
            cosine(self.initial_lr(), self.lr_max, t / warm)
        } else {
            cosine(self.lr_max, self.final_lr(), (t - warm) / (total - warm))
        })
    }
}

/// Cosine interpolation from `start` (pct = 0) to `end` (pct = 1).
fn cosine(start: f64, end: f64, pct: f64) -> f64 {
    end + (start - end) / 2.0 * (1.0 + (PI * pct).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    OneCycle(OneCycleConfig),
    Constant { lr: f64 },
    /// Multiplies the rate by `drop_factor` every `drop_every` iterations.
    Piecewise {
        lr: f64,
        drop_factor: f64,
        drop_every: usize,
    },
}

impl Schedule {
    pub fn lr_at(&self, iteration: usize) -> Result<f64> {
        match *self {
            Schedule::OneCycle(cfg) => cfg.lr_at(iteration),
            Schedule::Constant { lr } => Ok(lr),
            Schedule::Piecewise {
                lr,
                drop_factor,
                drop_every,
            } => {
                let drops = iteration / drop_every.max(1);
                Ok(lr * drop_factor.powi(drops as i32))
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Schedule::OneCycle(_) => "onecycle",
            Schedule::Constant { .. } => "constant",
            Schedule::Piecewise { .. } => "piecewise",
        }
    }
}
