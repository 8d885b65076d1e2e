use super::tape::ParamSet;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Adaptive-moment optimizer settings with decoupled weight decay.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_weight_decay() -> f64 {
    0.01
}

impl OptimizerConfig {
    pub fn new(learning_rate: f64) -> Self {
        OptimizerConfig {
            learning_rate,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            weight_decay: default_weight_decay(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::Config("beta1/beta2 must lie in (0,1)".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("eps must be > 0".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        Ok(())
    }
}

/// One bias-corrected adaptive-moment update over every block. Weight decay
/// is applied directly to the value, not through the gradient.
pub fn optimizer_step(params: &mut ParamSet, cfg: &OptimizerConfig) -> Result<()> {
    cfg.validate()?;
    if let Some(first) = params.blocks().first() {
        let step = first.step_count;
        if params.blocks().iter().any(|b| b.step_count != step) {
            return Err(Error::Contract("inconsistent step_count across blocks".into()));
        }
    }
    for block in params.blocks_mut() {
        if !block.grad.is_finite() {
            return Err(Error::Training {
                block: block.name.clone(),
                message: "non-finite gradient".into(),
            });
        }
        let t = block.step_count + 1;
        let bc1 = 1.0 - cfg.beta1.powi(t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(t as i32);
        let decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
        let n = block.value.data().len();
        for i in 0..n {
            let g = block.grad.data()[i];
            let mut v = block.value.data()[i] * decay;
            let m1 = cfg.beta1 * block.moment1.data()[i] + (1.0 - cfg.beta1) * g;
            let m2 = cfg.beta2 * block.moment2.data()[i] + (1.0 - cfg.beta2) * g * g;
            v -= cfg.learning_rate * (m1 / bc1) / ((m2 / bc2).sqrt() + cfg.eps);
            block.value.data_mut()[i] = v;
            block.moment1.data_mut()[i] = m1;
            block.moment2.data_mut()[i] = m2;
        }
        block.step_count = t;
    }
    Ok(())
}
