use candle_core::{Tensor, Var};
use candle_core::backprop::GradStore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Rmsprop,
}

/// RMSProp settings. `decay` is the smoothing constant of the squared
/// gradient average, not a learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub lr: f64,
    pub momentum: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Rmsprop,
            lr: 1e-4,
            momentum: 0.9,
            decay: 0.9,
            epsilon: 1.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.momentum)
            && (0.0..1.0).contains(&self.decay)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid optimizer settings {self:?}")))
        }
    }
}

struct Slot {
    var: Var,
    square_avg: Tensor,
    momentum: Tensor,
}

/// RMSProp in PyTorch's formulation:
///
/// ```text
/// v   <- decay * v + (1 - decay) * g^2
/// buf <- momentum * buf + g / (sqrt(v) + eps)
/// p   <- p - lr * buf
/// ```
pub struct RmsProp {
    cfg: OptimizerConfig,
    slots: Vec<Slot>,
}

impl RmsProp {
    pub fn new(vars: Vec<Var>, cfg: OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        let slots = vars
            .into_iter()
            .map(|var| {
                let z = var.zeros_like()?;
                Ok(Slot {
                    square_avg: z.clone(),
                    momentum: z,
                    var,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cfg, slots })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    /// Applies one update; variables without a gradient are left alone.
    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        let c = self.cfg;
        for slot in &mut self.slots {
            let Some(g) = grads.get(&slot.var) else {
                continue;
            };
            let g = g.detach();
            slot.square_avg = ((&slot.square_avg * c.decay)? + (g.sqr()? * (1.0 - c.decay))?)?;
            let denom = (slot.square_avg.sqrt()? + c.epsilon)?;
            let step = g.div(&denom)?;
            let update = if c.momentum > 0.0 {
                slot.momentum = ((&slot.momentum * c.momentum)? + step)?;
                slot.momentum.clone()
            } else {
                step
            };
            slot.var.set(&slot.var.as_tensor().sub(&(update * c.lr)?)?.detach())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    /// Scalar reference implementation of the same recurrences.
    fn reference(grads: &[f64], c: OptimizerConfig, p0: f64) -> f64 {
        let (mut p, mut v, mut b) = (p0, 0.0, 0.0);
        for &g in grads {
            v = c.decay * v + (1.0 - c.decay) * g * g;
            b = c.momentum * b + g / (v.sqrt() + c.epsilon);
            p -= c.lr * b;
        }
        p
    }

    #[test]
    fn matches_scalar_recurrence() {
        let dev = Device::Cpu;
        let cfg = OptimizerConfig { lr: 0.01, ..Default::default() };
        let x = Var::from_tensor(&Tensor::new(&[2.0f64], &dev).unwrap()).unwrap();
        let mut opt = RmsProp::new(vec![x.clone()], cfg).unwrap();
        let mut seen = Vec::new();
        let mut p = 2.0;
        for _ in 0..20 {
            // loss = x^3, gradient 3 x^2 at the current value
            let loss = x.as_tensor().powf(3.0).unwrap().sum_all().unwrap();
            let g = loss.backward().unwrap();
            seen.push(3.0 * p * p);
            opt.step(&g).unwrap();
            p = x.as_tensor().to_vec1::<f64>().unwrap()[0];
            assert!((p - reference(&seen, cfg, 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn defaults_are_the_published_settings() {
        let c = OptimizerConfig::default();
        assert_eq!((c.lr, c.momentum, c.decay, c.epsilon), (1e-4, 0.9, 0.9, 1.0));
        assert!(OptimizerConfig { momentum: 1.0, ..c }.validate().is_err());
    }
}
