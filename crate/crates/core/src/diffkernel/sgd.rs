use serde::{Deserialize, Serialize};

use super::LinearLayer;
use crate::{Error, Result};

/// SGD with classic momentum and step decays at fixed fractions of training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub total_steps: usize,
    pub decay_points: Vec<f64>,
    pub decay_factor: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            momentum: 0.9,
            total_steps: 0,
            decay_points: vec![1.0 / 3.0, 2.0 / 3.0],
            decay_factor: 0.1,
        }
    }
}

impl SgdConfig {
    pub fn with_total_steps(mut self, total_steps: usize) -> Self {
        self.total_steps = total_steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor.is_finite()) {
            return Err(Error::Parameter(format!("decay factor {} must be positive", self.decay_factor)));
        }
        let mut prev = 0.0;
        for &p in &self.decay_points {
            if !(p > prev && p < 1.0) {
                return Err(Error::Parameter(format!(
                    "decay points {:?} must be strictly increasing inside (0, 1)",
                    self.decay_points
                )));
            }
            prev = p;
        }
        Ok(())
    }

    /// Learning rate in effect at `step` (0-based).
    pub fn lr_at(&self, step: usize) -> f64 {
        let total = self.total_steps as f64;
        // tolerance absorbs 1/3 and 2/3 not being exact in binary
        let passed = self.decay_points.iter().filter(|&&p| step as f64 >= p * total - 1e-9).count();
        self.learning_rate * self.decay_factor.powi(passed as i32)
    }
}

/// One momentum update: `v <- m v + g`, `w <- w - lr(step) v`.
pub fn sgd_step(layers: &mut [LinearLayer], config: &SgdConfig, step: usize) {
    let lr = config.lr_at(step);
    let m = config.momentum;
    for layer in layers {
        let LinearLayer { weight, bias, weight_grad, bias_grad, weight_velocity, bias_velocity } = layer;
        update(weight.values_mut(), weight_grad.values(), weight_velocity.values_mut(), lr, m);
        update(bias, bias_grad, bias_velocity, lr, m);
    }
}

fn update(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, m: f64) {
    for ((w, g), v) in params.iter_mut().zip(grads).zip(velocity) {
        *v = m * *v + g;
        *w -= lr * *v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffkernel::Tensor2;

    fn scalar_layer() -> LinearLayer {
        LinearLayer::from_parts(Tensor2::zeros(1, 1), vec![0.0]).unwrap()
    }

    fn set_unit_grad(l: &mut LinearLayer) {
        l.weight_grad.values_mut()[0] = 1.0;
        l.bias_grad[0] = 1.0;
    }

    #[test]
    fn vanilla_step() {
        let cfg = SgdConfig { momentum: 0.0, total_steps: 10, ..SgdConfig::default() };
        let mut layers = vec![scalar_layer()];
        set_unit_grad(&mut layers[0]);
        sgd_step(&mut layers, &cfg, 0);
        assert_eq!(layers[0].weight().values()[0], -0.1);
    }

    #[test]
    fn momentum_unrolls() {
        let cfg = SgdConfig { total_steps: 100, ..SgdConfig::default() };
        let mut layers = vec![scalar_layer()];
        for step in 0..2 {
            set_unit_grad(&mut layers[0]);
            sgd_step(&mut layers, &cfg, step);
        }
        assert!((layers[0].weight().values()[0] + 0.29).abs() < 1e-15);
    }

    #[test]
    fn schedule_decays_at_thirds() {
        let cfg = SgdConfig::default().with_total_steps(9);
        let lrs: Vec<f64> = (0..9).map(|s| cfg.lr_at(s)).collect();
        assert_eq!(lrs[2], 0.1);
        assert!((lrs[3] - 0.01).abs() < 1e-15);
        assert!((lrs[5] - 0.01).abs() < 1e-15);
        assert!((lrs[6] - 0.001).abs() < 1e-15);
    }

    #[test]
    fn schedule_takes_three_values() {
        for total in [3usize, 7, 10, 100, 1001] {
            let cfg = SgdConfig::default().with_total_steps(total);
            let mut seen: Vec<u64> = (0..total).map(|s| cfg.lr_at(s).to_bits()).collect();
            seen.dedup();
            assert_eq!(seen.len(), 3, "total {total}");
        }
    }

    #[test]
    fn validation() {
        assert!(SgdConfig::default().validate().is_ok());
        assert!(SgdConfig { learning_rate: 0.0, ..SgdConfig::default() }.validate().is_err());
        assert!(SgdConfig { momentum: 1.0, ..SgdConfig::default() }.validate().is_err());
        assert!(SgdConfig { decay_points: vec![0.6, 0.3], ..SgdConfig::default() }.validate().is_err());
        assert!(SgdConfig { decay_points: vec![0.5, 1.0], ..SgdConfig::default() }.validate().is_err());
    }
}
