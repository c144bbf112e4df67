use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments, one accumulator pair per parameter
/// tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let first: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Adam {
            config,
            step: 0,
            second: first.clone(),
            first,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.config.learning_rate
    }

    pub fn set_learning_rate(&mut self, learning_rate: f64) {
        self.config.learning_rate = learning_rate;
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.second
    }

    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Contract(format!(
                "adam tracks {} tensors, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.shape() != m.shape() || g.shape() != m.shape() {
                return Err(Error::shape("adam_step", p.shape(), g.shape()));
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let correction1 = 1.0 - beta1.powi(self.step as i32);
        let correction2 = 1.0 - beta2.powi(self.step as i32);
        for (((param, grad), m), v) in params.into_iter().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            for (((w, &g), m), v) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::vector(vec![v]).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_fresh_parameters_and_decays_moments() {
        let mut w = Tensor::vector(vec![1.0, -2.0]).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), [&w]);
        adam.step(vec![&mut w], &[Tensor::zeros(&[2])]).unwrap();
        assert_eq!(w.data(), &[1.0, -2.0]);

        adam.step(vec![&mut w], &[Tensor::vector(vec![0.5, 0.5]).unwrap()])
            .unwrap();
        let m = adam.first_moments()[0].clone();
        let v = adam.second_moments()[0].clone();
        adam.step(vec![&mut w], &[Tensor::zeros(&[2])]).unwrap();
        assert_eq!(adam.first_moments()[0], m.scale(0.9));
        assert_eq!(adam.second_moments()[0], v.scale(0.999));
        assert_eq!(adam.step_count(), 3);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [3.0, -0.02] {
            let mut w = scalar(0.0);
            let mut adam = Adam::new(AdamConfig::default(), [&w]);
            adam.step(vec![&mut w], &[scalar(g)]).unwrap();
            // m̂ = g, v̂ = g², so the step is lr·g/(|g| + eps).
            let expected = -1e-3 * g / (g.abs() + 1e-8);
            assert!((w.data()[0] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut w = scalar(0.0);
        let config = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(config, [&w]);
        for _ in 0..200 {
            let grad = scalar(2.0 * (w.data()[0] - 3.0));
            adam.step(vec![&mut w], &[grad]).unwrap();
        }
        assert!((w.data()[0] - 3.0).abs() < 0.1, "w = {}", w.data()[0]);
    }

    #[test]
    fn reproducible_and_shape_checked() {
        let run = || {
            let mut w = Tensor::vector(vec![0.1, 0.2, 0.3]).unwrap();
            let mut adam = Adam::new(AdamConfig::default(), [&w]);
            for i in 0..10 {
                let g = w.map(|x| x * x - i as f64 * 0.1);
                adam.step(vec![&mut w], &[g]).unwrap();
            }
            w
        };
        assert_eq!(run(), run());

        let mut w = scalar(0.0);
        let mut adam = Adam::new(AdamConfig::default(), [&w]);
        assert!(adam.step(vec![&mut w], &[Tensor::zeros(&[2])]).is_err());
    }
}
