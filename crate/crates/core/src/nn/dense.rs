use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: &Tensor) -> Tensor {
        match self {
            Activation::Identity => x.clone(),
            Activation::Relu => x.relu(),
            Activation::Tanh => x.tanh(),
        }
    }

    /// d(activation)/d(pre) expressed through the pre-activation and the
    /// output of the forward pass.
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }
}

/// Fully connected layer: `activation(x · W + b)` over a batch of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Tensor,
    pre: Tensor,
    output: Tensor,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

impl DenseLayer {
    /// Glorot-normal weights, zero bias.
    pub fn new(inputs: usize, outputs: usize, activation: Activation, rng: &mut RngState) -> Self {
        let std = (2.0 / (inputs + outputs) as f64).sqrt();
        DenseLayer {
            weights: rng.normal(&[inputs, outputs]).scale(std),
            bias: Tensor::zeros(&[outputs]),
            activation,
        }
    }

    pub fn from_parts(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        match weights.shape() {
            &[_, out] if bias.shape() == [out] => Ok(DenseLayer {
                weights,
                bias,
                activation,
            }),
            _ => Err(Error::shape("DenseLayer", weights.shape(), bias.shape())),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, DenseCache)> {
        let pre = x.matmul(&self.weights)?.add_row_vector(&self.bias)?;
        let output = self.activation.apply(&pre);
        let cache = DenseCache {
            input: x.clone(),
            pre,
            output: output.clone(),
        };
        Ok((output, cache))
    }

    /// Forward pass without keeping a cache.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let pre = x.matmul(&self.weights)?.add_row_vector(&self.bias)?;
        Ok(self.activation.apply(&pre))
    }

    pub fn backward(&self, cache: &DenseCache, upstream: &Tensor) -> Result<DenseGrads> {
        let batch = cache.input.rows();
        if cache.input.shape() != [batch, self.inputs()] || cache.pre.shape() != [batch, self.outputs()] {
            return Err(Error::Contract(format!(
                "dense cache with input {:?} does not belong to a {}x{} layer",
                cache.input.shape(),
                self.inputs(),
                self.outputs()
            )));
        }
        if upstream.shape() != cache.pre.shape() {
            return Err(Error::shape("dense_backward", upstream.shape(), cache.pre.shape()));
        }
        let mut delta = upstream.clone();
        if self.activation != Activation::Identity {
            for ((d, &p), &o) in delta
                .data_mut()
                .iter_mut()
                .zip(cache.pre.data())
                .zip(cache.output.data())
            {
                *d *= self.activation.derivative(p, o);
            }
        }
        Ok(DenseGrads {
            input: delta.matmul_nt(&self.weights)?,
            weights: cache.input.matmul_tn(&delta)?,
            bias: delta.sum_rows()?,
        })
    }
}

impl DenseGrads {
    /// Parameter gradients in `Parameters` order.
    pub fn into_params(self) -> Vec<Tensor> {
        vec![self.weights, self.bias]
    }
}

impl Parameters for DenseLayer {
    fn parameters(&self) -> Vec<&Tensor> {
        vec![&self.weights, &self.bias]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weights, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_input_gradient, check_parameter_gradients};

    #[test]
    fn zero_layer_outputs_zero() {
        let layer = DenseLayer::from_parts(Tensor::zeros(&[3, 2]), Tensor::zeros(&[2]), Activation::Identity).unwrap();
        let x = RngState::new(1).normal(&[4, 3]);
        let (y, _) = layer.forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_relu() {
        let layer = DenseLayer::from_parts(Tensor::identity(2), Tensor::zeros(&[2]), Activation::Relu).unwrap();
        let x = Tensor::from_rows(&[vec![-2.0, 3.0]]).unwrap();
        assert_eq!(layer.forward(&x).unwrap().0.data(), &[0.0, 3.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = RngState::new(4);
        let layer = DenseLayer::new(3, 5, Activation::Tanh, &mut rng);
        let x = rng.normal(&[2, 3]);
        let (_, cache) = layer.forward(&x).unwrap();
        let g = layer.backward(&cache, &Tensor::zeros(&[2, 5])).unwrap();
        for t in [&g.input, &g.weights, &g.bias] {
            assert!(t.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn scalar_chain_rule() {
        let layer = DenseLayer::from_parts(
            Tensor::matrix(1, 1, vec![0.7]).unwrap(),
            Tensor::zeros(&[1]),
            Activation::Identity,
        )
        .unwrap();
        let x = Tensor::matrix(1, 1, vec![3.0]).unwrap();
        let (_, cache) = layer.forward(&x).unwrap();
        let g = layer
            .backward(&cache, &Tensor::matrix(1, 1, vec![2.0]).unwrap())
            .unwrap();
        assert_eq!(g.weights.data(), &[6.0]);
        assert_eq!(g.bias.data(), &[2.0]);
        assert!((g.input.data()[0] - 1.4).abs() < 1e-15);
    }

    #[test]
    fn mismatched_cache_is_rejected() {
        let mut rng = RngState::new(2);
        let small = DenseLayer::new(3, 4, Activation::Relu, &mut rng);
        let other = DenseLayer::new(5, 4, Activation::Relu, &mut rng);
        let (_, cache) = small.forward(&rng.normal(&[2, 3])).unwrap();
        assert!(matches!(
            other.backward(&cache, &Tensor::zeros(&[2, 4])),
            Err(Error::Contract(_))
        ));
        assert!(small.backward(&cache, &Tensor::zeros(&[2, 5])).is_err());
        assert!(small.forward(&rng.normal(&[2, 4])).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        for (seed, act) in [
            (10, Activation::Identity),
            (11, Activation::Tanh),
            (12, Activation::Relu),
        ] {
            let mut rng = RngState::new(seed);
            let mut layer = DenseLayer::new(6, 5, act, &mut rng);
            layer.bias = rng.normal(&[5]).scale(0.3);
            let x = rng.normal(&[4, 6]);
            let probe = rng.normal(&[4, 5]);
            let (_, cache) = layer.forward(&x).unwrap();
            let grads = layer.backward(&cache, &probe).unwrap();
            let f = |l: &DenseLayer, x: &Tensor| l.infer(x).unwrap();
            check_input_gradient(&layer, &x, &probe, &grads.input, f);
            check_parameter_gradients(&mut layer, &x, &probe, &grads.into_params(), f);
        }
    }
}
