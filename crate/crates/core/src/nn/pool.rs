use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reduces a `len × dim` sequence to a single `dim` vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Last,
}

impl Pooling {
    pub fn pool(self, seq: &Tensor) -> Result<Tensor> {
        if seq.shape().len() != 2 {
            return Err(Error::Contract(format!(
                "pooling expects a len x dim sequence, got {:?}",
                seq.shape()
            )));
        }
        let len = seq.rows();
        match self {
            Pooling::Mean => Ok(seq.sum_rows()?.scale(1.0 / len as f64)),
            Pooling::Last => Tensor::vector(seq.row(len - 1).to_vec()),
        }
    }

    /// Gradient w.r.t. the pooled sequence given the gradient of the pooled
    /// vector.
    pub fn backward(self, len: usize, upstream: &Tensor) -> Result<Tensor> {
        if len == 0 {
            return Err(Error::Contract("pooling backward over an empty sequence".into()));
        }
        let dim = upstream.len();
        let mut out = Tensor::zeros(&[len, dim]);
        match self {
            Pooling::Mean => {
                let share = upstream.scale(1.0 / len as f64);
                for r in 0..len {
                    out.row_mut(r).copy_from_slice(share.data());
                }
            }
            Pooling::Last => out.row_mut(len - 1).copy_from_slice(upstream.data()),
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_input_gradient;
    use crate::rng::RngState;

    #[test]
    fn single_row_either_mode() {
        let x = Tensor::from_rows(&[vec![1.5, -2.0]]).unwrap();
        assert_eq!(Pooling::Mean.pool(&x).unwrap().data(), &[1.5, -2.0]);
        assert_eq!(Pooling::Last.pool(&x).unwrap().data(), &[1.5, -2.0]);
    }

    #[test]
    fn mean_and_last() {
        let x = Tensor::from_rows(&[vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(Pooling::Mean.pool(&x).unwrap().data(), &[1.0, 1.0]);
        assert_eq!(Pooling::Last.pool(&x).unwrap().data(), &[2.0, 0.0]);
    }

    #[test]
    fn rejects_non_sequences() {
        assert!(matches!(
            Pooling::Mean.pool(&Tensor::zeros(&[3])),
            Err(Error::Contract(_))
        ));
        assert!(Pooling::Mean.backward(0, &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = RngState::new(17);
        for mode in [Pooling::Mean, Pooling::Last] {
            let x = rng.normal(&[5, 4]);
            let probe = rng.normal(&[4]);
            let g = mode.backward(5, &probe).unwrap();
            if mode == Pooling::Mean {
                for r in 0..5 {
                    for (a, b) in g.row(r).iter().zip(probe.data()) {
                        assert!((a - b / 5.0).abs() < 1e-15);
                    }
                }
            }
            check_input_gradient(&mode, &x, &probe, &g, |m, x| m.pool(x).unwrap());
        }
    }
}
