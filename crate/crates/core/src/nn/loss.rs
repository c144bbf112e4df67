use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Mse,
    Mae,
}

impl LossKind {
    /// Mean over all elements, and its gradient w.r.t. `prediction`.
    /// The MAE subgradient at a zero residual is 0.
    pub fn evaluate(self, prediction: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
        if prediction.shape() != target.shape() {
            return Err(Error::shape("loss", prediction.shape(), target.shape()));
        }
        let n = prediction.len() as f64;
        let residual = prediction.sub(target)?;
        match self {
            LossKind::Mse => {
                let value = residual.data().iter().map(|r| r * r).sum::<f64>() / n;
                Ok((value, residual.scale(2.0 / n)))
            }
            LossKind::Mae => {
                let value = residual.data().iter().map(|r| r.abs()).sum::<f64>() / n;
                let grad = residual.map(|r| {
                    if r > 0.0 {
                        1.0 / n
                    } else if r < 0.0 {
                        -1.0 / n
                    } else {
                        0.0
                    }
                });
                Ok((value, grad))
            }
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "mae" => Ok(LossKind::Mae),
            other => Err(Error::Config(format!("unknown loss {other:?} (expected mse or mae)"))),
        }
    }
}
