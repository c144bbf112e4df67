use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fixed sinusoidal position table:
/// `PE[p, 2i] = sin(p / 10000^(2i/d))`, `PE[p, 2i+1] = cos(p / 10000^(2i/d))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalEncoding {
    max_len: usize,
    model_dim: usize,
    table: Tensor,
}

impl PositionalEncoding {
    pub fn new(max_len: usize, model_dim: usize) -> Self {
        let mut table = Tensor::zeros(&[max_len, model_dim]);
        for p in 0..max_len {
            let row = table.row_mut(p);
            for (j, slot) in row.iter_mut().enumerate() {
                let pair = (j / 2 * 2) as f64;
                let angle = p as f64 / 10000f64.powf(pair / model_dim as f64);
                *slot = if j % 2 == 0 { angle.sin() } else { angle.cos() };
            }
        }
        PositionalEncoding {
            max_len,
            model_dim,
            table,
        }
    }

    /// A table of zeros: encoding becomes the identity.
    pub fn disabled(max_len: usize, model_dim: usize) -> Self {
        PositionalEncoding {
            max_len,
            model_dim,
            table: Tensor::zeros(&[max_len, model_dim]),
        }
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn model_dim(&self) -> usize {
        self.model_dim
    }

    pub fn table(&self) -> &Tensor {
        &self.table
    }

    /// `seq + table[0..len]`. The gradient w.r.t. `seq` is the upstream
    /// gradient unchanged.
    pub fn encode(&self, seq: &Tensor) -> Result<Tensor> {
        let len = seq.rows();
        if seq.shape() != [len, self.model_dim] {
            return Err(Error::shape("positional_encode", seq.shape(), &[len, self.model_dim]));
        }
        if len > self.max_len {
            return Err(Error::Capacity { len, max: self.max_len });
        }
        let mut out = seq.clone();
        for (o, t) in out.data_mut().iter_mut().zip(self.table.data()) {
            *o += t;
        }
        Ok(out)
    }
}
