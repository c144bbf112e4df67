//! Multi-head scaled dot-product self-attention.
//!
//! ```text
//! Q_h = X·Wq_h   K_h = X·Wk_h   V_h = X·Wv_h        (len × head_dim)
//! A_h = softmax(Q_h·K_hᵀ / sqrt(head_dim))           (len × len)
//! Y   = [A_1·V_1 | … | A_H·V_H] · Wo                 (len × model_dim)
//! ```
//!
//! No masking: every position attends to every position in the context.
//! The backward pass uses the row-softmax Jacobian
//! `dS = A ⊙ (dA − rowsum(dA ⊙ A))`.

use super::Parameters;
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    heads: usize,
    model_dim: usize,
    pub query: Vec<Tensor>,
    pub key: Vec<Tensor>,
    pub value: Vec<Tensor>,
    pub output: Tensor,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    input: Tensor,
    q: Vec<Tensor>,
    k: Vec<Tensor>,
    v: Vec<Tensor>,
    weights: Vec<Tensor>,
    concat: Tensor,
}

#[derive(Debug, Clone)]
pub struct AttentionGrads {
    pub input: Tensor,
    pub query: Vec<Tensor>,
    pub key: Vec<Tensor>,
    pub value: Vec<Tensor>,
    pub output: Tensor,
}

impl MultiHeadAttention {
    pub fn new(model_dim: usize, heads: usize, rng: &mut RngState) -> Result<Self> {
        Self::check_dims(model_dim, heads)?;
        let head_dim = model_dim / heads;
        let proj_std = (2.0 / (model_dim + head_dim) as f64).sqrt();
        let draw = |n: usize, rng: &mut RngState| -> Vec<Tensor> {
            (0..n)
                .map(|_| rng.normal(&[model_dim, head_dim]).scale(proj_std))
                .collect()
        };
        let query = draw(heads, rng);
        let key = draw(heads, rng);
        let value = draw(heads, rng);
        let out_std = (1.0 / model_dim as f64).sqrt();
        let output = rng.normal(&[model_dim, model_dim]).scale(out_std);
        Ok(MultiHeadAttention {
            heads,
            model_dim,
            query,
            key,
            value,
            output,
        })
    }

    pub fn from_parts(query: Vec<Tensor>, key: Vec<Tensor>, value: Vec<Tensor>, output: Tensor) -> Result<Self> {
        let heads = query.len();
        let model_dim = output.shape()[0];
        Self::check_dims(model_dim, heads)?;
        let proj = [model_dim, model_dim / heads];
        if key.len() != heads || value.len() != heads {
            return Err(Error::Contract(format!(
                "attention needs {heads} key/value projections, got {}/{}",
                key.len(),
                value.len()
            )));
        }
        for t in query.iter().chain(&key).chain(&value) {
            if t.shape() != proj {
                return Err(Error::shape("MultiHeadAttention", t.shape(), &proj));
            }
        }
        if output.shape() != [model_dim, model_dim] {
            return Err(Error::shape(
                "MultiHeadAttention",
                output.shape(),
                &[model_dim, model_dim],
            ));
        }
        Ok(MultiHeadAttention {
            heads,
            model_dim,
            query,
            key,
            value,
            output,
        })
    }

    fn check_dims(model_dim: usize, heads: usize) -> Result<()> {
        if heads == 0 || model_dim == 0 || !model_dim.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "model_dim {model_dim} must be a positive multiple of head count {heads}"
            )));
        }
        Ok(())
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn model_dim(&self) -> usize {
        self.model_dim
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    fn scale(&self) -> f64 {
        1.0 / (self.head_dim() as f64).sqrt()
    }

    pub fn forward(&self, seq: &Tensor) -> Result<(Tensor, AttentionCache)> {
        if seq.shape().len() != 2 || seq.cols() != self.model_dim {
            return Err(Error::shape(
                "attention_forward",
                seq.shape(),
                &[seq.rows(), self.model_dim],
            ));
        }
        let len = seq.rows();
        let hd = self.head_dim();
        let mut cache = AttentionCache {
            input: seq.clone(),
            q: Vec::with_capacity(self.heads),
            k: Vec::with_capacity(self.heads),
            v: Vec::with_capacity(self.heads),
            weights: Vec::with_capacity(self.heads),
            concat: Tensor::zeros(&[len, self.model_dim]),
        };
        for h in 0..self.heads {
            let q = seq.matmul(&self.query[h])?;
            let k = seq.matmul(&self.key[h])?;
            let v = seq.matmul(&self.value[h])?;
            let weights = q.matmul_nt(&k)?.scale(self.scale()).softmax_rows()?;
            let head_out = weights.matmul(&v)?;
            cache.concat.set_column_block(h * hd, &head_out)?;
            cache.q.push(q);
            cache.k.push(k);
            cache.v.push(v);
            cache.weights.push(weights);
        }
        let out = cache.concat.matmul(&self.output)?;
        Ok((out, cache))
    }

    pub fn infer(&self, seq: &Tensor) -> Result<Tensor> {
        Ok(self.forward(seq)?.0)
    }

    pub fn backward(&self, cache: &AttentionCache, upstream: &Tensor) -> Result<AttentionGrads> {
        let len = cache.input.rows();
        if cache.q.len() != self.heads
            || cache.input.cols() != self.model_dim
            || cache.q.iter().any(|q| q.cols() != self.head_dim())
        {
            return Err(Error::Contract(format!(
                "attention cache ({} heads, input {:?}) does not belong to a {}-head, {}-dim block",
                cache.q.len(),
                cache.input.shape(),
                self.heads,
                self.model_dim
            )));
        }
        if upstream.shape() != [len, self.model_dim] {
            return Err(Error::shape(
                "attention_backward",
                upstream.shape(),
                &[len, self.model_dim],
            ));
        }
        let hd = self.head_dim();
        let x = &cache.input;
        let d_output = cache.concat.matmul_tn(upstream)?;
        let d_concat = upstream.matmul_nt(&self.output)?;
        let mut d_input = Tensor::zeros(&[len, self.model_dim]);
        let mut grads = AttentionGrads {
            input: Tensor::zeros(&[1]),
            query: Vec::with_capacity(self.heads),
            key: Vec::with_capacity(self.heads),
            value: Vec::with_capacity(self.heads),
            output: d_output,
        };
        for h in 0..self.heads {
            let a = &cache.weights[h];
            let d_head = d_concat.column_block(h * hd, hd)?;
            let d_weights = d_head.matmul_nt(&cache.v[h])?;
            let d_v = a.matmul_tn(&d_head)?;

            let mut d_scores = Tensor::zeros(&[len, len]);
            for r in 0..len {
                let a_row = a.row(r);
                let g_row = d_weights.row(r);
                let dot: f64 = a_row.iter().zip(g_row).map(|(p, g)| p * g).sum();
                for ((s, &p), &g) in d_scores.row_mut(r).iter_mut().zip(a_row).zip(g_row) {
                    *s = p * (g - dot) * self.scale();
                }
            }
            let d_q = d_scores.matmul(&cache.k[h])?;
            let d_k = d_scores.matmul_tn(&cache.q[h])?;

            grads.query.push(x.matmul_tn(&d_q)?);
            grads.key.push(x.matmul_tn(&d_k)?);
            grads.value.push(x.matmul_tn(&d_v)?);

            d_input.add_assign(&d_q.matmul_nt(&self.query[h])?)?;
            d_input.add_assign(&d_k.matmul_nt(&self.key[h])?)?;
            d_input.add_assign(&d_v.matmul_nt(&self.value[h])?)?;
        }
        grads.input = d_input;
        Ok(grads)
    }
}

impl AttentionCache {
    /// Per-head attention matrices (`len × len`, rows sum to one).
    pub fn attention_weights(&self) -> &[Tensor] {
        &self.weights
    }
}

impl AttentionGrads {
    /// Parameter gradients in `Parameters` order.
    pub fn into_params(self) -> Vec<Tensor> {
        let mut out = self.query;
        out.extend(self.key);
        out.extend(self.value);
        out.push(self.output);
        out
    }
}

impl Parameters for MultiHeadAttention {
    fn parameters(&self) -> Vec<&Tensor> {
        self.query
            .iter()
            .chain(&self.key)
            .chain(&self.value)
            .chain(std::iter::once(&self.output))
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.query
            .iter_mut()
            .chain(self.key.iter_mut())
            .chain(self.value.iter_mut())
            .chain(std::iter::once(&mut self.output))
            .collect()
    }
}
