//! Dense row-major tensors of `f64`.
//!
//! Only what the layers need: rank-1/2/3 storage, 2-D products (plain and
//! with either operand transposed), elementwise maps and a row softmax.
//! Every product accumulates each output element in increasing order of the
//! inner index, so results do not depend on loop blocking.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Contract(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape("Tensor::new", &shape, &[data.len()]));
        }
        Ok(Tensor { shape, data })
    }

    /// Panics on a zero or empty shape; shapes here come from layer
    /// configuration, not user data.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        assert!(
            !shape.is_empty() && shape.iter().all(|&d| d > 0),
            "invalid tensor shape {shape:?}"
        );
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::shape("Tensor::from_rows", &[cols], &[bad.len()]));
        }
        Self::matrix(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading dimension.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Product of all trailing dimensions.
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// View as a 2-D matrix: leading dimension by the product of the rest.
    pub fn flatten_rows(self) -> Self {
        let shape = vec![self.rows(), self.cols()];
        Tensor { shape, data: self.data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    fn expect_matrix(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            other => Err(Error::Contract(format!(
                "{op} expects a 2-D tensor, got shape {other:?}"
            ))),
        }
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (r, k) = self.expect_matrix("matmul")?;
        let (k2, c) = other.expect_matrix("matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", &self.shape, &other.shape));
        }
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * c..(i + 1) * c];
            for (p, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[p * c..(p + 1) * c];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::matrix(r, c, out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor> {
        let (r, k) = self.expect_matrix("matmul_nt")?;
        let (c, k2) = other.expect_matrix("matmul_nt")?;
        if k != k2 {
            return Err(Error::shape("matmul_nt", &self.shape, &other.shape));
        }
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..c {
                let b_row = &other.data[j * k..(j + 1) * k];
                let mut acc = 0.0;
                for (a, b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                out.push(acc);
            }
        }
        Tensor::matrix(r, c, out)
    }

    /// `selfᵀ · other`.
    pub fn matmul_tn(&self, other: &Tensor) -> Result<Tensor> {
        let (k, r) = self.expect_matrix("matmul_tn")?;
        let (k2, c) = other.expect_matrix("matmul_tn")?;
        if k != k2 {
            return Err(Error::shape("matmul_tn", &self.shape, &other.shape));
        }
        let mut out = vec![0.0; r * c];
        for p in 0..k {
            let a_row = &self.data[p * r..(p + 1) * r];
            let b_row = &other.data[p * c..(p + 1) * c];
            for (i, &a) in a_row.iter().enumerate() {
                let o_row = &mut out[i * c..(i + 1) * c];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::matrix(r, c, out)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.expect_matrix("transpose")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::matrix(c, r, out)
    }

    fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn maximum(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "maximum", f64::max)
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|x| x * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn exp(&self) -> Tensor {
        self.map(f64::exp)
    }

    pub fn tanh(&self) -> Tensor {
        self.map(f64::tanh)
    }

    pub fn relu(&self) -> Tensor {
        self.map(|x| x.max(0.0))
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape("add_assign", &self.shape, &other.shape));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Adds `bias` (length = columns) to every row of a 2-D tensor.
    pub fn add_row_vector(&self, bias: &Tensor) -> Result<Tensor> {
        let (_, c) = self.expect_matrix("add_row_vector")?;
        if bias.len() != c {
            return Err(Error::shape("add_row_vector", &self.shape, &bias.shape));
        }
        let mut out = self.clone();
        for row in out.data.chunks_mut(c) {
            for (x, b) in row.iter_mut().zip(&bias.data) {
                *x += b;
            }
        }
        Ok(out)
    }

    /// Column sums of a 2-D tensor, as a rank-1 tensor.
    pub fn sum_rows(&self) -> Result<Tensor> {
        let (_, c) = self.expect_matrix("sum_rows")?;
        let mut out = vec![0.0; c];
        for row in self.data.chunks(c) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        Tensor::vector(out)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&self) -> Result<Tensor> {
        let (_, c) = self.expect_matrix("softmax_rows")?;
        let mut out = self.clone();
        for row in out.data.chunks_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        Ok(out)
    }

    /// Copies columns `[start, start + width)` of a 2-D tensor.
    pub fn column_block(&self, start: usize, width: usize) -> Result<Tensor> {
        let (r, c) = self.expect_matrix("column_block")?;
        if start + width > c || width == 0 {
            return Err(Error::shape("column_block", &self.shape, &[start, width]));
        }
        let mut out = Vec::with_capacity(r * width);
        for row in self.data.chunks(c) {
            out.extend_from_slice(&row[start..start + width]);
        }
        Tensor::matrix(r, width, out)
    }

    /// Writes `block` into columns starting at `start`.
    pub fn set_column_block(&mut self, start: usize, block: &Tensor) -> Result<()> {
        let (r, c) = self.expect_matrix("set_column_block")?;
        let (br, bw) = block.expect_matrix("set_column_block")?;
        if br != r || start + bw > c {
            return Err(Error::shape("set_column_block", &self.shape, &block.shape));
        }
        for (dst, src) in self.data.chunks_mut(c).zip(block.data.chunks(bw)) {
            dst[start..start + bw].copy_from_slice(src);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    fn triple_loop(a: &Tensor, b: &Tensor) -> Vec<f64> {
        let (r, k, c) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += a.data()[i * k + p] * b.data()[p * c + j];
                }
                out[i * c + j] = acc;
            }
        }
        out
    }

    #[test]
    fn matmul_identity_and_row_vector() {
        let id = Tensor::identity(2);
        let col = Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(id.matmul(&col).unwrap().data(), &[3.0, 4.0]);

        let row = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let out = row.matmul(&col).unwrap();
        assert_eq!(out.shape(), &[1, 1]);
        assert_eq!(out.data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = RngState::new(7);
        let a = rng.normal(&[5, 7]);
        let b = rng.normal(&[7, 3]);
        let fast = a.matmul(&b).unwrap();
        for (x, y) in fast.data().iter().zip(triple_loop(&a, &b)) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let mut rng = RngState::new(3);
        let a = rng.normal(&[4, 6]);
        let b = rng.normal(&[5, 6]);
        let c = rng.normal(&[4, 3]);
        let nt = a.matmul_nt(&b).unwrap();
        let tn = a.matmul_tn(&c).unwrap();
        assert_eq!(nt, a.matmul(&b.transpose().unwrap()).unwrap());
        assert_eq!(tn, a.transpose().unwrap().matmul(&c).unwrap());
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let msg = a.matmul(&b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3] vs [2, 3]"), "{msg}");
    }

    #[test]
    fn elementwise_basics() {
        let x = Tensor::vector(vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(x.relu().data(), &[0.0, 0.0, 2.0]);
        assert_eq!(Tensor::vector(vec![0.0]).unwrap().tanh().data(), &[0.0]);
        let e = Tensor::vector(vec![0.0, 1.0]).unwrap().exp();
        assert_eq!(e.data()[0], 1.0);
        assert!((e.data()[1] - std::f64::consts::E).abs() < 1e-9);

        let y = Tensor::vector(vec![1.0, -1.0, 1.0]).unwrap();
        assert_eq!(x.maximum(&y).unwrap().data(), &[1.0, 0.0, 2.0]);
        assert_eq!(x.add(&y).unwrap().data(), &[0.0, -1.0, 3.0]);
        assert_eq!(x.sub(&y).unwrap().data(), &[-2.0, 1.0, 1.0]);
        assert_eq!(x.mul(&y).unwrap().data(), &[-1.0, -0.0, 2.0]);
        assert_eq!(x.scale(2.0).data(), &[-2.0, 0.0, 4.0]);
        assert!(x.add(&Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn softmax_cases() {
        let uniform = Tensor::from_rows(&[vec![0.0, 0.0, 0.0]])
            .unwrap()
            .softmax_rows()
            .unwrap();
        for &p in uniform.data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }

        let big = Tensor::from_rows(&[vec![1000.0, 0.0]]).unwrap().softmax_rows().unwrap();
        assert!(big.is_finite());
        assert!((big.data()[0] - 1.0).abs() < 1e-12);
        assert!(big.data()[1] < 1e-300);

        let mut rng = RngState::new(11);
        let s = rng.normal(&[4, 6]).scale(3.0).softmax_rows().unwrap();
        for r in 0..4 {
            assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![0, 2], vec![]).is_err());
        assert!(Tensor::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn column_blocks_round_trip() {
        let mut rng = RngState::new(5);
        let a = rng.normal(&[3, 8]);
        let mut b = Tensor::zeros(&[3, 8]);
        for h in 0..4 {
            b.set_column_block(h * 2, &a.column_block(h * 2, 2).unwrap()).unwrap();
        }
        assert_eq!(a, b);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn matmul_oracle(r in 1usize..=8, k in 1usize..=8, c in 1usize..=8, seed in any::<u64>()) {
                let mut rng = RngState::new(seed);
                let a = rng.normal(&[r, k]);
                let b = rng.normal(&[k, c]);
                let (a0, b0) = (a.clone(), b.clone());
                let fast = a.matmul(&b).unwrap();
                for (x, y) in fast.data().iter().zip(triple_loop(&a, &b)) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
                prop_assert_eq!(a, a0);
                prop_assert_eq!(b, b0);
            }

            #[test]
            fn softmax_rows_sum_to_one_and_shift_invariant(
                rows in 1usize..6, cols in 1usize..8, shift in -50.0f64..50.0, seed in any::<u64>()
            ) {
                let mut rng = RngState::new(seed);
                let x = rng.normal(&[rows, cols]).scale(5.0);
                let s = x.softmax_rows().unwrap();
                let shifted = x.map(|v| v + shift).softmax_rows().unwrap();
                for r in 0..rows {
                    prop_assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    prop_assert!(s.row(r).iter().all(|&p| p >= 0.0));
                }
                for (a, b) in s.data().iter().zip(shifted.data()) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}
