use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major tensor of 64-bit reals.
///
/// Almost everything in the model is a matrix, so the helpers below assume a
/// rank-2 shape; a scalar is stored as `[1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&s| s == 0) {
            return Err(Error::InvalidShape(format!(
                "extents must be positive, got {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            shape: vec![rows, cols],
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor {
            shape: vec![rows, cols],
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1, 1],
            data: vec![value],
        }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![1, data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Product of all trailing extents.
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product::<usize>().max(1)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(mut self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.data.len() {
            return Err(Error::InvalidShape(format!(
                "cannot reshape {:?} to [{rows}, {cols}]",
                self.shape
            )));
        }
        self.shape = vec![rows, cols];
        Ok(self)
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor {
            shape: vec![c, r],
            data: out,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        debug_assert_eq!(self.data.len(), other.data.len());
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols() != other.rows() {
            return Err(Error::InvalidShape(format!(
                "matmul {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        Ok(gemm(self, false, other, false))
    }
}

/// `op(a) * op(b)` where `op` optionally transposes; backed by `matrixmultiply`.
pub(crate) fn gemm(a: &Tensor, ta: bool, b: &Tensor, tb: bool) -> Tensor {
    let (ar, ac) = (a.rows(), a.cols());
    let (br, bc) = (b.rows(), b.cols());
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    assert_eq!(k, k2, "gemm inner dimension mismatch");
    let mut out = vec![0.0; m * n];
    // Row-major strides; transposition just swaps them.
    let (rsa, csa) = if ta { (1, ac as isize) } else { (ac as isize, 1) };
    let (rsb, csb) = if tb { (1, bc as isize) } else { (bc as isize, 1) };
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Tensor {
        shape: vec![m, n],
        data: out,
    }
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(m: &Tensor) -> Result<Tensor> {
    if m.shape.len() < 2 || m.cols() == 0 {
        return Err(Error::InvalidShape("softmax needs a non-empty row dimension".into()));
    }
    let c = m.cols();
    let mut out = m.data.clone();
    for row in out.chunks_mut(c) {
        softmax_in_place(row);
    }
    Ok(Tensor {
        shape: m.shape.clone(),
        data: out,
    })
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Single-head `softmax(Q Kᵀ / √d) V`.
pub fn scaled_dot_attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    let d = q.cols();
    if k.cols() != d || v.cols() != d {
        return Err(Error::InvalidShape(format!(
            "attention inner dims differ: q {:?}, k {:?}, v {:?}",
            q.shape, k.shape, v.shape
        )));
    }
    if k.rows() != v.rows() {
        return Err(Error::InvalidShape(format!(
            "keys ({}) and values ({}) disagree on row count",
            k.rows(),
            v.rows()
        )));
    }
    let scores = gemm(q, false, k, true).map(|s| s / (d as f64).sqrt());
    let weights = softmax_rows(&scores)?;
    Ok(gemm(&weights, false, v, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![0, 2], vec![]).is_err());
    }

    #[test]
    fn softmax_examples() {
        let s = softmax_rows(&Tensor::row_vector(vec![0.0, 0.0])).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);

        let s = softmax_rows(&Tensor::row_vector(vec![2f64.ln(), 0.0])).unwrap();
        assert!((s.data()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.data()[1] - 1.0 / 3.0).abs() < 1e-15);

        let s = softmax_rows(&Tensor::row_vector(vec![1000.0, 0.0])).unwrap();
        assert_eq!(s.data()[0], 1.0);
        assert_eq!(s.data()[1], 0.0);
    }

    #[test]
    fn attention_examples() {
        // One key: output equals its value row.
        let q = Tensor::from_rows(1, 2, vec![0.3, -1.2]).unwrap();
        let k = Tensor::from_rows(1, 2, vec![5.0, 2.0]).unwrap();
        let v = Tensor::from_rows(1, 2, vec![7.0, -3.0]).unwrap();
        assert_eq!(scaled_dot_attention(&q, &k, &v).unwrap().data(), &[7.0, -3.0]);

        // Identical keys: column mean of V.
        let k = Tensor::from_rows(3, 2, vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let v = Tensor::from_rows(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let o = scaled_dot_attention(&q, &k, &v).unwrap();
        assert!((o.data()[0] - 3.0).abs() < 1e-12);
        assert!((o.data()[1] - 4.0).abs() < 1e-12);

        let q = Tensor::from_rows(1, 1, vec![0.0]).unwrap();
        let k = Tensor::from_rows(2, 1, vec![2f64.ln(), 0.0]).unwrap();
        let v = Tensor::from_rows(2, 1, vec![1.0, 4.0]).unwrap();
        assert_eq!(scaled_dot_attention(&q, &k, &v).unwrap().data(), &[2.5]);
    }

    #[test]
    fn attention_shape_errors() {
        let q = Tensor::zeros(1, 2);
        let k = Tensor::zeros(2, 3);
        let v = Tensor::zeros(2, 2);
        assert!(matches!(
            scaled_dot_attention(&q, &k, &v),
            Err(Error::InvalidShape(_))
        ));
        let k = Tensor::zeros(2, 2);
        let v = Tensor::zeros(3, 2);
        assert!(scaled_dot_attention(&q, &k, &v).is_err());
    }

    #[test]
    fn gemm_transposes() {
        let a = Tensor::from_rows(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::from_rows(2, 3, vec![1., 0., 1., 0., 1., 0.]).unwrap();
        let abt = gemm(&a, false, &b, true);
        assert_eq!(abt.data(), a.matmul(&b.transpose()).unwrap().data());
        let atb = gemm(&a, true, &b, false);
        assert_eq!(atb.data(), a.transpose().matmul(&b).unwrap().data());
    }
}
