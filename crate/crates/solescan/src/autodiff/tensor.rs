//! Row-major dense 2D tensor.

use std::ops::{Index, IndexMut};

use crate::autodiff::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor data length mismatch");
        Tensor { rows, cols, data }
    }

    pub fn from_f64_slice(rows: usize, cols: usize, data: &[f64]) -> Self {
        Tensor::from_vec(rows, cols, data.iter().map(|&v| T::from_f64(v)).collect())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
        assert_eq!(self.shape(), other.shape());
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn matmul(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        assert_eq!(a.cols, b.rows);
        let mut out = Tensor::zeros(a.rows, b.cols);
        T::gemm_acc(a.rows, a.cols, b.cols, &a.data, &b.data, &mut out.data);
        out
    }

    /// A^T * B, without materializing the transpose.
    pub fn matmul_tn(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        assert_eq!(a.rows, b.rows);
        let at = a.transpose();
        Tensor::matmul(&at, b)
    }

    /// A * B^T.
    pub fn matmul_nt(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        assert_eq!(a.cols, b.cols);
        let bt = b.transpose();
        Tensor::matmul(a, &bt)
    }

    pub fn transpose(&self) -> Tensor<T> {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)];
            }
        }
        out
    }

    pub fn add_in_place(&mut self, other: &Tensor<T>) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64()).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|v| {
                let x = v.to_f64();
                x * x
            })
            .sum::<f64>()
            .sqrt()
    }
}

impl<T: Scalar> Index<(usize, usize)> for Tensor<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T: Scalar> IndexMut<(usize, usize)> for Tensor<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}
