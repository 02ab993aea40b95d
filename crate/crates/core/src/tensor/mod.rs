//! Dense row-major tensors and the math kernels everything else builds on:
//! matrix-multiply variants, transpose, elementwise ops, and 2-D convolution
//! with both backward directions.
//!
//! Every reduction runs in a fixed, documented order (matrix products sum the
//! inner index ascending; convolutions sum channel-major, then kernel row,
//! then kernel column). Parallelism only ever splits work across independent
//! output elements, so results are bit-identical for any worker count.
//!
//! Ops do not propagate NaN/Inf: any operation whose result contains a
//! non-finite value reports a numeric error instead.

mod conv;

pub use conv::{conv2d_backward_data, conv2d_backward_kernel, conv2d_forward, conv_output_dim};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Minimum `m*k*n` before a matrix product is split across threads.
const PAR_WORK_THRESHOLD: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Scalar> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::zero(); len],
        }
    }

    pub fn filled(shape: &[usize], value: S) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension {
                op: "from_vec",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        let t = Tensor {
            shape: shape.to_vec(),
            data,
        };
        t.ensure_finite("from_vec")?;
        Ok(t)
    }

    /// Convenience constructor from `f64` literals at the tensor's precision.
    pub fn from_f64_slice(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::from_vec(shape, values.iter().map(|&v| S::from_f64(v)).collect())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = S::one();
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [m, n] => Ok((m, n)),
            _ => Err(Error::Rank {
                op,
                expected: 2,
                shape: self.shape.clone(),
            }),
        }
    }

    pub fn dims4(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::Rank {
                op,
                expected: 4,
                shape: self.shape.clone(),
            }),
        }
    }

    /// Reinterprets the flat data under a new shape of equal element count.
    pub fn into_shape(mut self, shape: &[usize]) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::Dimension {
                op: "into_shape",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric(format!(
                "{op} produced a non-finite value (shape {:?})",
                self.shape
            )))
        }
    }

    fn validated(self, op: &'static str) -> Result<Self> {
        self.ensure_finite(op)?;
        Ok(self)
    }

    /// `c = a * b`. Per output element the inner index is summed ascending.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = other.dims2("matmul")?;
        if k != k2 {
            return Err(Error::dim("matmul", &self.shape, &other.shape));
        }
        let mut out = vec![S::zero(); m * n];
        let a = &self.data;
        let b = &other.data;
        let per_row = |i: usize, out_row: &mut [S]| {
            let a_row = &a[i * k..(i + 1) * k];
            for t in 0..k {
                let av = a_row[t];
                let b_row = &b[t * n..(t + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += av * bv;
                }
            }
        };
        if m > 1 && m * n * k >= PAR_WORK_THRESHOLD {
            out.par_chunks_mut(n)
                .enumerate()
                .for_each(|(i, row)| per_row(i, row));
        } else {
            for (i, row) in out.chunks_mut(n).enumerate() {
                per_row(i, row);
            }
        }
        Tensor {
            shape: vec![m, n],
            data: out,
        }
        .validated("matmul")
    }

    /// `c = a * b^T` for `a: [m,k]`, `b: [n,k]`; sums the shared index ascending.
    pub fn matmul_nt(&self, other: &Self) -> Result<Self> {
        self.matmul(&other.transpose()?)
    }

    /// `c = a^T * b` for `a: [k,m]`, `b: [k,n]`; sums `k` ascending.
    pub fn matmul_tn(&self, other: &Self) -> Result<Self> {
        let (k, m) = self.dims2("matmul_tn")?;
        let (k2, n) = other.dims2("matmul_tn")?;
        if k != k2 {
            return Err(Error::dim("matmul_tn", &self.shape, &other.shape));
        }
        let mut out = vec![S::zero(); m * n];
        let a = &self.data;
        let b = &other.data;
        let per_row = |i: usize, out_row: &mut [S]| {
            for t in 0..k {
                let av = a[t * m + i];
                let b_row = &b[t * n..(t + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += av * bv;
                }
            }
        };
        if m > 1 && m * n * k >= PAR_WORK_THRESHOLD {
            out.par_chunks_mut(n)
                .enumerate()
                .for_each(|(i, row)| per_row(i, row));
        } else {
            for (i, row) in out.chunks_mut(n).enumerate() {
                per_row(i, row);
            }
        }
        Tensor {
            shape: vec![m, n],
            data: out,
        }
        .validated("matmul_tn")
    }

    pub fn transpose(&self) -> Result<Self> {
        let (m, n) = self.dims2("transpose")?;
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Tensor {
            shape: vec![n, m],
            data: out,
        })
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::dim("hadamard", &self.shape, &other.shape));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .collect();
        Tensor {
            shape: self.shape.clone(),
            data,
        }
        .validated("hadamard")
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::dim("add", &self.shape, &other.shape));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Tensor {
            shape: self.shape.clone(),
            data,
        }
        .validated("add")
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::dim("sub", &self.shape, &other.shape));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a - b)
            .collect();
        Tensor {
            shape: self.shape.clone(),
            data,
        }
        .validated("sub")
    }

    pub fn scale(&self, factor: S) -> Result<Self> {
        let data = self.data.iter().map(|&a| a * factor).collect();
        Tensor {
            shape: self.shape.clone(),
            data,
        }
        .validated("scale")
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Result<Self> {
        let data = self.data.iter().map(|&a| f(a)).collect();
        Tensor {
            shape: self.shape.clone(),
            data,
        }
        .validated("map")
    }

    /// Sum of all elements, accumulated in flat index order.
    pub fn sum(&self) -> S {
        let mut acc = S::zero();
        for &v in &self.data {
            acc += v;
        }
        acc
    }
}
