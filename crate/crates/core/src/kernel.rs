//! Square matrices and row-stochastic transition kernels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;

/// Row-sum tolerance for stochastic matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    size: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            data: vec![0.0; size * size],
        }
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size);
        for i in 0..size {
            m.data[i * size + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        if size == 0 {
            return Err(Error::EmptyInput("matrix rows"));
        }
        let mut data = Vec::with_capacity(size * size);
        for row in rows {
            if row.len() != size {
                return Err(Error::InvalidKernel(format!(
                    "matrix is not square: {} rows but a row of length {}",
                    size,
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.size + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.size..(i + 1) * self.size]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.size).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Row vector times matrix: `(v M)_j = Σ_i v_i M(i, j)`.
    pub fn left_apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.size;
        let mut out = vec![0.0; n];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(self.row(i)) {
                *o += vi * m;
            }
        }
        out
    }

    /// Matrix times column vector: `(M f)_i = Σ_j M(i, j) f_j`.
    pub fn right_apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.size)
            .map(|i| self.row(i).iter().zip(f).map(|(m, x)| m * x).sum())
            .collect()
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        let n = self.size;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            size: self.size,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        Matrix {
            size: self.size,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.add(&other.scale(-1.0))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.size).map(|i| self.row(i).iter().sum()).collect()
    }
}

/// Row-stochastic transition matrix `K(x, y) = P(X_{n+1} = y | X_n = x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "Vec<Vec<f64>>")]
pub struct FiniteKernel {
    matrix: Matrix,
}

impl From<FiniteKernel> for Vec<Vec<f64>> {
    fn from(k: FiniteKernel) -> Self {
        k.matrix.rows()
    }
}

impl FiniteKernel {
    pub fn new(matrix: Matrix) -> Result<Self> {
        for i in 0..matrix.size() {
            let row = matrix.row(i);
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::InvalidKernel(format!(
                    "row {i} contains entry {v}, expected finite nonnegative"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotStochastic { row: i, sum });
            }
        }
        Ok(Self { matrix })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn identity(size: usize) -> Self {
        Self {
            matrix: Matrix::identity(size),
        }
    }

    pub fn size(&self) -> usize {
        self.matrix.size()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.matrix.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// One-step prediction `μK` of a row vector of weights.
    pub fn propagate(&self, mu: &[f64]) -> Vec<f64> {
        self.matrix.left_apply(mu)
    }

    /// `μK` as a measure; mass is preserved.
    pub fn propagate_measure(&self, mu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        if mu.len() != self.size() {
            return Err(Error::Dimension {
                left: mu.len(),
                right: self.size(),
            });
        }
        DiscreteMeasure::new(self.propagate(mu.weights()))
    }

    /// `μK^steps`.
    pub fn propagate_n(&self, mu: &[f64], steps: usize) -> Vec<f64> {
        let mut v = mu.to_vec();
        for _ in 0..steps {
            v = self.propagate(&v);
        }
        v
    }

    pub fn compose(&self, other: &FiniteKernel) -> FiniteKernel {
        FiniteKernel {
            matrix: self.matrix.mul(&other.matrix),
        }
    }
}
