//! Dense symmetric positive-definite helpers on row-major `n x n` matrices.

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    /// Factors `a`. A pivot at or below `n * eps * max(diag)` is treated as
    /// a failure and reported with its index.
    pub fn factor(a: &[f64], n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n, "matrix must be n x n");
        let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0f64, f64::max);
        let tol = n as f64 * f64::EPSILON * max_diag;
        let mut l = vec![0.0f64; n * n];
        for j in 0..n {
            let sum: f64 = l[j * n..j * n + j].iter().map(|v| v * v).sum();
            let pivot = a[j * n + j] - sum;
            if !pivot.is_finite() || pivot <= tol {
                return Err(Error::SingularCovariance {
                    pivot: j,
                    value: pivot,
                });
            }
            let d = pivot.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let dot: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
                l[i * n + j] = (a[i * n + j] - dot) / d;
            }
        }
        Ok(Self { n, lower: l })
    }

    #[cfg(test)]
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n)
            .map(|i| self.lower[i * self.n + i].ln())
            .sum::<f64>()
    }

    /// Solves `A v = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let l = &self.lower;
        for i in 0..n {
            let dot: f64 = l[i * n..i * n + i]
                .iter()
                .zip(&b[..i])
                .map(|(a, b)| a * b)
                .sum();
            b[i] = (b[i] - dot) / l[i * n + i];
        }
        for i in (0..n).rev() {
            let dot: f64 = (i + 1..n).map(|k| l[k * n + i] * b[k]).sum();
            b[i] = (b[i] - dot) / l[i * n + i];
        }
    }

    /// Full inverse, symmetrized.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0f64; n * n];
        let mut col = vec![0.0f64; n];
        for c in 0..n {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[c] = 1.0;
            self.solve_in_place(&mut col);
            for r in 0..n {
                inv[r * n + c] = col[r];
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let m = 0.5 * (inv[i * n + j] + inv[j * n + i]);
                inv[i * n + j] = m;
                inv[j * n + i] = m;
            }
        }
        inv
    }
}

/// Square sub-block `[start, start + len)` of a row-major `n x n` matrix.
pub fn sub_block(a: &[f64], n: usize, start: usize, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len * len);
    for r in start..start + len {
        out.extend_from_slice(&a[r * n + start..r * n + start + len]);
    }
    out
}
