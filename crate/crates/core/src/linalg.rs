//! Dense symmetric positive definite factorisation for the small area-level
//! precision matrices.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("matrix is not positive definite (pivot {pivot} = {value})")]
pub struct NotPositiveDefinite {
    pub pivot: usize,
    pub value: f64,
}

/// Lower-triangular Cholesky factor `A = C C'`, row-major storage.
#[derive(Debug, Clone)]
pub struct DenseCholesky<T> {
    n: usize,
    lower: Vec<T>,
}

impl<T: Scalar> DenseCholesky<T> {
    /// Factorises the row-major `n x n` matrix `a`; only the lower triangle is read.
    pub fn new(a: &[T], n: usize) -> Result<Self, NotPositiveDefinite> {
        assert_eq!(a.len(), n * n, "matrix storage does not match dimension");
        let mut lower = vec![T::zero(); n * n];
        for j in 0..n {
            let mut diag = a[j * n + j];
            for p in 0..j {
                diag -= lower[j * n + p] * lower[j * n + p];
            }
            if !(diag > T::zero()) || !diag.is_finite() {
                return Err(NotPositiveDefinite {
                    pivot: j,
                    value: diag.as_f64(),
                });
            }
            let d = diag.sqrt();
            lower[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for p in 0..j {
                    s -= lower[i * n + p] * lower[j * n + p];
                }
                lower[i * n + j] = s / d;
            }
        }
        Ok(Self { n, lower })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor(&self) -> &[T] {
        &self.lower
    }

    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        (0..self.n)
            .map(|i| self.lower[i * self.n + i].ln())
            .sum::<T>()
            * two
    }

    /// Solves `C x = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for p in 0..i {
                s -= self.lower[i * n + p] * x[p];
            }
            x[i] = s / self.lower[i * n + i];
        }
        x
    }

    /// Solves `C' x = b`.
    pub fn solve_upper(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for p in (i + 1)..n {
                s -= self.lower[p * n + i] * x[p];
            }
            x[i] = s / self.lower[i * n + i];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }
}
