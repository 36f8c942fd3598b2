//! Symmetric tridiagonal matrices and their Cholesky factorization.

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix stored by its diagonal and first off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    /// `off[i] = A[i+1][i] = A[i][i+1]`, length `n - 1`.
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::InvalidInput(format!(
                "tridiagonal shape: diag {} / off {}",
                diag.len(),
                off.len()
            )));
        }
        Ok(Self { diag, off })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `a * self + b * other`, entrywise.
    pub fn combine(&self, a: f64, other: &SymTridiag, b: f64) -> SymTridiag {
        assert_eq!(self.len(), other.len());
        SymTridiag {
            diag: self.diag.iter().zip(&other.diag).map(|(x, y)| a * x + b * y).collect(),
            off: self.off.iter().zip(&other.off).map(|(x, y)| a * x + b * y).collect(),
        }
    }

    /// Writes `self * x` into `out`.
    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(out.len(), n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * x[i + 1];
            }
            out[i] = acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.mul_into(x, &mut out);
        out
    }

    /// Quadratic form `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let n = self.len();
        let mut acc = 0.0;
        for i in 0..n {
            acc += self.diag[i] * x[i] * x[i];
            if i + 1 < n {
                acc += 2.0 * self.off[i] * x[i] * x[i + 1];
            }
        }
        acc
    }

    /// Cholesky factorization `A = L Lᵀ` with bidiagonal `L`.
    pub fn cholesky(&self) -> Result<TridiagCholesky> {
        let n = self.len();
        let mut l_diag = vec![0.0; n];
        let mut l_sub = vec![0.0; n - 1];
        let mut pivot = self.diag[0];
        for i in 0..n {
            if pivot <= 0.0 || !pivot.is_finite() {
                return Err(Error::Numerical(format!(
                    "matrix is not positive definite (pivot {pivot} at row {i})"
                )));
            }
            l_diag[i] = pivot.sqrt();
            if i + 1 < n {
                l_sub[i] = self.off[i] / l_diag[i];
                pivot = self.diag[i + 1] - l_sub[i] * l_sub[i];
            }
        }
        Ok(TridiagCholesky { l_diag, l_sub })
    }
}

/// Bidiagonal Cholesky factor of a symmetric positive definite tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct TridiagCholesky {
    l_diag: Vec<f64>,
    l_sub: Vec<f64>,
}

impl TridiagCholesky {
    pub fn len(&self) -> usize {
        self.l_diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.l_diag.is_empty()
    }

    /// Overwrites `b` with the solution of `A x = b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(b.len(), n);
        b[0] /= self.l_diag[0];
        for i in 1..n {
            b[i] = (b[i] - self.l_sub[i - 1] * b[i - 1]) / self.l_diag[i];
        }
        b[n - 1] /= self.l_diag[n - 1];
        for i in (0..n - 1).rev() {
            b[i] = (b[i] - self.l_sub[i] * b[i + 1]) / self.l_diag[i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(a: &SymTridiag) -> Vec<Vec<f64>> {
        let n = a.len();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = a.diag[i];
            if i + 1 < n {
                m[i][i + 1] = a.off[i];
                m[i + 1][i] = a.off[i];
            }
        }
        m
    }

    #[test]
    fn solve_recovers_known_solution() {
        let a = SymTridiag::new(vec![4.0, 5.0, 6.0, 7.0], vec![1.0, -2.0, 0.5]).unwrap();
        let x = [1.0, -1.0, 2.0, 0.25];
        let b = a.mul(&x);
        let sol = a.cholesky().unwrap().solve(&b);
        for (s, e) in sol.iter().zip(x) {
            assert!((s - e).abs() < 1e-14);
        }
        // cross-check the product against a dense multiply
        let d = dense(&a);
        for i in 0..4 {
            let row: f64 = (0..4).map(|j| d[i][j] * x[j]).sum();
            assert!((row - b[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn single_entry_system() {
        let a = SymTridiag::new(vec![4.0], vec![]).unwrap();
        assert_eq!(a.cholesky().unwrap().solve(&[2.0]), vec![0.5]);
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let a = SymTridiag::new(vec![1.0, 1.0], vec![2.0]).unwrap();
        assert!(matches!(a.cholesky(), Err(Error::Numerical(_))));
    }

    #[test]
    fn bad_shape_rejected() {
        assert!(SymTridiag::new(vec![1.0, 2.0], vec![]).is_err());
        assert!(SymTridiag::new(vec![], vec![]).is_err());
    }

    #[test]
    fn quad_form_matches_dot() {
        let a = SymTridiag::new(vec![2.0, 3.0, 2.0], vec![-1.0, 0.5]).unwrap();
        let x = [0.3, -1.2, 2.0];
        let ax = a.mul(&x);
        let dot: f64 = ax.iter().zip(x).map(|(p, q)| p * q).sum();
        assert!((a.quad_form(&x) - dot).abs() < 1e-14);
    }
}
