use crate::error::{Error, Result};
use crate::matrixkit::SquareMatrix;

/// Tridiagonal matrix. `lower[0]` and `upper[n - 1]` are unused and kept at
/// zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Tridiagonal {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn from_dense(a: &SquareMatrix) -> Option<Self> {
        if !a.is_tridiagonal() {
            return None;
        }
        let n = a.order();
        let mut t = Tridiagonal::zeros(n);
        for i in 0..n {
            t.diag[i] = a[(i, i)];
            if i > 0 {
                t.lower[i] = a[(i, i - 1)];
            }
            if i + 1 < n {
                t.upper[i] = a[(i, i + 1)];
            }
        }
        Some(t)
    }

    pub fn to_dense(&self) -> SquareMatrix {
        let n = self.len();
        let mut a = SquareMatrix::zeros(n);
        for i in 0..n {
            a[(i, i)] = self.diag[i];
            if i > 0 {
                a[(i, i - 1)] = self.lower[i];
            }
            if i + 1 < n {
                a[(i, i + 1)] = self.upper[i];
            }
        }
        a
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        assert_eq!(x.len(), n);
        (0..n).map(|i| self.row_dot(i, x)).collect()
    }

    /// Row `i` applied to `x`.
    #[inline]
    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let mut s = self.diag[i] * x[i];
        if i > 0 {
            s += self.lower[i] * x[i - 1];
        }
        if i + 1 < x.len() {
            s += self.upper[i] * x[i + 1];
        }
        s
    }

    /// Whether every row is strictly diagonally dominant.
    pub fn is_sdd(&self) -> bool {
        (0..self.len()).all(|i| self.diag[i].abs() > self.lower[i].abs() + self.upper[i].abs())
    }

    /// Thomas algorithm. Stable without pivoting for diagonally dominant
    /// systems; a vanishing pivot is reported as singular.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut piv = self.diag[0];
        if piv == 0.0 {
            return Err(Error::Singular);
        }
        c[0] = self.upper[0] / piv;
        d[0] = rhs[0] / piv;
        for i in 1..n {
            piv = self.diag[i] - self.lower[i] * c[i - 1];
            if piv == 0.0 || !piv.is_finite() {
                return Err(Error::Singular);
            }
            c[i] = self.upper[i] / piv;
            d[i] = (rhs[i] - self.lower[i] * d[i - 1]) / piv;
        }
        let mut x = d;
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let t = Tridiagonal {
            lower: vec![0.0, -1.0],
            diag: vec![2.0, 2.0],
            upper: vec![-1.0, 0.0],
        };
        let x = t.solve(&[1.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dense_roundtrip() {
        let t = Tridiagonal {
            lower: vec![0.0, 1.0, 2.0],
            diag: vec![5.0, 6.0, 7.0],
            upper: vec![3.0, 4.0, 0.0],
        };
        assert_eq!(Tridiagonal::from_dense(&t.to_dense()).unwrap(), t);
        assert_eq!(t.mul_vec(&[1.0, 1.0, 1.0]), vec![8.0, 11.0, 9.0]);
    }

    #[test]
    fn zero_pivot_is_singular() {
        let t = Tridiagonal {
            lower: vec![0.0, 1.0],
            diag: vec![1.0, 1.0],
            upper: vec![1.0, 0.0],
        };
        assert_eq!(t.solve(&[1.0, 2.0]), Err(Error::Singular));
    }
}
