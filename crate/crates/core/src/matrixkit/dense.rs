use std::fmt;
use std::ops::{Index as IndexOp, IndexMut};

use crate::error::{Error, Result};

/// Dense square matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct SquareMatrix {
    order: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(order: usize) -> Self {
        SquareMatrix {
            order,
            data: vec![0.0; order * order],
        }
    }

    pub fn identity(order: usize) -> Self {
        let mut m = Self::zeros(order);
        for i in 0..order {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::NotSquare {
                    rows: n,
                    cols: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(n, data)
    }

    pub fn from_row_major(order: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != order * order {
            return Err(Error::DimensionMismatch {
                expected: order * order,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite entry at ({}, {})",
                pos / order,
                pos % order
            )));
        }
        Ok(SquareMatrix { order, data })
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.order..(i + 1) * self.order]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.order;
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.order);
        (0..self.order)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.order, other.order);
        let n = self.order;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = out.row_mut(i);
                for j in 0..n {
                    dst[j] += a * src[j];
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.order, other.order);
        SquareMatrix {
            order: self.order,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.order, other.order);
        SquareMatrix {
            order: self.order,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> SquareMatrix {
        SquareMatrix {
            order: self.order,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn transpose(&self) -> SquareMatrix {
        let n = self.order;
        let mut t = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.order)
            .map(|i| self.row(i).iter().map(|a| a.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn pow(&self, k: u32) -> SquareMatrix {
        let mut acc = SquareMatrix::identity(self.order);
        for _ in 0..k {
            acc = acc.matmul(self);
        }
        acc
    }

    /// Rows `rows` and columns `cols` of `self`, in the given order.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|&i| cols.iter().map(|&j| self[(i, j)]).collect())
            .collect()
    }

    /// Z-matrix with nonnegative diagonal.
    pub fn is_l0(&self) -> bool {
        let n = self.order;
        (0..n).all(|i| {
            (0..n).all(|j| {
                let a = self[(i, j)];
                if i == j {
                    a >= 0.0
                } else {
                    a <= 0.0
                }
            })
        })
    }

    /// Nonnegative entries, every row summing to at most one.
    pub fn is_substochastic(&self) -> bool {
        substochastic_violation(self).is_none()
    }

    pub fn is_tridiagonal(&self) -> bool {
        let n = self.order;
        (0..n).all(|i| (0..n).all(|j| i.abs_diff(j) <= 1 || self[(i, j)] == 0.0))
    }

    pub(crate) fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.order, self.order, &self.data)
    }
}

/// First offending row of a would-be substochastic matrix.
pub(crate) fn substochastic_violation(a: &SquareMatrix) -> Option<(usize, String)> {
    for i in 0..a.order() {
        let row = a.row(i);
        if let Some(j) = row.iter().position(|&x| x < 0.0) {
            return Some((i, format!("has negative entry {} in column {j}", row[j])));
        }
        let s: f64 = row.iter().sum();
        if s > 1.0 {
            return Some((i, format!("sums to {s} > 1")));
        }
    }
    None
}

impl IndexOp<(usize, usize)> for SquareMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.order + j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.order + j]
    }
}

impl fmt::Debug for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SquareMatrix({})[", self.order)?;
        for i in 0..self.order {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}
