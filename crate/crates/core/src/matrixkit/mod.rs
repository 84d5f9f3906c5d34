//! Dense and tridiagonal matrices, diagonal-dominance classification and
//! linear solvers.

mod dense;
mod dominance;
mod tridiag;

pub use dense::SquareMatrix;
pub use dominance::{
    classify_dominance, has_edge, index_of_contraction, DominanceReport, Index, EDGE_THRESHOLD,
};
pub use tridiag::Tridiagonal;

use crate::error::{Error, Result};

/// Default order cap for [`is_monotone_small`].
pub const MONOTONE_CAP: usize = 200;

/// Whether `a` is nonsingular with an elementwise nonnegative inverse.
/// Inverse entries down to `-1e-12` count as nonnegative.
pub fn is_monotone_small(a: &SquareMatrix, cap: usize) -> Result<bool> {
    if a.order() > cap {
        return Err(Error::TooLarge {
            order: a.order(),
            cap,
        });
    }
    let inv = a.to_nalgebra().try_inverse().ok_or(Error::Singular)?;
    if inv.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(inv.iter().all(|&x| x >= -1e-12))
}

/// Solve `a x = b` by partial-pivot LU.
pub fn solve_dense(a: &SquareMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.order() {
        return Err(Error::DimensionMismatch {
            expected: a.order(),
            got: b.len(),
        });
    }
    let lu = a.to_nalgebra().lu();
    let rhs = nalgebra::DVector::from_column_slice(b);
    let x = lu.solve(&rhs).ok_or(Error::Singular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(x.as_slice().to_vec())
}

/// Solve `a x = b`, taking the Thomas path for strictly diagonally dominant
/// tridiagonal matrices and LU otherwise. The residual is checked against
/// `1e-10 * (1 + |b|)`.
pub fn solve_linear(a: &SquareMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let x = match Tridiagonal::from_dense(a) {
        Some(t) if t.is_sdd() => t.solve(b)?,
        _ => solve_dense(a, b)?,
    };
    let r = a
        .mul_vec(&x)
        .iter()
        .zip(b)
        .map(|(ax, bi)| (ax - bi).abs())
        .fold(0.0, f64::max);
    let bnorm = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if r > 1e-10 * (1.0 + bnorm) {
        return Err(Error::IllConditioned { residual: r });
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_solve() {
        let b = vec![1.0, -2.0, 3.5];
        assert_eq!(solve_linear(&SquareMatrix::identity(3), &b).unwrap(), b);
    }

    #[test]
    fn tridiagonal_solve() {
        let a = SquareMatrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 2.0]]).unwrap();
        let x = solve_linear(&a, &[1.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn thomas_agrees_with_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let mut t = Tridiagonal::zeros(n);
        for i in 0..n {
            if i > 0 {
                t.lower[i] = rng.random_range(-1.0..1.0);
            }
            if i + 1 < n {
                t.upper[i] = rng.random_range(-1.0..1.0);
            }
            let off = t.lower[i].abs() + t.upper[i].abs();
            t.diag[i] = (off + rng.random_range(0.1..1.0)) * if rng.random() { 1.0 } else { -1.0 };
        }
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let a = t.to_dense();
        let x1 = solve_linear(&a, &b).unwrap();
        let x2 = solve_dense(&a, &b).unwrap();
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_dense() {
        let a = SquareMatrix::from_rows(&[vec![1.0, 2.0, 0.0], vec![2.0, 4.0, 0.0], vec![0.0, 0.0, 1.0]])
            .unwrap();
        assert!(solve_linear(&a, &[1.0, 1.0, 1.0]).is_err());
        assert_eq!(is_monotone_small(&a, MONOTONE_CAP), Err(Error::Singular));
    }

    #[test]
    fn monotone_examples() {
        assert!(is_monotone_small(&SquareMatrix::identity(5), MONOTONE_CAP).unwrap());
        let a = SquareMatrix::from_rows(&[vec![1.0, -1.0], vec![0.0, 1.0]]).unwrap();
        assert!(is_monotone_small(&a, MONOTONE_CAP).unwrap());
        let b = SquareMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert!(!is_monotone_small(&b, MONOTONE_CAP).unwrap());
        assert!(matches!(
            is_monotone_small(&SquareMatrix::identity(3), 2),
            Err(Error::TooLarge { order: 3, cap: 2 })
        ));
    }
}
