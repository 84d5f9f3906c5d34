use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use crate::error::{Error, Result};
use crate::matrixkit::dense::substochastic_violation;
use crate::matrixkit::SquareMatrix;

/// Entries at or below this magnitude do not create graph edges.
pub const EDGE_THRESHOLD: f64 = 1e-14;

/// A nonnegative integer index, or infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Index {
    Finite(usize),
    Infinite,
}

impl Index {
    pub fn is_finite(self) -> bool {
        matches!(self, Index::Finite(_))
    }

    pub fn finite(self) -> Option<usize> {
        match self {
            Index::Finite(n) => Some(n),
            Index::Infinite => None,
        }
    }
}

impl fmt::Display for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Index::Finite(n) => write!(f, "{n}"),
            Index::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    /// Every row weakly diagonally dominant.
    pub wdd: bool,
    /// Strictly dominant rows.
    pub sdd_rows: BTreeSet<usize>,
    /// Index of connectivity.
    pub con: Index,
    pub wcdd: bool,
}

impl DominanceReport {
    pub fn is_sdd(&self, order: usize) -> bool {
        self.sdd_rows.len() == order
    }
}

fn off_diagonal_abs_sum(a: &SquareMatrix, i: usize) -> f64 {
    a.row(i)
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, x)| x.abs())
        .sum()
}

/// Whether `i -> j` is an edge of the directed graph of `a`.
#[inline]
pub fn has_edge(a: &SquareMatrix, i: usize, j: usize) -> bool {
    i != j && a[(i, j)].abs() > EDGE_THRESHOLD
}

/// Shortest walk length from every node to the target set, following edges
/// of `a`. `None` when no walk exists.
fn distances_to(a: &SquareMatrix, targets: &BTreeSet<usize>) -> Vec<Option<usize>> {
    let n = a.order();
    let mut dist = vec![None; n];
    let mut queue = VecDeque::new();
    for &t in targets {
        dist[t] = Some(0);
        queue.push_back(t);
    }
    // Reverse BFS: predecessors of j are rows i with an edge i -> j.
    while let Some(j) = queue.pop_front() {
        let d = dist[j].unwrap();
        for i in 0..n {
            if dist[i].is_none() && has_edge(a, i, j) {
                dist[i] = Some(d + 1);
                queue.push_back(i);
            }
        }
    }
    dist
}

pub fn classify_dominance(a: &SquareMatrix) -> DominanceReport {
    let n = a.order();
    let mut wdd = true;
    let mut sdd_rows = BTreeSet::new();
    for i in 0..n {
        let d = a[(i, i)].abs();
        let off = off_diagonal_abs_sum(a, i);
        if d > off {
            sdd_rows.insert(i);
        } else if d < off {
            wdd = false;
        }
    }
    let dist = distances_to(a, &sdd_rows);
    let mut con = Index::Finite(0);
    for (i, d) in dist.iter().enumerate() {
        if sdd_rows.contains(&i) {
            continue;
        }
        con = match (con, d) {
            (Index::Infinite, _) | (_, None) => Index::Infinite,
            (Index::Finite(c), Some(d)) => Index::Finite(c.max(*d)),
        };
    }
    DominanceReport {
        wdd,
        wcdd: wdd && con.is_finite(),
        sdd_rows,
        con,
    }
}

/// Index of contraction of a substochastic matrix, computed as the index of
/// connectivity of `Id - A`.
pub fn index_of_contraction(a: &SquareMatrix) -> Result<Index> {
    if let Some((row, reason)) = substochastic_violation(a) {
        return Err(Error::NotSubstochastic { row, reason });
    }
    Ok(classify_dominance(&SquareMatrix::identity(a.order()).sub(a)).con)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> SquareMatrix {
        SquareMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn identity_is_sdd() {
        let r = classify_dominance(&SquareMatrix::identity(4));
        assert!(r.wdd && r.wcdd && r.is_sdd(4));
        assert_eq!(r.con, Index::Finite(0));
    }

    #[test]
    fn one_step_chain() {
        let r = classify_dominance(&m(&[&[1.0, -1.0], &[0.0, 1.0]]));
        assert_eq!(r.sdd_rows, BTreeSet::from([1]));
        assert_eq!(r.con, Index::Finite(1));
        assert!(r.wcdd);
    }

    #[test]
    fn no_chain_to_sdd_row() {
        let r = classify_dominance(&m(&[&[1.0, -1.0], &[-1.0, 1.0]]));
        assert!(r.wdd && r.sdd_rows.is_empty());
        assert_eq!(r.con, Index::Infinite);
        assert!(!r.wcdd);
    }

    #[test]
    fn not_wdd() {
        let r = classify_dominance(&m(&[&[1.0, -2.0], &[0.0, 1.0]]));
        assert!(!r.wdd && !r.wcdd);
        assert_eq!(r.con, Index::Finite(1));
    }

    #[test]
    fn contraction_examples() {
        assert_eq!(
            index_of_contraction(&SquareMatrix::zeros(3)).unwrap(),
            Index::Finite(0)
        );
        assert_eq!(
            index_of_contraction(&m(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap(),
            Index::Infinite
        );
        let a = m(&[&[0.0, 1.0], &[0.0, 0.5]]);
        assert_eq!(index_of_contraction(&a).unwrap(), Index::Finite(1));
        assert_eq!(a.norm_inf(), 1.0);
        assert!(a.pow(2).norm_inf() < 1.0);
    }

    #[test]
    fn rejects_non_substochastic() {
        let err = index_of_contraction(&m(&[&[0.5, 0.5], &[0.7, 0.6]])).unwrap_err();
        assert!(matches!(err, Error::NotSubstochastic { row: 1, .. }));
        let err = index_of_contraction(&m(&[&[-0.1, 0.0], &[0.0, 0.0]])).unwrap_err();
        assert!(matches!(err, Error::NotSubstochastic { row: 0, .. }));
    }

    #[test]
    fn tiny_entries_are_not_edges() {
        let r = classify_dominance(&m(&[&[1.0, -1e-15], &[0.0, 2.0]]));
        assert!(r.sdd_rows.contains(&0));
        let r = classify_dominance(&m(&[&[1.0, -1.0, 0.0], &[0.0, 1.0, -1e-16], &[0.0, 0.0, 1.0]]));
        assert_eq!(r.con, Index::Finite(1));
    }
}
