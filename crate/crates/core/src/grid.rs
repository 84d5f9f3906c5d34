//! Symmetric equispaced grids and per-node admissible impulse sets.
//!
//! Nodes are addressed by a storage index `k in 0..2N+1`; the signed index
//! `i = k - N` gives the coordinate `x_i = i * h`. Coordinates are always
//! computed from the index, never accumulated, so `x_{-i} == -x_i` holds
//! bit for bit.

use std::ops::RangeInclusive;

use crate::error::{Error, Result};

/// Symmetric grid `x_{-N} < ... < x_0 = 0 < ... < x_N` with step `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n_half: usize,
    step: f64,
}

impl Grid {
    /// Grid on `[-x_max, x_max]` with `n_half` steps on each side.
    pub fn symmetric(x_max: f64, n_half: usize) -> Result<Self> {
        if !(x_max.is_finite() && x_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "x_max must be positive, got {x_max}"
            )));
        }
        if n_half == 0 {
            return Err(Error::InvalidArgument("n_half must be at least 1".into()));
        }
        Ok(Grid {
            n_half,
            step: x_max / n_half as f64,
        })
    }

    pub fn n_half(&self) -> usize {
        self.n_half
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of nodes, `2N + 1`.
    pub fn len(&self) -> usize {
        2 * self.n_half + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Right endpoint `x_N`.
    pub fn x_max(&self) -> f64 {
        self.n_half as f64 * self.step
    }

    /// Signed index of storage slot `k`.
    #[inline]
    pub fn signed(&self, k: usize) -> isize {
        k as isize - self.n_half as isize
    }

    /// Storage slot of signed index `i`.
    #[inline]
    pub fn slot(&self, i: isize) -> usize {
        (i + self.n_half as isize) as usize
    }

    /// Coordinate of storage slot `k`.
    #[inline]
    pub fn node(&self, k: usize) -> f64 {
        self.signed(k) as f64 * self.step
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }

    /// Slot of the node reflected through zero.
    #[inline]
    pub fn mirror(&self, k: usize) -> usize {
        2 * self.n_half - k
    }

    /// Applies the reflection `Sv(x) = v(-x)`.
    pub fn reflect(&self, v: &[f64]) -> Vec<f64> {
        v.iter().rev().copied().collect()
    }

    /// Whether slot `k` holds a strictly negative node.
    pub fn is_negative(&self, k: usize) -> bool {
        k < self.n_half
    }

    /// Linear interpolation of nodal values at `y`, clamped to the end
    /// values outside the grid (no extrapolation).
    pub fn interpolate(&self, v: &[f64], y: f64) -> f64 {
        let n = self.len();
        debug_assert_eq!(v.len(), n);
        let t = y / self.step + self.n_half as f64;
        if !(t > 0.0) {
            return v[0];
        }
        if t >= (n - 1) as f64 {
            return v[n - 1];
        }
        let k = t.floor() as usize;
        let w = t - k as f64;
        if w == 0.0 {
            v[k]
        } else {
            (1.0 - w) * v[k] + w * v[k + 1]
        }
    }
}

/// How the per-node impulse sets are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImpulseMode {
    /// Nonnegative impulses from negative nodes up to the right endpoint.
    Unconstrained,
    /// Nonnegative impulses from negative nodes that stop strictly short of
    /// the reflected node, so no state is ever shifted onto the mirror side.
    SymmetryConstrained,
    /// Any grid node is a reachable target from any node (two-sided).
    AllTargets,
}

/// Admissible impulse sets `Z(x_k)`, stored as contiguous ranges of grid
/// steps. Every admissible impulse lands exactly on a node.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseSets {
    mode: ImpulseMode,
    lo: Vec<isize>,
    hi: Vec<isize>,
}

impl ImpulseSets {
    pub fn new(grid: &Grid, mode: ImpulseMode) -> Self {
        let n = grid.len();
        let big_n = grid.n_half() as isize;
        let mut lo = vec![0; n];
        let mut hi = vec![0; n];
        for k in 0..n {
            let i = grid.signed(k);
            match mode {
                ImpulseMode::Unconstrained => {
                    if i < 0 {
                        hi[k] = big_n - i;
                    }
                }
                ImpulseMode::SymmetryConstrained => {
                    if i < 0 {
                        // targets x_{i+1}, ..., x_{-i-1}
                        hi[k] = -2 * i - 1;
                    }
                }
                ImpulseMode::AllTargets => {
                    lo[k] = -big_n - i;
                    hi[k] = big_n - i;
                }
            }
        }
        ImpulseSets { mode, lo, hi }
    }

    /// Sets from explicit step ranges `lo[k]..=hi[k]`, each containing zero.
    pub fn from_ranges(mode: ImpulseMode, lo: Vec<isize>, hi: Vec<isize>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if let Some(k) = (0..lo.len()).find(|&k| lo[k] > 0 || hi[k] < 0) {
            return Err(Error::InvalidArgument(format!(
                "impulse range {}..={} at node {k} does not contain zero",
                lo[k], hi[k]
            )));
        }
        Ok(ImpulseSets { mode, lo, hi })
    }

    pub fn mode(&self) -> ImpulseMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    /// Admissible impulses at slot `k`, in grid steps, ascending.
    #[inline]
    pub fn steps(&self, k: usize) -> RangeInclusive<isize> {
        self.lo[k]..=self.hi[k]
    }

    /// Admissible impulses at slot `k` as displacements, ascending.
    pub fn values(&self, grid: &Grid, k: usize) -> Vec<f64> {
        self.steps(k).map(|s| s as f64 * grid.step()).collect()
    }

    pub fn max_step(&self, k: usize) -> isize {
        self.hi[k]
    }

    pub fn min_step(&self, k: usize) -> isize {
        self.lo[k]
    }

    pub fn contains(&self, k: usize, step: isize) -> bool {
        self.steps(k).contains(&step)
    }

    /// Whether some nonzero impulse is admissible at slot `k`.
    pub fn can_intervene(&self, k: usize) -> bool {
        self.lo[k] < 0 || self.hi[k] > 0
    }

    /// Total number of (node, impulse) pairs.
    pub fn total_choices(&self) -> usize {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l + 1) as usize)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_grid_has_expected_shape() {
        let g = Grid::symmetric(4.0, 256).unwrap();
        assert_eq!(g.step(), 1.0 / 64.0);
        assert_eq!(g.len(), 513);
        assert_eq!(g.node(0), -4.0);
        assert_eq!(g.node(512), 4.0);
        assert_eq!(g.node(256), 0.0);

        let g = Grid::symmetric(8.0, 512).unwrap();
        assert_eq!(g.step(), 1.0 / 64.0);
        assert_eq!(g.len(), 1025);
        assert_eq!(g.node(1024), 8.0);
    }

    #[test]
    fn smallest_grid() {
        let g = Grid::symmetric(1.0, 1).unwrap();
        assert_eq!(g.nodes(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(g.step(), 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Grid::symmetric(0.0, 4).is_err());
        assert!(Grid::symmetric(-1.0, 4).is_err());
        assert!(Grid::symmetric(f64::NAN, 4).is_err());
        assert!(Grid::symmetric(1.0, 0).is_err());
    }

    #[test]
    fn nodes_are_bit_symmetric() {
        let g = Grid::symmetric(3.7, 301).unwrap();
        for k in 0..g.len() {
            assert_eq!(g.node(g.mirror(k)), -g.node(k));
            assert_eq!(g.mirror(g.mirror(k)), k);
        }
    }

    #[test]
    fn constrained_sets_match_formula() {
        let g = Grid::symmetric(3.0, 3).unwrap();
        let z = ImpulseSets::new(&g, ImpulseMode::SymmetryConstrained);
        assert_eq!(z.values(&g, g.slot(-2)), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(z.values(&g, g.slot(0)), vec![0.0]);
        assert_eq!(z.values(&g, g.slot(2)), vec![0.0]);
        let u = ImpulseSets::new(&g, ImpulseMode::Unconstrained);
        assert_eq!(u.values(&g, g.slot(-2)), vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(u.values(&g, g.slot(1)), vec![0.0]);
    }

    #[test]
    fn constrained_targets_stay_below_mirror() {
        let g = Grid::symmetric(2.0, 40).unwrap();
        let z = ImpulseSets::new(&g, ImpulseMode::SymmetryConstrained);
        for k in 0..g.n_half() {
            let x = g.node(k);
            for s in z.steps(k) {
                let target = (k as isize + s) as usize;
                assert!(g.node(target) < -x);
            }
            assert_eq!(g.node((k as isize + z.max_step(k)) as usize), g.node(g.mirror(k) - 1));
        }
    }

    #[test]
    fn all_target_sets_reach_every_node() {
        let g = Grid::symmetric(1.0, 4).unwrap();
        let z = ImpulseSets::new(&g, ImpulseMode::AllTargets);
        for k in 0..g.len() {
            let targets: Vec<usize> = z.steps(k).map(|s| (k as isize + s) as usize).collect();
            assert_eq!(targets, (0..g.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn interpolation_clamps() {
        let g = Grid::symmetric(1.0, 2).unwrap();
        let v = [1.0, 2.0, 4.0, 8.0, 16.0];
        assert_eq!(g.interpolate(&v, -5.0), 1.0);
        assert_eq!(g.interpolate(&v, 5.0), 16.0);
        assert_eq!(g.interpolate(&v, 0.0), 4.0);
        assert_eq!(g.interpolate(&v, 0.25), 6.0);
        assert_eq!(g.interpolate(&v, 1.0), 16.0);
    }
}
