//! Game definitions and their finite-difference discretization: the
//! upwind generator, impulse matrices, and the loss and gain operators.

use crate::error::{Error, Result};
use crate::grid::{Grid, ImpulseSets};
use crate::matrixkit::{SquareMatrix, Tridiagonal};

/// Closed parametric function families of the state variable.
#[derive(Debug, Clone, PartialEq)]
pub enum Func {
    /// `coeffs[0] + coeffs[1] x + ...`, degree at most four.
    Poly(Vec<f64>),
    /// `a |x - s| + b`.
    AbsLinear { a: f64, s: f64, b: f64 },
    /// `min(a (x - s), cap)`.
    CappedLinear { a: f64, s: f64, cap: f64 },
}

/// Cap used by [`Func::capped`] when none is given.
pub const DEFAULT_CAP: f64 = 5.0;

impl Func {
    pub fn constant(c: f64) -> Self {
        Func::Poly(vec![c])
    }

    pub fn zero() -> Self {
        Func::Poly(vec![0.0])
    }

    /// `a + b x`.
    pub fn linear(a: f64, b: f64) -> Self {
        Func::Poly(vec![a, b])
    }

    pub fn capped(a: f64, s: f64) -> Self {
        Func::CappedLinear {
            a,
            s,
            cap: DEFAULT_CAP,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Func::Poly(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci),
            Func::AbsLinear { a, s, b } => a * (x - s).abs() + b,
            Func::CappedLinear { a, s, cap } => (a * (x - s)).min(*cap),
        }
    }

    /// Whether the function is bounded above on the real line.
    pub fn bounded_above(&self) -> bool {
        match self {
            Func::Poly(c) => {
                let deg = c.iter().rposition(|&x| x != 0.0).unwrap_or(0);
                deg == 0 || (deg % 2 == 0 && c[deg] < 0.0)
            }
            Func::AbsLinear { a, .. } => *a <= 0.0,
            Func::CappedLinear { .. } => true,
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let finite = match self {
            Func::Poly(c) => {
                if c.is_empty() || c.len() > 5 {
                    return Err(Error::InvalidSpec(format!(
                        "{what}: polynomial needs 1 to 5 coefficients, got {}",
                        c.len()
                    )));
                }
                c.iter().all(|x| x.is_finite())
            }
            Func::AbsLinear { a, s, b } => [a, s, b].iter().all(|x| x.is_finite()),
            Func::CappedLinear { a, s, cap } => [a, s, cap].iter().all(|x| x.is_finite()),
        };
        if finite {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("{what}: non-finite parameter")))
        }
    }
}

/// Intervention cost `c0 + c1 d + c2 d^2 + cr sqrt(d)` for an impulse of size `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSpec {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub cr: f64,
}

impl CostSpec {
    pub fn constant(c0: f64) -> Self {
        CostSpec {
            c0,
            c1: 0.0,
            c2: 0.0,
            cr: 0.0,
        }
    }

    pub fn linear(c0: f64, c1: f64) -> Self {
        CostSpec {
            c1,
            ..Self::constant(c0)
        }
    }

    #[inline]
    pub fn eval(&self, delta: f64) -> f64 {
        let d = delta.abs();
        let mut c = self.c0 + self.c1 * d;
        if self.c2 != 0.0 {
            c += self.c2 * d * d;
        }
        if self.cr != 0.0 {
            c += self.cr * d.sqrt();
        }
        c
    }

    pub fn is_constant(&self) -> bool {
        self.c1 == 0.0 && self.c2 == 0.0 && self.cr == 0.0
    }

    fn validate(&self) -> Result<()> {
        let all = [self.c0, self.c1, self.c2, self.cr];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpec("cost: non-finite coefficient".into()));
        }
        if self.c0 <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "cost: fixed part c0 must be positive, got {}",
                self.c0
            )));
        }
        if self.c1 < 0.0 || self.c2 < 0.0 || self.cr < 0.0 {
            return Err(Error::InvalidSpec(
                "cost: c1, c2 and cr must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Gain `g0 + g1 d` received when the opponent applies an impulse of size `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSpec {
    pub g0: f64,
    pub g1: f64,
}

impl GainSpec {
    pub fn linear(g0: f64, g1: f64) -> Self {
        GainSpec { g0, g1 }
    }

    #[inline]
    pub fn eval(&self, delta: f64) -> f64 {
        self.g0 + self.g1 * delta.abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dynamics {
    pub drift: Func,
    pub vol: Func,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerSpec {
    pub discount: f64,
    pub payoff: Func,
    pub cost: CostSpec,
    pub gain: GainSpec,
}

impl PlayerSpec {
    fn validate(&self, who: &str) -> Result<()> {
        if !(self.discount > 0.0 && self.discount.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "{who}: discount rate must be positive, got {}",
                self.discount
            )));
        }
        self.payoff.validate(&format!("{who} payoff"))?;
        self.cost.validate().map_err(|e| match e {
            Error::InvalidSpec(m) => Error::InvalidSpec(format!("{who} {m}")),
            e => e,
        })?;
        if !(self.gain.g0.is_finite() && self.gain.g1.is_finite()) {
            return Err(Error::InvalidSpec(format!("{who} gain: non-finite coefficient")));
        }
        Ok(())
    }
}

/// A symmetric game, described through player 1. Player 2's data follow by
/// reflecting the state.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub dynamics: Dynamics,
    pub player: PlayerSpec,
}

impl GameSpec {
    /// Checks the data and that the drift is odd and the volatility even on
    /// sample points of `[-x_max, x_max]`.
    pub fn validate(&self, x_max: f64) -> Result<()> {
        self.dynamics.drift.validate("drift")?;
        self.dynamics.vol.validate("volatility")?;
        self.player.validate("player")?;
        for k in 0..=64 {
            let x = x_max * k as f64 / 64.0;
            let (m1, m2) = (self.dynamics.drift.eval(x), self.dynamics.drift.eval(-x));
            if (m1 + m2).abs() > 1e-12 * (1.0 + m1.abs()) {
                return Err(Error::InvalidSpec(format!("drift is not odd at x = {x}")));
            }
            let (s1, s2) = (self.dynamics.vol.eval(x), self.dynamics.vol.eval(-x));
            if (s1 - s2).abs() > 1e-12 * (1.0 + s1.abs()) {
                return Err(Error::InvalidSpec(format!("volatility is not even at x = {x}")));
            }
            if s1 < 0.0 {
                return Err(Error::InvalidSpec(format!("volatility is negative at x = {x}")));
            }
        }
        Ok(())
    }

    /// Neumann slopes matching linear cost and gain: `(c1, g1)`.
    pub fn default_boundary(&self) -> (f64, f64) {
        (self.player.cost.c1, self.player.gain.g1)
    }

    pub fn operators(&self, grid: &Grid, lbc: f64, rbc: f64) -> DiscreteOperators {
        DiscreteOperators::build(&self.dynamics, &self.player, grid, lbc, rbc)
    }
}

/// A general two-player game. Player 1 intervenes by pushing the state up,
/// player 2 by pushing it down, though admissible sets may allow both.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralGameSpec {
    pub dynamics: Dynamics,
    pub players: [PlayerSpec; 2],
}

impl GeneralGameSpec {
    pub fn validate(&self) -> Result<()> {
        self.dynamics.drift.validate("drift")?;
        self.dynamics.vol.validate("volatility")?;
        self.players[0].validate("player 1")?;
        self.players[1].validate("player 2")
    }

    /// Neumann slopes for linear costs and gains, as `(lbc, rbc)` per player.
    pub fn default_boundary(&self) -> [(f64, f64); 2] {
        let [p1, p2] = &self.players;
        [(p1.cost.c1, p1.gain.g1), (-p2.gain.g1, -p2.cost.c1)]
    }

    pub fn operators(&self, player: usize, grid: &Grid, lbc: f64, rbc: f64) -> DiscreteOperators {
        DiscreteOperators::build(&self.dynamics, &self.players[player], grid, lbc, rbc)
    }
}

/// Generator and boundary-adjusted running payoff on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperators {
    pub l: Tridiagonal,
    /// Running payoff on the nodes, without boundary terms.
    pub f: Vec<f64>,
    /// Running payoff with the Neumann contributions folded in.
    pub f_adj: Vec<f64>,
    pub lbc: f64,
    pub rbc: f64,
}

impl DiscreteOperators {
    /// Upwind discretization of `1/2 sigma^2 v'' + mu v' - rho v + f` with
    /// ghost nodes eliminated through the slopes `lbc` and `rbc`.
    pub fn build(dynamics: &Dynamics, player: &PlayerSpec, grid: &Grid, lbc: f64, rbc: f64) -> Self {
        let n = grid.len();
        let h = grid.step();
        let mut l = Tridiagonal::zeros(n);
        let mut f = Vec::with_capacity(n);
        let mut f_adj = Vec::with_capacity(n);
        for k in 0..n {
            let x = grid.node(k);
            let mu = dynamics.drift.eval(x);
            let sigma = dynamics.vol.eval(x);
            let a = 0.5 * sigma * sigma / (h * h);
            let lower = a + (-mu).max(0.0) / h;
            let upper = a + mu.max(0.0) / h;
            let mut diag = -(lower + upper) - player.discount;
            let fx = player.payoff.eval(x);
            let mut fa = fx;
            if k == 0 {
                diag += lower;
                fa -= lower * lbc * h;
            } else {
                l.lower[k] = lower;
            }
            if k == n - 1 {
                diag += upper;
                fa += upper * rbc * h;
            } else {
                l.upper[k] = upper;
            }
            l.diag[k] = diag;
            f.push(fx);
            f_adj.push(fa);
        }
        DiscreteOperators {
            l,
            f,
            f_adj,
            lbc,
            rbc,
        }
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    /// `L v + f_adj`.
    pub fn continuation(&self, v: &[f64]) -> Vec<f64> {
        (0..v.len())
            .map(|k| self.l.row_dot(k, v) + self.f_adj[k])
            .collect()
    }
}

/// Rule for choosing among tied maximizers of the loss operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tie {
    /// Keep the largest impulse.
    Largest,
    /// Keep the smallest impulse.
    Smallest,
}

/// An intervention region and per-node impulse, both indexed by node slot.
/// Impulses are signed step counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Strategy {
    pub region: Vec<bool>,
    pub impulse: Vec<isize>,
}

impl Strategy {
    pub fn never(n: usize) -> Self {
        Strategy {
            region: vec![false; n],
            impulse: vec![0; n],
        }
    }

    pub fn check(&self, sets: &ImpulseSets) -> Result<()> {
        if self.region.len() != sets.len() || self.impulse.len() != sets.len() {
            return Err(Error::DimensionMismatch {
                expected: sets.len(),
                got: self.region.len().min(self.impulse.len()),
            });
        }
        for (k, &s) in self.impulse.iter().enumerate() {
            if !sets.contains(k, s) {
                return Err(Error::InadmissibleImpulse { node: k, step: s });
            }
            if self.region[k] && !sets.can_intervene(k) {
                return Err(Error::InadmissibleImpulse { node: k, step: s });
            }
        }
        Ok(())
    }
}

/// Target slot of an impulse of `step` nodes from `k`, clamped to the grid.
#[inline]
pub fn target(grid: &Grid, k: usize, step: isize) -> usize {
    (k as isize + step).clamp(0, grid.len() as isize - 1) as usize
}

/// `B(delta)`: row `k` picks the value at the impulse target.
pub fn impulse_matrix(grid: &Grid, sets: &ImpulseSets, impulse: &[isize]) -> Result<SquareMatrix> {
    let n = grid.len();
    if impulse.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: impulse.len(),
        });
    }
    let mut b = SquareMatrix::zeros(n);
    for (k, &s) in impulse.iter().enumerate() {
        if !sets.contains(k, s) {
            return Err(Error::InadmissibleImpulse { node: k, step: s });
        }
        b[(k, target(grid, k, s))] = 1.0;
    }
    Ok(b)
}

/// Cost of every impulse size in steps, `0..=max_steps`.
pub(crate) fn cost_table(cost: &CostSpec, h: f64, max_steps: usize) -> Vec<f64> {
    (0..=max_steps).map(|s| cost.eval(s as f64 * h)).collect()
}

/// Loss operator: best value of intervening now, net of cost, and the
/// maximizing impulse chosen per `tie`.
pub fn apply_m(
    v: &[f64],
    grid: &Grid,
    sets: &ImpulseSets,
    cost: &CostSpec,
    tie: Tie,
) -> (Vec<f64>, Vec<isize>) {
    let n = grid.len();
    assert_eq!(v.len(), n);
    let costs = cost_table(cost, grid.step(), n);
    let fast = cost.is_constant().then(|| RangeArgmax::new(v, costs[0], tie));
    let mut mv = Vec::with_capacity(n);
    let mut best = Vec::with_capacity(n);
    for k in 0..n {
        let (lo, hi) = (sets.min_step(k), sets.max_step(k));
        let (val, step) = match &fast {
            Some(ra) if lo < hi => {
                let (y, w) = ra.query(
                    (k as isize + lo) as usize,
                    (k as isize + hi) as usize,
                );
                (w, y as isize - k as isize)
            }
            _ => argmax_row(v, k, lo, hi, &costs, tie),
        };
        mv.push(val);
        best.push(step);
    }
    (mv, best)
}

/// Like [`apply_m`], with an `O(n log n)` path for affine costs. Within
/// each impulse direction the maximizer is found on `v(y) -+ c1 h y`, so
/// exact ties across targets are resolved only up to rounding; the symmetric
/// solver, which relies on exact ties, keeps using [`apply_m`].
pub fn apply_m_fast(
    v: &[f64],
    grid: &Grid,
    sets: &ImpulseSets,
    cost: &CostSpec,
    tie: Tie,
) -> (Vec<f64>, Vec<isize>) {
    if cost.is_constant() || cost.c2 != 0.0 || cost.cr != 0.0 {
        return apply_m(v, grid, sets, cost, tie);
    }
    let n = grid.len();
    assert_eq!(v.len(), n);
    let h = grid.step();
    let slope = cost.c1 * h;
    let up: Vec<f64> = (0..n).map(|y| v[y] - slope * y as f64).collect();
    let down: Vec<f64> = (0..n).map(|y| v[y] + slope * y as f64).collect();
    let (up, down) = (RangeArgmax::new(&up, 0.0, tie), RangeArgmax::new(&down, 0.0, tie));
    let exact = |k: usize, y: usize| v[y] - cost.eval((y as f64 - k as f64).abs() * h);
    let mut mv = Vec::with_capacity(n);
    let mut best = Vec::with_capacity(n);
    for k in 0..n {
        let (lo, hi) = (sets.min_step(k), sets.max_step(k));
        // Candidates in ascending step order: below, stay, above.
        let mut cands: [Option<usize>; 3] = [None, None, None];
        if lo < 0 {
            let end = (k as isize + hi.min(-1)) as usize;
            cands[0] = Some(down.query((k as isize + lo) as usize, end).0);
        }
        if lo <= 0 && hi >= 0 {
            cands[1] = Some(k);
        }
        if hi > 0 {
            let start = (k as isize + lo.max(1)) as usize;
            cands[2] = Some(up.query(start, (k as isize + hi) as usize).0);
        }
        let mut pick: Option<(usize, f64)> = None;
        for y in cands.into_iter().flatten() {
            let val = exact(k, y);
            let take = match (pick, tie) {
                (None, _) => true,
                (Some((_, b)), Tie::Largest) => val >= b,
                (Some((_, b)), Tie::Smallest) => val > b,
            };
            if take {
                pick = Some((y, val));
            }
        }
        let (y, val) = pick.expect("impulse set is never empty");
        mv.push(val);
        best.push(y as isize - k as isize);
    }
    (mv, best)
}

#[inline]
fn argmax_row(v: &[f64], k: usize, lo: isize, hi: isize, costs: &[f64], tie: Tie) -> (f64, isize) {
    let mut best_val = f64::NEG_INFINITY;
    let mut best_step = lo;
    for s in lo..=hi {
        let y = (k as isize + s) as usize;
        let val = v[y] - costs[s.unsigned_abs()];
        let better = match tie {
            Tie::Largest => val >= best_val,
            Tie::Smallest => val > best_val,
        };
        if better {
            best_val = val;
            best_step = s;
        }
    }
    (best_val, best_step)
}

/// Sparse table answering range argmax queries over `v - c` with the same
/// tie semantics as a left-to-right scan.
struct RangeArgmax {
    w: Vec<f64>,
    table: Vec<Vec<u32>>,
    tie: Tie,
}

impl RangeArgmax {
    fn new(v: &[f64], c: f64, tie: Tie) -> Self {
        let w: Vec<f64> = v.iter().map(|x| x - c).collect();
        let n = w.len();
        let mut table = vec![(0..n as u32).collect::<Vec<_>>()];
        let mut span = 1;
        while 2 * span <= n {
            let prev = table.last().unwrap();
            let next: Vec<u32> = (0..=n - 2 * span)
                .map(|i| pick(&w, prev[i], prev[i + span], tie))
                .collect();
            table.push(next);
            span *= 2;
        }
        RangeArgmax { w, table, tie }
    }

    /// Best index in `lo..=hi` and its value.
    fn query(&self, lo: usize, hi: usize) -> (usize, f64) {
        let len = hi - lo + 1;
        let level = (usize::BITS - 1 - len.leading_zeros()) as usize;
        let row = &self.table[level];
        let i = pick(&self.w, row[lo], row[hi + 1 - (1 << level)], self.tie) as usize;
        (i, self.w[i])
    }
}

#[inline]
fn pick(w: &[f64], a: u32, b: u32, tie: Tie) -> u32 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let (wl, wh) = (w[lo as usize], w[hi as usize]);
    if wh > wl {
        hi
    } else if wl > wh {
        lo
    } else {
        match tie {
            Tie::Largest => hi,
            Tie::Smallest => lo,
        }
    }
}

/// Gain operator for symmetric games. The opponent's impulse at `x` is the
/// reflection of player 1's impulse at `-x`.
pub fn apply_h_symmetric(v: &[f64], best: &[isize], grid: &Grid, gain: &GainSpec) -> Vec<f64> {
    let h = grid.step();
    (0..grid.len())
        .map(|k| {
            let s = best[grid.mirror(k)];
            v[target(grid, k, -s)] + gain.eval(s as f64 * h)
        })
        .collect()
}

/// Gain operator for general games: the opponent applies `opp_best`.
pub fn apply_h(v: &[f64], opp_best: &[isize], grid: &Grid, gain: &GainSpec) -> Vec<f64> {
    let h = grid.step();
    (0..grid.len())
        .map(|k| {
            let s = opp_best[k];
            v[target(grid, k, s)] + gain.eval(s as f64 * h)
        })
        .collect()
}

/// Symmetry permutation matrix `S`.
pub fn symmetry_matrix(grid: &Grid) -> SquareMatrix {
    let n = grid.len();
    let mut s = SquareMatrix::zeros(n);
    for k in 0..n {
        s[(k, grid.mirror(k))] = 1.0;
    }
    s
}
