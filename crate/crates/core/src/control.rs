//! Single-player impulse control on a sub-domain, with values frozen outside
//! it. Two engines: fixed-point policy iteration and Howard's algorithm.

use std::collections::HashSet;

use crate::discretize::{apply_m, apply_m_fast, target, CostSpec, DiscreteOperators, Tie};
use crate::error::{Error, Result};
use crate::grid::{Grid, ImpulseSets};
use crate::matrixkit::{solve_dense, SquareMatrix, Tridiagonal};

/// A control problem restricted to the domain `D`, with payoff frozen to `w`
/// on its complement.
#[derive(Debug, Clone)]
pub struct RestrictedQvi<'a> {
    grid: &'a Grid,
    sets: &'a ImpulseSets,
    cost: CostSpec,
    tie: Tie,
    domain: Vec<usize>,
    local: Vec<Option<usize>>,
    l: Tridiagonal,
    f: Vec<f64>,
    w: Vec<f64>,
    fast_loss: bool,
}

/// Restricts the problem to `in_domain`, which must contain every
/// nonpositive node.
pub fn restrict<'a>(
    ops: &DiscreteOperators,
    grid: &'a Grid,
    sets: &'a ImpulseSets,
    cost: &CostSpec,
    tie: Tie,
    w: &[f64],
    in_domain: &[bool],
) -> Result<RestrictedQvi<'a>> {
    if let Some(k) = (0..=grid.n_half()).find(|&k| !in_domain.get(k).copied().unwrap_or(false)) {
        return Err(Error::DomainMissingNode(k));
    }
    restrict_any(ops, grid, sets, cost, tie, w, in_domain)
}

/// Like [`restrict`], for an arbitrary nonempty domain.
pub fn restrict_any<'a>(
    ops: &DiscreteOperators,
    grid: &'a Grid,
    sets: &'a ImpulseSets,
    cost: &CostSpec,
    tie: Tie,
    w: &[f64],
    in_domain: &[bool],
) -> Result<RestrictedQvi<'a>> {
    let n = grid.len();
    for len in [ops.len(), sets.len(), w.len(), in_domain.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: len,
            });
        }
    }
    let domain: Vec<usize> = (0..n).filter(|&k| in_domain[k]).collect();
    if domain.is_empty() {
        return Err(Error::InvalidArgument("empty domain".into()));
    }
    let mut local = vec![None; n];
    for (i, &k) in domain.iter().enumerate() {
        local[k] = Some(i);
    }
    let m = domain.len();
    let mut l = Tridiagonal::zeros(m);
    let mut f = Vec::with_capacity(m);
    for (i, &k) in domain.iter().enumerate() {
        l.diag[i] = ops.l.diag[k];
        let mut fk = ops.f_adj[k];
        if k > 0 {
            match local[k - 1] {
                Some(j) => {
                    debug_assert_eq!(j + 1, i);
                    l.lower[i] = ops.l.lower[k];
                }
                None => fk += ops.l.lower[k] * w[k - 1],
            }
        }
        if k + 1 < n {
            match local[k + 1] {
                Some(_) => l.upper[i] = ops.l.upper[k],
                None => fk += ops.l.upper[k] * w[k + 1],
            }
        }
        f.push(fk);
    }
    Ok(RestrictedQvi {
        grid,
        sets,
        cost: *cost,
        tie,
        domain,
        local,
        l,
        f,
        w: w.to_vec(),
        fast_loss: false,
    })
}

impl<'a> RestrictedQvi<'a> {
    /// Use [`apply_m_fast`] for the loss operator.
    pub fn with_fast_loss(mut self) -> Self {
        self.fast_loss = true;
        self
    }

    fn apply_loss(&self, full: &[f64]) -> (Vec<f64>, Vec<isize>) {
        if self.fast_loss {
            apply_m_fast(full, self.grid, self.sets, &self.cost, self.tie)
        } else {
            apply_m(full, self.grid, self.sets, &self.cost, self.tie)
        }
    }

    pub fn len(&self) -> usize {
        self.domain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domain.is_empty()
    }

    /// Grid slots of the domain, ascending.
    pub fn domain(&self) -> &[usize] {
        &self.domain
    }

    pub fn generator(&self) -> &Tridiagonal {
        &self.l
    }

    pub fn running(&self) -> &[f64] {
        &self.f
    }

    pub fn frozen(&self) -> &[f64] {
        &self.w
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    pub fn sets(&self) -> &ImpulseSets {
        self.sets
    }

    pub fn tie(&self) -> Tie {
        self.tie
    }

    /// Full-grid vector equal to `v` on the domain and `w` elsewhere.
    pub fn expand(&self, v: &[f64]) -> Vec<f64> {
        let mut full = self.w.clone();
        for (i, &k) in self.domain.iter().enumerate() {
            full[k] = v[i];
        }
        full
    }

    /// Restricted loss operator and maximizing impulses, on the domain.
    pub fn loss(&self, v: &[f64]) -> (Vec<f64>, Vec<isize>) {
        let (mv, best) = self.apply_loss(&self.expand(v));
        (
            self.domain.iter().map(|&k| mv[k]).collect(),
            self.domain.iter().map(|&k| best[k]).collect(),
        )
    }

    /// Row `i` of the restricted impulse data for an impulse of `step` nodes:
    /// the local column hit, if inside the domain, and the adjusted cost.
    pub fn impulse_row(&self, i: usize, step: isize) -> (Option<usize>, f64) {
        let k = self.domain[i];
        let t = target(self.grid, k, step);
        let c = self.cost.eval(step as f64 * self.grid.step());
        match self.local[t] {
            Some(j) => (Some(j), c),
            None => (None, c - self.w[t]),
        }
    }

    /// Whether node `i` may belong to an intervention region.
    pub fn can_intervene(&self, i: usize) -> bool {
        self.sets.can_intervene(self.domain[i])
    }

    /// `L~ v + f~`.
    pub fn continuation(&self, v: &[f64]) -> Vec<f64> {
        (0..v.len()).map(|i| self.l.row_dot(i, v) + self.f[i]).collect()
    }

    /// Solution without interventions.
    pub fn linear_solve(&self) -> Result<Vec<f64>> {
        let rhs: Vec<f64> = self.f.iter().map(|x| -x).collect();
        self.l.solve(&rhs)
    }

    /// Intervention region induced by `v`: nodes where intervening is at
    /// least as good as continuing and the best impulse is nonzero.
    fn region(&self, v: &[f64], mv: &[f64], best: &[isize], lambda: f64) -> Vec<bool> {
        (0..v.len())
            .map(|i| {
                self.can_intervene(i)
                    && best[i] != 0
                    && self.l.row_dot(i, v) + self.f[i] <= lambda * (mv[i] - v[i])
            })
            .collect()
    }

    fn finish(&self, v: &[f64], region: &[bool], iterations: usize, exact: bool) -> ControlSolution {
        let payoff = self.expand(v);
        let (_, impulse) = self.apply_loss(&payoff);
        let mut full_region = vec![false; self.grid.len()];
        for (i, &k) in self.domain.iter().enumerate() {
            full_region[k] = region[i];
        }
        ControlSolution {
            payoff,
            region: full_region,
            impulse,
            iterations,
            exact,
            max_decrease: 0.0,
            iterates: Vec::new(),
        }
    }

    /// Largest pointwise `|max{L~v + f~, lambda (M~v - v)}|` over the domain.
    pub fn residual(&self, v: &[f64], lambda: f64) -> f64 {
        let (mv, _) = self.loss(v);
        (0..v.len())
            .map(|i| {
                let a = self.l.row_dot(i, v) + self.f[i];
                a.max(lambda * (mv[i] - v[i])).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOptions {
    pub lambda: f64,
    pub tol: f64,
    pub scale: f64,
    pub max_iters: usize,
    /// Start from `w` on the domain and its induced region instead of the
    /// empty region.
    pub warm_start: bool,
    /// Keep every iterate in the solution.
    pub record: bool,
}

impl Default for ControlOptions {
    fn default() -> Self {
        ControlOptions {
            lambda: 1.0,
            tol: 1e-15,
            scale: 1.0,
            max_iters: 10_000,
            warm_start: false,
            record: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSolution {
    /// Payoff on the whole grid: solved on the domain, frozen elsewhere.
    pub payoff: Vec<f64>,
    pub region: Vec<bool>,
    /// Maximizing impulse of the loss operator at the payoff.
    pub impulse: Vec<isize>,
    pub iterations: usize,
    /// Stopped on two bitwise-equal iterates (or a repeated policy).
    pub exact: bool,
    /// Largest pointwise decrease between successive iterates from the
    /// second one on. Zero for a monotone run.
    pub max_decrease: f64,
    /// Iterates on the domain, when recorded.
    pub iterates: Vec<Vec<f64>>,
}

/// Relative sup-norm change with a floor on the denominator.
pub fn diff_metric(new: &[f64], old: &[f64], scale: f64) -> f64 {
    new.iter()
        .zip(old)
        .map(|(a, b)| ((a - b) / a.abs().max(scale)).abs())
        .fold(0.0, f64::max)
}

/// Fixed-point policy iteration.
pub fn solve_fppi(rq: &RestrictedQvi<'_>, opts: &ControlOptions) -> Result<ControlSolution> {
    let m = rq.len();
    let lambda = opts.lambda;
    let (mut v, mut region) = if opts.warm_start {
        let v0: Vec<f64> = rq.domain.iter().map(|&k| rq.w[k]).collect();
        let (mv, best) = rq.loss(&v0);
        let r = rq.region(&v0, &mv, &best, lambda);
        (v0, r)
    } else {
        (vec![0.0; m], vec![false; m])
    };
    let (mut mv, _) = rq.loss(&v);
    let mut iterates = Vec::new();
    let mut max_decrease = 0.0f64;
    let mut best_diff = f64::INFINITY;
    let mut best_state: Option<(Vec<f64>, Vec<bool>)> = None;
    let mut since_best = 0;
    let mut sys = Tridiagonal::zeros(m);
    let mut rhs = vec![0.0; m];
    let mut last_diff = f64::INFINITY;
    for k in 0..opts.max_iters {
        for i in 0..m {
            if region[i] {
                sys.lower[i] = 0.0;
                sys.diag[i] = 1.0;
                sys.upper[i] = 0.0;
                rhs[i] = mv[i];
            } else {
                sys.lower[i] = rq.l.lower[i];
                sys.diag[i] = rq.l.diag[i];
                sys.upper[i] = rq.l.upper[i];
                rhs[i] = -rq.f[i];
            }
        }
        let next = sys.solve(&rhs)?;
        if k >= 1 || opts.warm_start {
            let dec = v
                .iter()
                .zip(&next)
                .map(|(a, b)| a - b)
                .fold(0.0, f64::max);
            if k >= 1 {
                max_decrease = max_decrease.max(dec);
            }
        }
        let (nmv, nbest) = rq.loss(&next);
        let nregion = rq.region(&next, &nmv, &nbest, lambda);
        if opts.record {
            iterates.push(next.clone());
        }
        let exact = next == v;
        let diff = diff_metric(&next, &v, opts.scale);
        last_diff = diff;
        v = next;
        mv = nmv;
        region = nregion;
        if exact || diff < opts.tol {
            let mut sol = rq.finish(&v, &region, k + 1, exact);
            sol.max_decrease = max_decrease;
            sol.iterates = iterates;
            return Ok(sol);
        }
        if diff < best_diff {
            best_diff = diff;
            best_state = Some((v.clone(), region.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= 50 {
                let (bv, br) = best_state.take().unwrap_or((v.clone(), region.clone()));
                let mut sol = rq.finish(&bv, &br, k + 1, false);
                sol.max_decrease = max_decrease;
                sol.iterates = iterates;
                return Ok(sol);
            }
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iters,
        last_diff,
    })
}

/// Howard's policy iteration on the Bellman form of the restricted problem.
pub fn solve_howard(rq: &RestrictedQvi<'_>, opts: &ControlOptions) -> Result<ControlSolution> {
    let m = rq.len();
    let lambda = opts.lambda;
    let mut psi = vec![false; m];
    let mut delta = vec![0isize; m];
    let mut seen: HashSet<(Vec<bool>, Vec<isize>)> = HashSet::new();
    let mut iterates = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    let mut max_decrease = 0.0f64;
    for it in 0..opts.max_iters {
        if !seen.insert((psi.clone(), delta.clone())) {
            // A repeated policy means no strict improvement is possible.
            let v = prev.expect("a policy repeats only after one evaluation");
            return Ok(finish_howard(rq, &v, &psi, it, max_decrease, iterates));
        }
        let v = evaluate_policy(rq, &psi, &delta, lambda)?;
        if let Some(p) = &prev {
            max_decrease = max_decrease.max(p.iter().zip(&v).map(|(a, b)| a - b).fold(0.0, f64::max));
        }
        if opts.record {
            iterates.push(v.clone());
        }
        let mut changed = false;
        for i in 0..m {
            let cont = rq.l.row_dot(i, &v) + rq.f[i];
            // Best impulse, keeping the current one on ties.
            let mut bd = delta[i];
            let mut bval = impulse_value(rq, &v, i, bd);
            if rq.can_intervene(i) {
                for s in rq.sets.steps(rq.domain[i]) {
                    let val = impulse_value(rq, &v, i, s);
                    if val > bval {
                        bval = val;
                        bd = s;
                    }
                }
            }
            let int = lambda * (bval - v[i]);
            let want = if psi[i] {
                !(cont > int) && bd != 0
            } else {
                int > cont && bd != 0 && rq.can_intervene(i)
            };
            if want != psi[i] || bd != delta[i] {
                changed = true;
            }
            psi[i] = want;
            delta[i] = bd;
        }
        if !changed {
            return Ok(finish_howard(rq, &v, &psi, it + 1, max_decrease, iterates));
        }
        prev = Some(v);
    }
    Err(Error::NotConverged {
        iterations: opts.max_iters,
        last_diff: f64::NAN,
    })
}

fn finish_howard(
    rq: &RestrictedQvi<'_>,
    v: &[f64],
    psi: &[bool],
    iterations: usize,
    max_decrease: f64,
    iterates: Vec<Vec<f64>>,
) -> ControlSolution {
    let mut sol = rq.finish(v, psi, iterations, true);
    sol.max_decrease = max_decrease;
    sol.iterates = iterates;
    sol
}

#[inline]
fn impulse_value(rq: &RestrictedQvi<'_>, v: &[f64], i: usize, step: isize) -> f64 {
    match rq.impulse_row(i, step) {
        (Some(j), c) => v[j] - c,
        (None, c) => -c,
    }
}

/// Bellman matrix `A(phi)` and vector `b(phi)` of a policy, with the
/// intervention rows scaled by `lambda`.
pub fn policy_system(
    rq: &RestrictedQvi<'_>,
    psi: &[bool],
    delta: &[isize],
    lambda: f64,
) -> (SquareMatrix, Vec<f64>) {
    let m = rq.len();
    let mut a = SquareMatrix::zeros(m);
    let mut b = vec![0.0; m];
    for i in 0..m {
        if psi[i] {
            a[(i, i)] += lambda;
            let (col, c) = rq.impulse_row(i, delta[i]);
            if let Some(j) = col {
                a[(i, j)] -= lambda;
            }
            b[i] = -lambda * c;
        } else {
            a[(i, i)] = -rq.l.diag[i];
            if i > 0 {
                a[(i, i - 1)] = -rq.l.lower[i];
            }
            if i + 1 < m {
                a[(i, i + 1)] = -rq.l.upper[i];
            }
            b[i] = rq.f[i];
        }
    }
    (a, b)
}

fn evaluate_policy(rq: &RestrictedQvi<'_>, psi: &[bool], delta: &[isize], lambda: f64) -> Result<Vec<f64>> {
    if !psi.iter().any(|&p| p) {
        return rq.linear_solve();
    }
    let (a, b) = policy_system(rq, psi, delta, lambda);
    solve_dense(&a, &b)
}
