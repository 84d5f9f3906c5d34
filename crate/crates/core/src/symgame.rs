//! Fixed-point iteration for symmetric two-player impulse games.
//!
//! Only player 1's payoff `v` is stored; player 2's is its reflection. Each
//! iteration lets the opponent act with the mirror of the current strategy,
//! then solves player 1's impulse control problem outside the opponent's
//! intervention region.

use std::collections::hash_map::DefaultHasher;
use std::collections::VecDeque;
use std::hash::{Hash, Hasher};

use crate::control::{diff_metric, restrict, solve_fppi, solve_howard, ControlOptions, ControlSolution};
use crate::discretize::{
    apply_h_symmetric, apply_m, target, CostSpec, DiscreteOperators, GainSpec, GameSpec, Strategy, Tie,
};
use crate::error::{Error, Result};
use crate::grid::{Grid, ImpulseSets};
use crate::matrixkit::SquareMatrix;

/// Inner single-player solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Engine {
    #[default]
    Fppi,
    Howard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymSolveOptions {
    pub tol: f64,
    pub scale: f64,
    pub max_iters: usize,
    pub engine: Engine,
    pub control: ControlOptions,
    /// Initial payoff; zero when absent.
    pub initial: Option<Vec<f64>>,
    /// Iterates remembered for cycle detection.
    pub cycle_window: usize,
    /// Evaluate the one-step fixed-point identity at every iteration.
    pub check_identity: bool,
}

impl Default for SymSolveOptions {
    fn default() -> Self {
        SymSolveOptions {
            tol: 1e-8,
            scale: 1.0,
            max_iters: 500,
            engine: Engine::Fppi,
            control: ControlOptions::default(),
            initial: None,
            cycle_window: 20,
            check_identity: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stop {
    /// Relative change fell below the tolerance.
    Tolerance,
    /// Two successive iterates were bitwise equal.
    Exact,
    /// An earlier iterate recurred; the best one in the window is returned.
    Cycle,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymSolveReport {
    pub payoff: Vec<f64>,
    pub region: Vec<bool>,
    pub impulse: Vec<isize>,
    /// Index of the returned iterate.
    pub iterations: usize,
    /// Total iterations performed.
    pub performed: usize,
    pub diff_history: Vec<f64>,
    pub stop: Stop,
    /// Every inner solve converged exactly.
    pub inner_exact: bool,
    pub max_res_qvis: f64,
    pub residual_by_node: Vec<f64>,
    /// Fixed-point identity residual per iteration, when checked.
    pub identity_residuals: Vec<f64>,
}

impl SymSolveReport {
    pub fn converged(&self) -> bool {
        matches!(self.stop, Stop::Tolerance | Stop::Exact)
    }

    pub fn converged_exactly(&self) -> bool {
        self.stop == Stop::Exact
    }

    pub fn strategy(&self) -> Strategy {
        Strategy {
            region: self.region.clone(),
            impulse: self.impulse.clone(),
        }
    }
}

/// A discretized symmetric game.
#[derive(Debug, Clone)]
pub struct SymmetricGame {
    pub grid: Grid,
    pub sets: ImpulseSets,
    pub ops: DiscreteOperators,
    pub cost: CostSpec,
    pub gain: GainSpec,
}

impl SymmetricGame {
    pub fn new(spec: &GameSpec, grid: Grid, sets: ImpulseSets, lbc: f64, rbc: f64) -> Result<Self> {
        spec.validate(grid.x_max())?;
        if sets.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: sets.len(),
            });
        }
        for k in grid.n_half()..grid.len() {
            if sets.can_intervene(k) {
                return Err(Error::InvalidArgument(format!(
                    "impulse set at nonnegative node {} is not {{0}}",
                    grid.node(k)
                )));
            }
        }
        let ops = spec.operators(&grid, lbc, rbc);
        Ok(SymmetricGame {
            grid,
            sets,
            ops,
            cost: spec.player.cost,
            gain: spec.player.gain,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// `M v` and the largest maximizing impulse.
    pub fn loss(&self, v: &[f64]) -> (Vec<f64>, Vec<isize>) {
        apply_m(v, &self.grid, &self.sets, &self.cost, Tie::Largest)
    }

    pub fn gain_op(&self, v: &[f64], best: &[isize]) -> Vec<f64> {
        apply_h_symmetric(v, best, &self.grid, &self.gain)
    }

    /// Strategy induced by `v`: `{Lv + f <= Mv - v}` on negative nodes, with
    /// the maximizing impulse.
    pub fn induced(&self, v: &[f64]) -> Strategy {
        let (mv, best) = self.loss(v);
        let cont = self.ops.continuation(v);
        let region = (0..self.len())
            .map(|k| self.sets.can_intervene(k) && best[k] != 0 && cont[k] <= mv[k] - v[k])
            .collect();
        Strategy {
            region,
            impulse: best,
        }
    }

    pub fn solve(&self, opts: &SymSolveOptions) -> Result<SymSolveReport> {
        solve_symmetric(self, opts)
    }
}

/// Residuals agreeing to three significant figures count as equal when
/// picking the returned iterate of a cycle.
const TIE_REL: f64 = 1e-3;

#[derive(Clone)]
struct Snapshot {
    v: Vec<f64>,
    strat: Strategy,
    index: usize,
    hash: u64,
}

/// Hash of the region and the payoff with its last mantissa bits dropped.
fn fingerprint(v: &[f64], region: &[bool]) -> u64 {
    let mut h = DefaultHasher::new();
    region.hash(&mut h);
    for x in v {
        (x.to_bits() >> 4).hash(&mut h);
    }
    h.finish()
}

pub fn solve_symmetric(game: &SymmetricGame, opts: &SymSolveOptions) -> Result<SymSolveReport> {
    let n = game.len();
    if !(opts.tol > 0.0 && opts.scale > 0.0 && opts.max_iters > 0) {
        return Err(Error::InvalidArgument(
            "tol, scale and max_iters must be positive".into(),
        ));
    }
    let mut v = match &opts.initial {
        Some(v0) if v0.len() != n => {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: v0.len(),
            })
        }
        Some(v0) => v0.clone(),
        None => vec![0.0; n],
    };
    let mut strat = game.induced(&v);
    let mut window: VecDeque<Snapshot> = VecDeque::new();
    let mut diff_history = Vec::new();
    let mut identity_residuals = Vec::new();
    let mut inner_exact = true;
    let mut stop = Stop::MaxIters;
    let mut returned = 0;
    for k in 0..opts.max_iters {
        let sol = best_response(game, &v, &strat, opts)?;
        inner_exact &= sol.exact;
        let next_strat = Strategy {
            region: sol.region,
            impulse: sol.impulse,
        };
        let next = sol.payoff;
        if opts.check_identity {
            identity_residuals.push(identity_residual(game, &strat, &next_strat, &v, &next)?);
        }
        let exact = next == v;
        let diff = diff_metric(&next, &v, opts.scale);
        diff_history.push(diff);
        v = next;
        strat = next_strat;
        returned = k + 1;
        if exact {
            stop = Stop::Exact;
            break;
        }
        if diff < opts.tol {
            stop = Stop::Tolerance;
            break;
        }
        let hash = fingerprint(&v, &strat.region);
        if window.iter().any(|s| s.hash == hash && s.strat.region == strat.region) {
            // Return the iterate with the smallest residual; near-ties go to
            // the earliest one.
            let mut best: Option<(f64, &Snapshot)> = None;
            for s in &window {
                let r = max_res_qvis(game, &s.v).0;
                if best.is_none_or(|(b, _)| r < b * (1.0 - TIE_REL)) {
                    best = Some((r, s));
                }
            }
            let current = max_res_qvis(game, &v).0;
            let best = match best {
                Some((r, s)) if r <= current * (1.0 + TIE_REL) => (r, s.v.clone(), s.strat.clone(), s.index),
                _ => (current, v.clone(), strat.clone(), k + 1),
            };
            v = best.1;
            strat = best.2;
            returned = best.3;
            stop = Stop::Cycle;
            break;
        }
        window.push_back(Snapshot {
            v: v.clone(),
            strat: strat.clone(),
            index: k + 1,
            hash,
        });
        if window.len() > opts.cycle_window {
            window.pop_front();
        }
    }
    let (max_res, by_node) = max_res_qvis(game, &v);
    Ok(SymSolveReport {
        payoff: v,
        region: strat.region,
        impulse: strat.impulse,
        iterations: returned,
        performed: diff_history.len(),
        diff_history,
        stop,
        inner_exact,
        max_res_qvis: max_res,
        residual_by_node: by_node,
        identity_residuals,
    })
}

/// One iteration: opponent acts on the mirror of `strat`, player 1 responds.
fn best_response(
    game: &SymmetricGame,
    v: &[f64],
    strat: &Strategy,
    opts: &SymSolveOptions,
) -> Result<ControlSolution> {
    let n = game.len();
    let hv = game.gain_op(v, &strat.impulse);
    let mut half = v.to_vec();
    let mut in_domain = vec![true; n];
    for k in 0..n {
        if strat.region[game.grid.mirror(k)] {
            half[k] = hv[k];
            in_domain[k] = false;
        }
    }
    let rq = restrict(
        &game.ops,
        &game.grid,
        &game.sets,
        &game.cost,
        Tie::Largest,
        &half,
        &in_domain,
    )?;
    match opts.engine {
        Engine::Fppi => solve_fppi(&rq, &opts.control),
        Engine::Howard => solve_howard(&rq, &opts.control),
    }
}

/// Pointwise residual of the discrete system of QVIs at `v`, with its sup.
pub fn max_res_qvis(game: &SymmetricGame, v: &[f64]) -> (f64, Vec<f64>) {
    let strat = game.induced(v);
    let (mv, _) = game.loss(v);
    let cont = game.ops.continuation(v);
    let hv = game.gain_op(v, &strat.impulse);
    let by_node: Vec<f64> = (0..game.len())
        .map(|k| {
            if strat.region[game.grid.mirror(k)] {
                (hv[k] - v[k]).abs()
            } else {
                cont[k].max(mv[k] - v[k]).abs()
            }
        })
        .collect();
    let max = by_node.iter().copied().fold(0.0, f64::max);
    (max, by_node)
}

/// Matrices `(A, B, C)` of the fixed-point form `A v' = B v + C` relating
/// an iterate to the next one, for opponent strategy `phi` and player
/// strategy `phi_bar`.
pub fn fixed_point_matrices(
    game: &SymmetricGame,
    phi: &Strategy,
    phi_bar: &Strategy,
) -> Result<(SquareMatrix, SquareMatrix, Vec<f64>)> {
    let grid = &game.grid;
    let n = grid.len();
    for s in [phi, phi_bar] {
        s.check(&game.sets)?;
        if let Some(k) = (grid.n_half()..n).find(|&k| s.region[k]) {
            return Err(Error::InvalidArgument(format!(
                "intervention at nonnegative node {}",
                grid.node(k)
            )));
        }
    }
    let h = grid.step();
    let mut a = SquareMatrix::zeros(n);
    let mut b = SquareMatrix::zeros(n);
    let mut c = vec![0.0; n];
    for k in 0..n {
        let mk = grid.mirror(k);
        if phi_bar.region[k] {
            let s = phi_bar.impulse[k];
            a[(k, k)] += 1.0;
            a[(k, target(grid, k, s))] -= 1.0;
            c[k] = -game.cost.eval(s as f64 * h);
        } else if phi.region[mk] {
            let s = phi.impulse[mk];
            a[(k, k)] = 1.0;
            b[(k, grid.mirror(target(grid, mk, s)))] = 1.0;
            c[k] = game.gain.eval(s as f64 * h);
        } else {
            a[(k, k)] = -game.ops.l.diag[k];
            if k > 0 {
                a[(k, k - 1)] = -game.ops.l.lower[k];
            }
            if k + 1 < n {
                a[(k, k + 1)] = -game.ops.l.upper[k];
            }
            c[k] = game.ops.f_adj[k];
        }
    }
    Ok((a, b, c))
}

/// `|A v' - B v - C|_inf` for one iteration step.
pub fn identity_residual(
    game: &SymmetricGame,
    phi: &Strategy,
    phi_bar: &Strategy,
    v: &[f64],
    v_next: &[f64],
) -> Result<f64> {
    let (a, b, c) = fixed_point_matrices(game, phi, phi_bar)?;
    let av = a.mul_vec(v_next);
    let bv = b.mul_vec(v);
    Ok((0..v.len())
        .map(|k| (av[k] - bv[k] - c[k]).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{Dynamics, Func, PlayerSpec};
    use crate::grid::ImpulseMode;
    use crate::matrixkit::{classify_dominance, index_of_contraction, Index};

    fn linear_game(n_half: usize) -> SymmetricGame {
        let spec = GameSpec {
            dynamics: Dynamics {
                drift: Func::zero(),
                vol: Func::constant(0.15),
            },
            player: PlayerSpec {
                discount: 0.02,
                payoff: Func::linear(3.0, 1.0),
                cost: CostSpec::linear(100.0, 15.0),
                gain: GainSpec::linear(0.0, 15.0),
            },
        };
        let grid = Grid::symmetric(4.0, n_half).unwrap();
        let sets = ImpulseSets::new(&grid, ImpulseMode::SymmetryConstrained);
        SymmetricGame::new(&spec, grid, sets, 15.0, 15.0).unwrap()
    }

    #[test]
    fn never_intervene_matrices() {
        let g = linear_game(4);
        let never = Strategy::never(g.len());
        let (a, b, c) = fixed_point_matrices(&g, &never, &never).unwrap();
        assert_eq!(a, g.ops.l.to_dense().scale(-1.0));
        assert_eq!(b, SquareMatrix::zeros(g.len()));
        assert_eq!(c, g.ops.f_adj);
    }

    #[test]
    fn rejects_intervention_on_nonnegative_side() {
        let g = linear_game(4);
        let mut s = Strategy::never(g.len());
        s.region[6] = true;
        assert!(fixed_point_matrices(&g, &s, &Strategy::never(g.len())).is_err());
    }

    #[test]
    fn zero_data_has_zero_residual() {
        let spec = GameSpec {
            dynamics: Dynamics {
                drift: Func::zero(),
                vol: Func::constant(1.0),
            },
            player: PlayerSpec {
                discount: 1.0,
                payoff: Func::zero(),
                cost: CostSpec::constant(2.0),
                gain: GainSpec::linear(0.0, 0.0),
            },
        };
        let grid = Grid::symmetric(2.0, 4).unwrap();
        let sets = ImpulseSets::new(&grid, ImpulseMode::SymmetryConstrained);
        let g = SymmetricGame::new(&spec, grid, sets, 0.0, 0.0).unwrap();
        let (r, by) = max_res_qvis(&g, &vec![0.0; 9]);
        assert_eq!(r, 0.0);
        assert!(by.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn coarse_linear_game_converges_exactly() {
        let g = linear_game(4);
        let rep = g
            .solve(&SymSolveOptions {
                check_identity: true,
                tol: 1e-300,
                ..Default::default()
            })
            .unwrap();
        assert!(rep.converged_exactly());
        assert_eq!(rep.iterations, 17);
        assert!(rep.identity_residuals.iter().all(|&r| r <= 1e-9));
        let (a, b, c) = fixed_point_matrices(&g, &rep.strategy(), &rep.strategy()).unwrap();
        let av = a.mul_vec(&rep.payoff);
        let bv = b.mul_vec(&rep.payoff);
        for k in 0..g.len() {
            assert!((av[k] - bv[k] - c[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn fixed_point_matrix_properties() {
        let g = linear_game(8);
        let n = g.len();
        let nh = g.grid.n_half();
        let mut phi = Strategy::never(n);
        let mut phi_bar = Strategy::never(n);
        for k in 0..3 {
            phi.region[k] = true;
            phi.impulse[k] = g.sets.max_step(k);
            phi_bar.region[k + 1] = true;
            phi_bar.impulse[k + 1] = 1;
        }
        let (a, b, _) = fixed_point_matrices(&g, &phi, &phi_bar).unwrap();
        assert!(a.is_l0() && classify_dominance(&a).wcdd);
        assert!(b.is_substochastic());
        let amb = a.sub(&b);
        let con = classify_dominance(&amb);
        assert!(con.wcdd);
        assert!(con.con <= Index::Finite(nh));
        // A^{-1} B column by column.
        let mut ainvb = SquareMatrix::zeros(n);
        for j in 0..n {
            let col: Vec<f64> = (0..n).map(|i| b[(i, j)]).collect();
            let x = crate::matrixkit::solve_dense(&a, &col).unwrap();
            for i in 0..n {
                ainvb[(i, j)] = if x[i].abs() < 1e-14 { 0.0 } else { x[i] };
            }
        }
        let hat = index_of_contraction(&ainvb).unwrap();
        assert!(hat <= con.con);
    }
}
