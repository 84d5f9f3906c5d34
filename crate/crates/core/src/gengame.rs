//! Relaxation iteration for general two-player impulse games.
//!
//! Each iteration lets every player respond to the opponent's current
//! approximate intervention region `{M_j v_j - v_j >= -r}`: the gain is
//! collected there, and a single-player control problem is solved on the
//! rest of the grid. The radius `r` decays geometrically.

use crate::control::{restrict_any, solve_fppi, solve_howard, ControlOptions, ControlSolution};
use crate::discretize::{apply_h, apply_m_fast, CostSpec, DiscreteOperators, Func, GainSpec, GeneralGameSpec, Tie};
use crate::error::{Error, Result};
use crate::grid::{Grid, ImpulseSets};
use crate::oracle::Player;
use crate::symgame::Engine;

/// Cap used when a linear payoff is replaced by its capped version.
pub const DEFAULT_PAYOFF_CAP: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GenSolveOptions {
    pub tol: f64,
    /// Decay factor of the relaxation radius, in `(0, 1)`.
    pub alpha: f64,
    /// Initial relaxation radius.
    pub r0: f64,
    pub max_iters: usize,
    pub engine: Engine,
    pub control: ControlOptions,
}

impl Default for GenSolveOptions {
    fn default() -> Self {
        GenSolveOptions {
            tol: 1e-8,
            alpha: 0.8,
            r0: 1.0,
            max_iters: 1000,
            engine: Engine::Fppi,
            control: ControlOptions::default(),
        }
    }
}

impl GenSolveOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument("alpha must lie in (0, 1)".into()));
        }
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(Error::InvalidArgument("r0 must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSolveReport {
    pub payoffs: [Vec<f64>; 2],
    /// Intervention regions `{M_i v_i - v_i >= -tol}` at the final iterate.
    pub regions: [Vec<bool>; 2],
    pub impulses: [Vec<isize>; 2],
    pub iterations: usize,
    /// Relaxation radius used at each iteration.
    pub r_history: Vec<f64>,
    pub residual_history: Vec<f64>,
    /// Final largest residual.
    pub residual: f64,
    pub residual_by_node: [Vec<f64>; 2],
    pub converged: bool,
    /// The residual went up at least once.
    pub residual_increased: bool,
}

/// A discretized general game.
#[derive(Debug, Clone)]
pub struct GeneralGame {
    pub grid: Grid,
    pub sets: [ImpulseSets; 2],
    pub ops: [DiscreteOperators; 2],
    pub costs: [CostSpec; 2],
    pub gains: [GainSpec; 2],
}

impl GeneralGame {
    /// `boundary[i]` holds player `i`'s Neumann slopes `(lbc, rbc)`.
    pub fn new(
        spec: &GeneralGameSpec,
        grid: Grid,
        sets: [ImpulseSets; 2],
        boundary: [(f64, f64); 2],
    ) -> Result<Self> {
        spec.validate()?;
        for s in &sets {
            if s.len() != grid.len() {
                return Err(Error::DimensionMismatch {
                    expected: grid.len(),
                    got: s.len(),
                });
            }
        }
        let ops = [0, 1].map(|i| spec.operators(i, &grid, boundary[i].0, boundary[i].1));
        Ok(GeneralGame {
            costs: [spec.players[0].cost, spec.players[1].cost],
            gains: [spec.players[0].gain, spec.players[1].gain],
            grid,
            sets,
            ops,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// `M_i v` with the smallest maximizing impulse.
    pub fn loss(&self, i: usize, v: &[f64]) -> (Vec<f64>, Vec<isize>) {
        apply_m_fast(v, &self.grid, &self.sets[i], &self.costs[i], Tie::Smallest)
    }

    /// Player `i`'s payoff after the opponent applies `opp_best`.
    pub fn gain_op(&self, i: usize, v: &[f64], opp_best: &[isize]) -> Vec<f64> {
        apply_h(v, opp_best, &self.grid, &self.gains[i])
    }

    /// Nodes where `M v - v >= -radius` with a nonzero maximizing impulse.
    fn near_region(&self, i: usize, v: &[f64], radius: f64) -> (Vec<bool>, Vec<isize>) {
        let (mv, best) = self.loss(i, v);
        let region = (0..self.len())
            .map(|k| best[k] != 0 && mv[k] - v[k] >= -radius)
            .collect();
        (region, best)
    }

    /// Player `i`'s response to the opponent's payoff `vj`.
    fn respond(
        &self,
        i: usize,
        vi: &[f64],
        vj: &[f64],
        radius: f64,
        opts: &GenSolveOptions,
    ) -> Result<ControlSolution> {
        let j = 1 - i;
        let (opp_region, opp_best) = self.near_region(j, vj, radius);
        let hv = self.gain_op(i, vi, &opp_best);
        let mut w = vi.to_vec();
        for k in 0..self.len() {
            if opp_region[k] {
                w[k] = hv[k];
            }
        }
        let in_domain: Vec<bool> = opp_region.iter().map(|&r| !r).collect();
        if !in_domain.iter().any(|&d| d) {
            return Err(Error::Degenerate(format!(
                "player {}'s approximate region covers the whole grid",
                j + 1
            )));
        }
        let rq = restrict_any(
            &self.ops[i],
            &self.grid,
            &self.sets[i],
            &self.costs[i],
            Tie::Smallest,
            &w,
            &in_domain,
        )?
        .with_fast_loss();
        match opts.engine {
            Engine::Fppi => solve_fppi(&rq, &opts.control),
            Engine::Howard => solve_howard(&rq, &opts.control),
        }
    }
}

/// Largest pointwise residual of the pair `v` to the discrete system, with
/// opponents' regions thresholded at `tol`.
pub fn residual_general(game: &GeneralGame, v: &[Vec<f64>; 2], tol: f64) -> (f64, [Vec<f64>; 2]) {
    let n = game.len();
    let losses = [game.loss(0, &v[0]), game.loss(1, &v[1])];
    let by_node = [0, 1].map(|i| {
        let j = 1 - i;
        let (mv, _) = &losses[i];
        let (mvj, best_j) = &losses[j];
        let hv = game.gain_op(i, &v[i], best_j);
        let cont = game.ops[i].continuation(&v[i]);
        (0..n)
            .map(|k| {
                let obstacle = mv[k] - v[i][k];
                let in_opp = best_j[k] != 0 && mvj[k] - v[j][k] >= -tol;
                let r = if in_opp {
                    (hv[k] - v[i][k]).abs()
                } else {
                    cont[k].max(obstacle).abs()
                };
                r.max(obstacle.max(0.0))
            })
            .collect::<Vec<_>>()
    });
    let max = by_node
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |a, &b| a.max(b));
    (max, by_node)
}

pub fn solve_general(
    game: &GeneralGame,
    opts: &GenSolveOptions,
    guess: Option<[Vec<f64>; 2]>,
) -> Result<GenSolveReport> {
    opts.validate()?;
    let n = game.len();
    let mut v = match guess {
        Some(g) => {
            for gi in &g {
                if gi.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: gi.len(),
                    });
                }
            }
            g
        }
        None => [vec![0.0; n], vec![0.0; n]],
    };
    let mut r = opts.r0;
    let mut r_history = Vec::new();
    let mut residual_history: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut by_node = [vec![0.0; n], vec![0.0; n]];
    for _ in 0..opts.max_iters {
        r_history.push(r);
        let (s0, s1) = rayon::join(
            || game.respond(0, &v[0], &v[1], r, opts),
            || game.respond(1, &v[1], &v[0], r, opts),
        );
        v = [s0?.payoff, s1?.payoff];
        r *= opts.alpha;
        let (res, nodes) = residual_general(game, &v, opts.tol);
        residual_history.push(res);
        by_node = nodes;
        if res < opts.tol {
            converged = true;
            break;
        }
    }
    let regions_best = [0, 1].map(|i| game.near_region(i, &v[i], opts.tol));
    let [(reg0, imp0), (reg1, imp1)] = regions_best;
    Ok(GenSolveReport {
        regions: [reg0, reg1],
        impulses: [imp0, imp1],
        iterations: residual_history.len(),
        residual: residual_history.last().copied().unwrap_or(f64::INFINITY),
        residual_increased: residual_history.windows(2).any(|w| w[1] > w[0]),
        residual_by_node: by_node,
        payoffs: v,
        r_history,
        residual_history,
        converged,
    })
}

/// Value function of the game in which only `player` intervenes.
pub fn single_player_guess(game: &GeneralGame, spec: &GeneralGameSpec, player: Player) -> Result<Vec<f64>> {
    let i = player.index();
    if !spec.players[i].payoff.bounded_above() {
        return Err(Error::InvalidSpec(format!(
            "player {} payoff is unbounded above, so the single-player problem has no finite value; \
             solve the capped variant first",
            i + 1
        )));
    }
    let n = game.len();
    let rq = restrict_any(
        &game.ops[i],
        &game.grid,
        &game.sets[i],
        &game.costs[i],
        Tie::Smallest,
        &vec![0.0; n],
        &vec![true; n],
    )?
    .with_fast_loss();
    Ok(solve_fppi(&rq, &ControlOptions::default())?.payoff)
}

/// Both single-player value functions.
pub fn single_player_guesses(game: &GeneralGame, spec: &GeneralGameSpec) -> Result<[Vec<f64>; 2]> {
    Ok([
        single_player_guess(game, spec, Player::One)?,
        single_player_guess(game, spec, Player::Two)?,
    ])
}

/// The game with every affine payoff `a + b x` replaced by
/// `min(b (x - s), cap)` where `s = -a / b`.
pub fn capped_spec(spec: &GeneralGameSpec, cap: f64) -> Result<GeneralGameSpec> {
    let mut out = spec.clone();
    for (i, p) in out.players.iter_mut().enumerate() {
        let capped = match &p.payoff {
            Func::Poly(c) if c.len() == 2 && c[1] != 0.0 => Func::CappedLinear {
                a: c[1],
                s: -c[0] / c[1],
                cap,
            },
            Func::CappedLinear { .. } => p.payoff.clone(),
            _ => {
                return Err(Error::InvalidSpec(format!(
                    "player {} payoff is not affine",
                    i + 1
                )))
            }
        };
        p.payoff = capped;
    }
    Ok(out)
}

/// Warm start for a game with affine payoffs: equilibrium payoffs of the
/// capped game, itself started from its single-player value functions.
pub fn capped_guess(
    spec: &GeneralGameSpec,
    grid: &Grid,
    sets: &[ImpulseSets; 2],
    boundary: [(f64, f64); 2],
    opts: &GenSolveOptions,
) -> Result<([Vec<f64>; 2], GenSolveReport)> {
    let capped = capped_spec(spec, DEFAULT_PAYOFF_CAP)?;
    let game = GeneralGame::new(&capped, grid.clone(), sets.clone(), boundary)?;
    let guess = single_player_guesses(&game, &capped)?;
    let rep = solve_general(&game, opts, Some(guess))?;
    Ok((rep.payoffs.clone(), rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{Dynamics, PlayerSpec};
    use crate::grid::ImpulseMode;

    fn player(payoff: Func, c: f64, g: f64) -> PlayerSpec {
        PlayerSpec {
            discount: 0.5,
            payoff,
            cost: CostSpec::constant(c),
            gain: GainSpec::linear(g, 0.0),
        }
    }

    fn small_game(f1: Func, f2: Func) -> (GeneralGameSpec, GeneralGame) {
        let spec = GeneralGameSpec {
            dynamics: Dynamics {
                drift: Func::zero(),
                vol: Func::constant(1.0),
            },
            players: [player(f1, 1.0, 0.5), player(f2, 1.0, 0.5)],
        };
        let grid = Grid::symmetric(1.0, 2).unwrap();
        let sets = [0, 1].map(|_| ImpulseSets::new(&grid, ImpulseMode::AllTargets));
        let game = GeneralGame::new(&spec, grid, sets, [(0.0, 0.0); 2]).unwrap();
        (spec, game)
    }

    #[test]
    fn zero_payoffs_residual_by_hand() {
        // Five nodes, h = 0.5. At v = 0: M v - v = -1 everywhere, so no
        // region, and the residual is |max(f, -1)| = |f| where f >= -1.
        let f1 = Func::Poly(vec![0.25, 1.0]);
        let f2 = Func::Poly(vec![-0.5]);
        let (_, game) = small_game(f1, f2);
        let v = [vec![0.0; 5], vec![0.0; 5]];
        let (r, by) = residual_general(&game, &v, 1e-8);
        let expect1 = [0.75_f64, 0.25, 0.25, 0.75, 1.25];
        for k in 0..5 {
            assert!((by[0][k] - expect1[k].abs()).abs() < 1e-15);
            assert!((by[1][k] - 0.5).abs() < 1e-15);
        }
        assert_eq!(r, 1.25);
    }

    #[test]
    fn relaxation_schedule() {
        let (_, game) = small_game(Func::Poly(vec![0.0, 0.0, -1.0]), Func::Poly(vec![0.0, 0.0, -1.0]));
        let opts = GenSolveOptions {
            max_iters: 6,
            tol: 1e-300,
            ..Default::default()
        };
        let rep = solve_general(&game, &opts, None).unwrap();
        for (k, r) in rep.r_history.iter().enumerate() {
            let want = opts.r0 * opts.alpha.powi(k as i32);
            assert!((r - want).abs() <= 1e-14 * want);
        }
    }

    #[test]
    fn unbounded_payoff_rejected_for_single_player_guess() {
        let (spec, game) = small_game(Func::linear(0.0, 1.0), Func::Poly(vec![0.0, 0.0, -1.0]));
        assert!(matches!(
            single_player_guess(&game, &spec, Player::One),
            Err(Error::InvalidSpec(_))
        ));
        assert!(single_player_guess(&game, &spec, Player::Two).is_ok());
    }

    #[test]
    fn prohibitive_cost_guess_is_linear_solve() {
        let mut spec = small_game(Func::Poly(vec![1.0, 0.0, -1.0]), Func::zero()).0;
        spec.players[0].cost = CostSpec::constant(1e9);
        let grid = Grid::symmetric(1.0, 2).unwrap();
        let sets = [0, 1].map(|_| ImpulseSets::new(&grid, ImpulseMode::AllTargets));
        let game = GeneralGame::new(&spec, grid, sets, [(0.0, 0.0); 2]).unwrap();
        let v = single_player_guess(&game, &spec, Player::One).unwrap();
        let ops = &game.ops[0];
        let rhs: Vec<f64> = ops.f_adj.iter().map(|x| -x).collect();
        let exact = ops.l.solve(&rhs).unwrap();
        for (a, b) in v.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn capped_spec_rewrites_affine_payoffs() {
        let (spec, _) = small_game(Func::linear(3.0, 1.0), Func::linear(3.0, -1.0));
        let c = capped_spec(&spec, 5.0).unwrap();
        assert_eq!(c.players[0].payoff.eval(-3.0), 0.0);
        assert_eq!(c.players[0].payoff.eval(10.0), 5.0);
        assert_eq!(c.players[1].payoff.eval(-10.0), 5.0);
        assert_eq!(c.players[1].payoff.eval(0.0), 3.0);
    }
}
