//! The work behind each subcommand, split into a computation that returns
//! data and a table builder, so tests can check results without files.

use anyhow::{ensure, Context, Result};
use impulse_core::control::{restrict_any, solve_fppi, solve_howard, ControlSolution};
use impulse_core::discretize::Tie;
use impulse_core::gengame::{capped_guess, single_player_guesses, solve_general, GenSolveReport, GeneralGame};
use impulse_core::grid::{Grid, ImpulseSets};
use impulse_core::oracle::{
    relative_norm_error, relative_sup_error, sample_on_grid, solve_linear_game, LinearGameSolution, Player,
};
use impulse_core::simulate::{
    estimate_payoff, path_rng, perturb_strategy, simulate_path, PayoffEstimate, Region, SimConfig,
    ThresholdStrategy, DEFAULT_IMPULSE_CAP,
};
use impulse_core::symgame::{Engine, Stop, SymSolveReport, SymmetricGame};
use rayon::prelude::*;

use crate::output::{flag, num, Table};
use crate::spec::{Game, Guess, Spec};

/// Random stream reserved for strategy perturbations.
const PERTURB_STREAM: u64 = u64::MAX;

/// Whether a command's iteration reached its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    NotConverged,
}

impl Status {
    pub fn from_converged(ok: bool) -> Self {
        if ok {
            Status::Converged
        } else {
            Status::NotConverged
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Status::Converged => 0,
            Status::NotConverged => 2,
        }
    }
}

/// Parses a step size written as a decimal or as a fraction `p/q`.
pub fn parse_step(s: &str) -> Result<f64> {
    let s = s.trim();
    let h = match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().with_context(|| format!("bad step {s:?}"))?;
            let q: f64 = q.trim().parse().with_context(|| format!("bad step {s:?}"))?;
            p / q
        }
        None => s.parse().with_context(|| format!("bad step {s:?}"))?,
    };
    ensure!(h > 0.0 && h.is_finite(), "step {s:?} must be positive");
    Ok(h)
}

/// Half-width in nodes of the grid on `[-x_max, x_max]` with step `h`.
pub fn n_half_for(x_max: f64, h: f64) -> Result<usize> {
    let n = x_max / h;
    let r = n.round();
    ensure!(
        r >= 1.0 && (n - r).abs() <= 1e-9 * r,
        "step {h} does not divide x_max = {x_max}"
    );
    Ok(r as usize)
}

fn oracle_for(spec: &Spec) -> Option<LinearGameSolution> {
    spec.linear_game().ok().and_then(|p| solve_linear_game(&p).ok())
}

fn tail_bounds(region: &[bool]) -> Option<(usize, usize)> {
    let first = region.iter().position(|&r| r)?;
    let last = region.iter().rposition(|&r| r)?;
    Some((first, last))
}

fn stop_name(s: Stop) -> &'static str {
    match s {
        Stop::Tolerance => "tolerance",
        Stop::Exact => "exact",
        Stop::Cycle => "cycle",
        Stop::MaxIters => "max_iters",
    }
}

// ---------------------------------------------------------------- symmetric

pub struct SymRun {
    pub game: SymmetricGame,
    pub report: SymSolveReport,
}

impl SymRun {
    /// Innermost node of the intervention region and where it jumps to.
    pub fn edge(&self) -> Option<(f64, f64)> {
        let grid = &self.game.grid;
        let (first, last) = tail_bounds(&self.report.region)?;
        let k = if first == 0 { last } else { first };
        let t = (k as isize + self.report.impulse[k]) as usize;
        Some((grid.node(k), grid.node(t)))
    }

    /// Largest residual, its node, and the largest one away from the edge
    /// node of the region and its mirror.
    pub fn residual_summary(&self) -> (f64, f64, f64) {
        let grid = &self.game.grid;
        let r = &self.report.residual_by_node;
        let worst = (0..r.len()).fold(0, |b, k| if r[k] > r[b] { k } else { b });
        let skip = tail_bounds(&self.report.region).map(|(first, last)| {
            let k = if first == 0 { last } else { first };
            (k, grid.mirror(k))
        });
        let off = (0..r.len())
            .filter(|&k| skip.is_none_or(|(a, b)| k != a && k != b))
            .map(|k| r[k])
            .fold(0.0, f64::max);
        (self.report.max_res_qvis, grid.node(worst), off)
    }

    pub fn table(&self) -> Table {
        let grid = &self.game.grid;
        let rep = &self.report;
        let mut t = Table::new("solve-sym", &["x", "v", "in_region", "delta", "res_qvis"]);
        for k in 0..grid.len() {
            let d = if rep.region[k] { rep.impulse[k] as f64 * grid.step() } else { 0.0 };
            t.push(vec![
                num(grid.node(k)),
                num(rep.payoff[k]),
                flag(rep.region[k]),
                num(d),
                num(rep.residual_by_node[k]),
            ]);
        }
        t
    }

    pub fn summary(&self) -> String {
        let rep = &self.report;
        let diff = rep.iterations.checked_sub(1).and_then(|i| rep.diff_history.get(i));
        let (max, at, off) = self.residual_summary();
        let mut s = format!(
            "iterations={} performed={} stop={} diff={} max_res_qvis={max:e} at_x={at} max_res_qvis_off_border={off:e} exact={}",
            rep.iterations,
            rep.performed,
            stop_name(rep.stop),
            diff.map_or("none".into(), |d| format!("{d:e}")),
            rep.converged_exactly(),
        );
        if let Some((edge, target)) = self.edge() {
            s += &format!(" region_edge={edge} target={target}");
        }
        if let Some(m) = rep.identity_residuals.iter().copied().reduce(f64::max) {
            s += &format!(" identity_max={m:e}");
        }
        s
    }

    /// Both players' strategies: player 2 mirrors player 1.
    pub fn strategies(&self) -> Result<[ThresholdStrategy; 2]> {
        let s = ThresholdStrategy::from_discrete(&self.game.grid, &self.report.region, &self.report.impulse)?;
        let r = s.reflect();
        Ok([s, r])
    }
}

pub fn sym_game(spec: &Spec, n_half: Option<usize>) -> Result<SymmetricGame> {
    let grid = spec.grid(n_half)?;
    let sets = ImpulseSets::new(&grid, spec.impulse_mode());
    let (lbc, rbc) = spec.symmetric_boundary()?;
    Ok(SymmetricGame::new(spec.symmetric()?, grid, sets, lbc, rbc)?)
}

pub fn run_sym(spec: &Spec, n_half: Option<usize>, check_identity: bool) -> Result<SymRun> {
    let game = sym_game(spec, n_half)?;
    let mut opts = spec.sym_options();
    opts.check_identity = check_identity;
    let report = game.solve(&opts)?;
    Ok(SymRun { game, report })
}

// ------------------------------------------------------------------ refine

#[derive(Debug, Clone, PartialEq)]
pub struct SymRefineRow {
    pub h: f64,
    pub n_half: usize,
    pub iterations: usize,
    pub performed: usize,
    pub stop: Stop,
    pub max_res_qvis: f64,
    /// `max |v - V| / max |V|` against the closed form, when one applies.
    pub sup_error: Option<f64>,
    /// `max |(v - V) / V|` over the nodes.
    pub pointwise_error: Option<f64>,
    pub region_edge: Option<f64>,
    pub target: Option<f64>,
}

pub fn refine_sym(spec: &Spec, steps: &[f64]) -> Result<Vec<SymRefineRow>> {
    ensure!(!steps.is_empty(), "at least one step size is required");
    spec.symmetric()?;
    let oracle = oracle_for(spec);
    let sizes = steps
        .iter()
        .map(|&h| n_half_for(spec.x_max(), h))
        .collect::<Result<Vec<_>>>()?;
    steps
        .par_iter()
        .zip(sizes)
        .map(|(&h, n_half)| {
            let run = run_sym(spec, Some(n_half), false)?;
            let exact = oracle.as_ref().map(|o| sample_on_grid(o, &run.game.grid, Player::One));
            let edge = run.edge();
            Ok(SymRefineRow {
                h,
                n_half,
                iterations: run.report.iterations,
                performed: run.report.performed,
                stop: run.report.stop,
                max_res_qvis: run.report.max_res_qvis,
                sup_error: exact.as_ref().map(|e| relative_norm_error(&run.report.payoff, e)),
                pointwise_error: exact.as_ref().map(|e| relative_sup_error(&run.report.payoff, e)),
                region_edge: edge.map(|e| e.0),
                target: edge.map(|e| e.1),
            })
        })
        .collect()
}

pub fn sym_refine_table(rows: &[SymRefineRow]) -> Table {
    let opt = |x: Option<f64>| x.map_or(String::new(), num);
    let mut t = Table::new(
        "refine-sym",
        &[
            "h",
            "n_half",
            "sup_error_vs_oracle",
            "pointwise_error_vs_oracle",
            "iterations",
            "performed",
            "stop",
            "max_res_qvis",
            "region_edge",
            "target",
        ],
    );
    for r in rows {
        t.push(vec![
            num(r.h),
            r.n_half.to_string(),
            opt(r.sup_error),
            opt(r.pointwise_error),
            r.iterations.to_string(),
            r.performed.to_string(),
            stop_name(r.stop).into(),
            num(r.max_res_qvis),
            opt(r.region_edge),
            opt(r.target),
        ]);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

impl From<&GenSolveReport> for GenOutcome {
    fn from(r: &GenSolveReport) -> Self {
        GenOutcome {
            iterations: r.iterations,
            residual: r.residual,
            converged: r.converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenRefineRow {
    pub m: usize,
    pub zero: GenOutcome,
    pub warm: GenOutcome,
    /// Which warm start was used.
    pub guess: Guess,
}

pub fn refine_gen(spec: &Spec, ms: &[usize]) -> Result<Vec<GenRefineRow>> {
    ensure!(!ms.is_empty(), "at least one grid size is required");
    for &m in ms {
        ensure!(m >= 2 && m % 2 == 0, "grid size M = {m} must be even and positive");
    }
    let warm = match spec.file.solver.guess {
        Guess::Zero => Guess::Single,
        g => g,
    };
    ms.par_iter()
        .map(|&m| {
            let zero = run_gen(spec, Some(m), Guess::Zero)?;
            let warm_run = run_gen(spec, Some(m), warm)?;
            Ok(GenRefineRow {
                m,
                zero: (&zero.report).into(),
                warm: (&warm_run.report).into(),
                guess: warm,
            })
        })
        .collect()
}

pub fn gen_refine_table(rows: &[GenRefineRow]) -> Table {
    let mut t = Table::new(
        "refine-gen",
        &[
            "m",
            "iterations_zero",
            "residual_zero",
            "converged_zero",
            "guess",
            "iterations_warm",
            "residual_warm",
            "converged_warm",
        ],
    );
    for r in rows {
        t.push(vec![
            r.m.to_string(),
            r.zero.iterations.to_string(),
            num(r.zero.residual),
            flag(r.zero.converged),
            guess_name(r.guess).into(),
            r.warm.iterations.to_string(),
            num(r.warm.residual),
            flag(r.warm.converged),
        ]);
    }
    t
}

fn guess_name(g: Guess) -> &'static str {
    match g {
        Guess::Zero => "zero",
        Guess::Single => "single",
        Guess::Capped => "capped",
    }
}

// ------------------------------------------------------------------ oracle

pub fn run_oracle(spec: &Spec) -> Result<LinearGameSolution> {
    let p = spec.linear_game()?;
    Ok(solve_linear_game(&p)?)
}

pub fn oracle_summary(sol: &LinearGameSolution) -> String {
    format!(
        "x_bar1 = {:.4}\nx_star1 = {:.4}\nx_bar2 = {:.4}\nx_star2 = {:.4}\nxi = {}\nborder1={} target1={} border2={} target2={}",
        sol.border[0], sol.target[0], sol.border[1], sol.target[1], sol.xi, sol.border[0], sol.target[0],
        sol.border[1], sol.target[1],
    )
}

pub fn oracle_table(sol: &LinearGameSolution, grid: &Grid) -> Table {
    let mut t = Table::new("oracle", &["x", "v1", "v2"]);
    let v1 = sample_on_grid(sol, grid, Player::One);
    let v2 = sample_on_grid(sol, grid, Player::Two);
    for k in 0..grid.len() {
        t.push(vec![num(grid.node(k)), num(v1[k]), num(v2[k])]);
    }
    t
}

// ----------------------------------------------------------------- general

pub struct GenRun {
    pub game: GeneralGame,
    pub report: GenSolveReport,
    /// Report of the capped game behind a capped warm start.
    pub warm_report: Option<GenSolveReport>,
}

pub fn general_game(spec: &Spec, m: Option<usize>) -> Result<GeneralGame> {
    let n_half = match m {
        Some(m) => {
            ensure!(m >= 2 && m % 2 == 0, "grid size M = {m} must be even and positive");
            Some(m / 2)
        }
        None => None,
    };
    let grid = spec.grid(n_half)?;
    let mode = spec.impulse_mode();
    let sets = [0, 1].map(|_| ImpulseSets::new(&grid, mode));
    Ok(GeneralGame::new(&spec.general(), grid, sets, spec.general_boundary())?)
}

pub fn run_gen(spec: &Spec, m: Option<usize>, guess: Guess) -> Result<GenRun> {
    let game = general_game(spec, m)?;
    let opts = spec.gen_options();
    let gspec = spec.general();
    let (start, warm_report) = match guess {
        Guess::Zero => (None, None),
        Guess::Single => (Some(single_player_guesses(&game, &gspec)?), None),
        Guess::Capped => {
            let (g, rep) = capped_guess(&gspec, &game.grid, &game.sets, spec.general_boundary(), &opts)?;
            (Some(g), Some(rep))
        }
    };
    let report = solve_general(&game, &opts, start)?;
    Ok(GenRun {
        game,
        report,
        warm_report,
    })
}

impl GenRun {
    /// Per player: the region's nodes `[first, last]` and the target of its
    /// edge node facing the continuation region.
    pub fn regions(&self) -> [Option<(f64, f64, f64)>; 2] {
        let grid = &self.game.grid;
        [0, 1].map(|i| {
            let (a, b) = tail_bounds(&self.report.regions[i])?;
            let k = if a == 0 { b } else { a };
            let t = (k as isize + self.report.impulses[i][k]) as usize;
            Some((grid.node(a), grid.node(b), grid.node(t)))
        })
    }

    pub fn table(&self) -> Table {
        let grid = &self.game.grid;
        let rep = &self.report;
        let mut t = Table::new(
            "solve-gen",
            &["x", "v1", "v2", "in_region1", "in_region2", "delta1", "delta2", "res1", "res2"],
        );
        let delta = |i: usize, k: usize| {
            if rep.regions[i][k] {
                rep.impulses[i][k] as f64 * grid.step()
            } else {
                0.0
            }
        };
        for k in 0..grid.len() {
            t.push(vec![
                num(grid.node(k)),
                num(rep.payoffs[0][k]),
                num(rep.payoffs[1][k]),
                flag(rep.regions[0][k]),
                flag(rep.regions[1][k]),
                num(delta(0, k)),
                num(delta(1, k)),
                num(rep.residual_by_node[0][k]),
                num(rep.residual_by_node[1][k]),
            ]);
        }
        t
    }

    pub fn summary(&self) -> String {
        let rep = &self.report;
        let mut s = format!(
            "iterations={} residual={:e} converged={} residual_increased={}",
            rep.iterations, rep.residual, rep.converged, rep.residual_increased
        );
        if let Some(w) = &self.warm_report {
            s += &format!(
                " capped_iterations={} capped_residual={:e} capped_converged={}",
                w.iterations, w.residual, w.converged
            );
        }
        for (i, r) in self.regions().iter().enumerate() {
            match r {
                Some((a, b, t)) => s += &format!(" region{}=[{a},{b}] target{}={t}", i + 1, i + 1),
                None => s += &format!(" region{}=empty", i + 1),
            }
        }
        s
    }

    pub fn strategies(&self) -> Result<[ThresholdStrategy; 2]> {
        let g = &self.game.grid;
        let r = &self.report;
        Ok([
            ThresholdStrategy::from_discrete(g, &r.regions[0], &r.impulses[0])?,
            ThresholdStrategy::from_discrete(g, &r.regions[1], &r.impulses[1])?,
        ])
    }
}

// ----------------------------------------------------------------- control

pub struct ControlRun {
    pub grid: Grid,
    pub solution: ControlSolution,
}

/// Single-player problem of `player` (1 or 2) with no opponent.
pub fn run_control(spec: &Spec, player: u8, n_half: Option<usize>) -> Result<ControlRun> {
    ensure!(player == 1 || player == 2, "player must be 1 or 2");
    let i = usize::from(player - 1);
    let opts = spec.sym_options();
    let solve = |ops, grid: &Grid, sets, cost, tie| -> Result<ControlSolution> {
        let n = grid.len();
        let rq = restrict_any(ops, grid, sets, cost, tie, &vec![0.0; n], &vec![true; n])?;
        Ok(match opts.engine {
            Engine::Fppi => solve_fppi(&rq, &opts.control)?,
            Engine::Howard => solve_howard(&rq, &opts.control)?,
        })
    };
    match spec.game {
        Game::Symmetric(_) => {
            ensure!(i == 0, "a symmetric game is described through player 1");
            let g = sym_game(spec, n_half)?;
            let solution = solve(&g.ops, &g.grid, &g.sets, &g.cost, Tie::Largest)?;
            Ok(ControlRun { grid: g.grid, solution })
        }
        Game::General(_) => {
            let g = general_game(spec, n_half.map(|n| 2 * n))?;
            let solution = solve(&g.ops[i], &g.grid, &g.sets[i], &g.costs[i], Tie::Smallest)?;
            Ok(ControlRun { grid: g.grid, solution })
        }
    }
}

impl ControlRun {
    pub fn table(&self) -> Table {
        let g = &self.grid;
        let s = &self.solution;
        let mut t = Table::new("control", &["x", "v", "in_region", "delta"]);
        for k in 0..g.len() {
            let d = if s.region[k] { s.impulse[k] as f64 * g.step() } else { 0.0 };
            t.push(vec![num(g.node(k)), num(s.payoff[k]), flag(s.region[k]), num(d)]);
        }
        t
    }

    pub fn summary(&self) -> String {
        format!("iterations={} exact={}", self.solution.iterations, self.solution.exact)
    }
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq)]
pub struct SimArgs {
    pub config: SimConfig,
    /// Relative perturbation of one player's border and target.
    pub perturb: f64,
    pub perturb_player: u8,
    /// Seed of the perturbation; the simulation seed when absent.
    pub perturb_seed: Option<u64>,
}

impl Default for SimArgs {
    fn default() -> Self {
        SimArgs {
            config: SimConfig {
                impulse_cap: DEFAULT_IMPULSE_CAP,
                ..Default::default()
            },
            perturb: 0.0,
            perturb_player: 1,
            perturb_seed: None,
        }
    }
}

pub struct SimRun {
    pub strategies: [ThresholdStrategy; 2],
    pub estimate: PayoffEstimate,
}

/// The strategies after applying the requested perturbation.
pub fn perturbed(strategies: &[ThresholdStrategy; 2], args: &SimArgs) -> Result<[ThresholdStrategy; 2]> {
    ensure!(
        args.perturb_player == 1 || args.perturb_player == 2,
        "perturbed player must be 1 or 2"
    );
    let i = usize::from(args.perturb_player - 1);
    let mut rng = path_rng(args.perturb_seed.unwrap_or(args.config.seed), PERTURB_STREAM);
    let mut out = strategies.clone();
    out[i] = perturb_strategy(&strategies[i], args.perturb, &mut rng)?;
    Ok(out)
}

pub fn run_simulate(spec: &Spec, strategies: &[ThresholdStrategy; 2], args: &SimArgs) -> Result<SimRun> {
    let strategies = perturbed(strategies, args)?;
    let estimate = estimate_payoff(&spec.general(), &strategies, &args.config)?;
    Ok(SimRun { strategies, estimate })
}

impl SimRun {
    pub fn table(&self) -> Table {
        let mut t = Table::new(
            "simulate",
            &["player", "region", "border", "target", "mean", "std_error", "n_paths", "degenerate_paths"],
        );
        for i in 0..2 {
            let s = &self.strategies[i];
            let region = match s.region {
                Region::Never => "never",
                Region::Below(_) => "below",
                Region::Above(_) => "above",
            };
            t.push(vec![
                (i + 1).to_string(),
                region.into(),
                s.border().map_or(String::new(), num),
                s.target().map_or(String::new(), num),
                num(self.estimate.mean[i]),
                num(self.estimate.std_error[i]),
                self.estimate.n_paths.to_string(),
                self.estimate.degenerate_paths.to_string(),
            ]);
        }
        t
    }

    pub fn summary(&self) -> String {
        let e = &self.estimate;
        format!(
            "mean1={} se1={} mean2={} se2={} paths={} degenerate={}",
            e.mean[0], e.std_error[0], e.mean[1], e.std_error[1], e.n_paths, e.degenerate_paths
        )
    }
}

/// States of path 0, every `stride` steps.
pub fn path_table(spec: &Spec, strategies: &[ThresholdStrategy; 2], cfg: &SimConfig, stride: usize) -> Result<Table> {
    ensure!(stride > 0, "record stride must be positive");
    let cfg = SimConfig {
        record_stride: stride,
        ..cfg.clone()
    };
    let rec = simulate_path(&spec.general(), strategies, &cfg, 0)?;
    let mut t = Table::new("path", &["t", "x"]);
    for (time, x) in rec.times.iter().zip(&rec.states) {
        t.push(vec![num(*time), num(*x)]);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_parsing() {
        assert_eq!(parse_step("1/64").unwrap(), 0.015625);
        assert_eq!(parse_step(" 0.25 ").unwrap(), 0.25);
        assert!(parse_step("0").is_err());
        assert!(parse_step("1/0").is_err());
        assert!(parse_step("x").is_err());
        assert_eq!(n_half_for(4.0, 1.0 / 64.0).unwrap(), 256);
        assert!(n_half_for(4.0, 0.3).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Status::Converged.exit_code(), 0);
        assert_eq!(Status::NotConverged.exit_code(), 2);
    }
}
