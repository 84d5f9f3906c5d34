//! Monte Carlo replay of threshold strategies.
//!
//! Paths follow Euler-Maruyama steps. After every step (and at time zero)
//! the state is checked against both players' regions, player 1 first, and
//! impulses are applied until the state rests outside both regions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::discretize::GeneralGameSpec;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::oracle::{LinearGameSolution, Player};

/// Impulses allowed on one path before it is declared degenerate.
pub const DEFAULT_IMPULSE_CAP: usize = 1_000_000;

/// Steps between exact recomputations of the running discount factors.
const REANCHOR: u64 = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Never,
    /// `x <= border`.
    Below(f64),
    /// `x >= border`.
    Above(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImpulseRule {
    /// Jump to a fixed point, `delta(x) = target - x`.
    Target(f64),
    /// Piecewise-linear `delta`, linearly extrapolated beyond the end nodes.
    Table { x: Vec<f64>, delta: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdStrategy {
    pub region: Region,
    pub impulse: ImpulseRule,
}

impl ThresholdStrategy {
    pub fn never() -> Self {
        ThresholdStrategy {
            region: Region::Never,
            impulse: ImpulseRule::Target(0.0),
        }
    }

    pub fn below(border: f64, target: f64) -> Self {
        ThresholdStrategy {
            region: Region::Below(border),
            impulse: ImpulseRule::Target(target),
        }
    }

    pub fn above(border: f64, target: f64) -> Self {
        ThresholdStrategy {
            region: Region::Above(border),
            impulse: ImpulseRule::Target(target),
        }
    }

    /// Equilibrium strategy of one player of the linear game.
    pub fn from_oracle(sol: &LinearGameSolution, player: Player) -> Self {
        match player {
            Player::One => Self::below(sol.border[0], sol.target[0]),
            Player::Two => Self::above(sol.border[1], sol.target[1]),
        }
    }

    /// Threshold strategy read off a discrete region and impulse. The region
    /// must be a single tail of the grid; its border sits half a step beyond
    /// the outermost node.
    pub fn from_discrete(grid: &Grid, region: &[bool], impulse: &[isize]) -> Result<Self> {
        let n = grid.len();
        if region.len() != n || impulse.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: region.len().min(impulse.len()),
            });
        }
        let ks: Vec<usize> = (0..n).filter(|&k| region[k]).collect();
        let (first, last) = match (ks.first(), ks.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Ok(Self::never()),
        };
        if last - first + 1 != ks.len() || (first != 0 && last != n - 1) || ks.len() == n {
            return Err(Error::InvalidArgument(
                "region is not a single proper tail of the grid".into(),
            ));
        }
        let h = grid.step();
        let region = if first == 0 {
            Region::Below(grid.node(last) + 0.5 * h)
        } else {
            Region::Above(grid.node(first) - 0.5 * h)
        };
        let targets: Vec<isize> = ks.iter().map(|&k| k as isize + impulse[k]).collect();
        let impulse = if targets.iter().all(|&t| t == targets[0]) && targets[0] >= 0 {
            ImpulseRule::Target(grid.node(targets[0] as usize))
        } else {
            ImpulseRule::Table {
                x: ks.iter().map(|&k| grid.node(k)).collect(),
                delta: ks.iter().map(|&k| impulse[k] as f64 * h).collect(),
            }
        };
        Ok(ThresholdStrategy { region, impulse })
    }

    #[inline]
    pub fn triggers(&self, x: f64) -> bool {
        match self.region {
            Region::Never => false,
            Region::Below(b) => x <= b,
            Region::Above(b) => x >= b,
        }
    }

    pub fn delta(&self, x: f64) -> f64 {
        match &self.impulse {
            ImpulseRule::Target(t) => t - x,
            ImpulseRule::Table { x: xs, delta } => interpolate(xs, delta, x),
        }
    }

    pub fn border(&self) -> Option<f64> {
        match self.region {
            Region::Never => None,
            Region::Below(b) | Region::Above(b) => Some(b),
        }
    }

    pub fn target(&self) -> Option<f64> {
        match self.impulse {
            ImpulseRule::Target(t) => Some(t),
            ImpulseRule::Table { .. } => None,
        }
    }

    /// The strategy seen through `x -> -x`.
    pub fn reflect(&self) -> Self {
        let region = match self.region {
            Region::Never => Region::Never,
            Region::Below(b) => Region::Above(-b),
            Region::Above(b) => Region::Below(-b),
        };
        let impulse = match &self.impulse {
            ImpulseRule::Target(t) => ImpulseRule::Target(-t),
            ImpulseRule::Table { x, delta } => ImpulseRule::Table {
                x: x.iter().rev().map(|v| -v).collect(),
                delta: delta.iter().rev().map(|v| -v).collect(),
            },
        };
        ThresholdStrategy { region, impulse }
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if xs.len() == 1 {
        return ys[0];
    }
    let i = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Scales the border and target by independent factors `1 +- magnitude U`.
pub fn perturb_strategy<R: Rng + ?Sized>(
    s: &ThresholdStrategy,
    magnitude: f64,
    rng: &mut R,
) -> Result<ThresholdStrategy> {
    if !(magnitude >= 0.0 && magnitude.is_finite()) {
        return Err(Error::InvalidArgument("magnitude must be nonnegative".into()));
    }
    let mut factor = || {
        let u: f64 = rng.random();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        1.0 + sign * magnitude * u
    };
    let region = match s.region {
        Region::Never => Region::Never,
        Region::Below(b) => Region::Below(b * factor()),
        Region::Above(b) => Region::Above(b * factor()),
    };
    let impulse = match s.impulse {
        ImpulseRule::Target(t) => ImpulseRule::Target(t * factor()),
        ImpulseRule::Table { .. } => {
            return Err(Error::InvalidArgument(
                "only strategies with a fixed target can be perturbed".into(),
            ))
        }
    };
    Ok(ThresholdStrategy { region, impulse })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub x0: f64,
    /// Negate every normal draw.
    pub antithetic: bool,
    /// Keep every `record_stride`-th state; 0 keeps none.
    pub record_stride: usize,
    pub impulse_cap: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 1000.0,
            dt: 1e-3,
            n_paths: 200,
            seed: 0,
            x0: 0.0,
            antithetic: false,
            record_stride: 0,
            impulse_cap: DEFAULT_IMPULSE_CAP,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt <= self.horizon) {
            return Err(Error::InvalidArgument("dt must lie in (0, horizon]".into()));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
        }
        if !self.x0.is_finite() {
            return Err(Error::InvalidArgument("x0 must be finite".into()));
        }
        Ok(())
    }

    fn n_steps(&self) -> u64 {
        ((self.horizon / self.dt).round() as u64).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub player: Player,
    pub pre: f64,
    pub impulse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub events: Vec<Event>,
    /// Realized discounted payoff of each player.
    pub payoff: [f64; 2],
    /// The impulse cap was hit and the path was abandoned.
    pub degenerate: bool,
}

/// Random stream of path `index`; independent of how many paths are run.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

struct Discount {
    rho: f64,
    step: f64,
    value: f64,
}

impl Discount {
    fn new(rho: f64, dt: f64) -> Self {
        Discount {
            rho,
            step: (-rho * dt).exp(),
            value: 1.0,
        }
    }

    #[inline]
    fn advance(&mut self, k: u64, t: f64) {
        self.value = if k % REANCHOR == 0 {
            (-self.rho * t).exp()
        } else {
            self.value * self.step
        };
    }
}

pub fn simulate_path(
    spec: &GeneralGameSpec,
    strategies: &[ThresholdStrategy; 2],
    cfg: &SimConfig,
    index: u64,
) -> Result<PathRecord> {
    cfg.validate()?;
    spec.validate()?;
    Ok(run_path(spec, strategies, cfg, index))
}

fn run_path(
    spec: &GeneralGameSpec,
    strategies: &[ThresholdStrategy; 2],
    cfg: &SimConfig,
    index: u64,
) -> PathRecord {
    let mut rng = path_rng(cfg.seed, index);
    let [p1, p2] = &spec.players;
    let (drift, vol) = (&spec.dynamics.drift, &spec.dynamics.vol);
    let dt = cfg.dt;
    let sqdt = dt.sqrt();
    let sign = if cfg.antithetic { -1.0 } else { 1.0 };
    let mut disc = [Discount::new(p1.discount, dt), Discount::new(p2.discount, dt)];
    let mut rec = PathRecord {
        times: Vec::new(),
        states: Vec::new(),
        events: Vec::new(),
        payoff: [0.0; 2],
        degenerate: false,
    };
    let mut x = cfg.x0;
    let mut t = 0.0;
    let mut impulses = 0usize;
    let n_steps = cfg.n_steps();
    let mut k = 0u64;
    loop {
        // Interventions at the current instant.
        loop {
            let who = if strategies[0].triggers(x) {
                0
            } else if strategies[1].triggers(x) {
                1
            } else {
                break;
            };
            if impulses >= cfg.impulse_cap {
                rec.degenerate = true;
                return rec;
            }
            impulses += 1;
            let d = strategies[who].delta(x);
            let other = 1 - who;
            rec.payoff[who] -= disc[who].value * spec.players[who].cost.eval(d);
            rec.payoff[other] += disc[other].value * spec.players[other].gain.eval(d);
            rec.events.push(Event {
                t,
                player: if who == 0 { Player::One } else { Player::Two },
                pre: x,
                impulse: d,
            });
            x += d;
        }
        if cfg.record_stride > 0 && k % cfg.record_stride as u64 == 0 {
            rec.times.push(t);
            rec.states.push(x);
        }
        if k == n_steps {
            break;
        }
        rec.payoff[0] += disc[0].value * p1.payoff.eval(x) * dt;
        rec.payoff[1] += disc[1].value * p2.payoff.eval(x) * dt;
        let z: f64 = rng.sample(StandardNormal);
        x += drift.eval(x) * dt + vol.eval(x) * sqdt * sign * z;
        k += 1;
        t = k as f64 * dt;
        disc[0].advance(k, t);
        disc[1].advance(k, t);
    }
    rec
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayoffEstimate {
    /// Sample means; NaN when any path is degenerate.
    pub mean: [f64; 2],
    /// Standard errors; NaN when any path is degenerate or only one path ran.
    pub std_error: [f64; 2],
    pub n_paths: usize,
    pub degenerate_paths: usize,
}

impl PayoffEstimate {
    pub fn is_degenerate(&self) -> bool {
        self.degenerate_paths > 0
    }
}

/// Sum by recursive halving; the result depends only on the order of `x`.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 8 {
        x.iter().sum()
    } else {
        let (a, b) = x.split_at(x.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

pub fn estimate_payoff(
    spec: &GeneralGameSpec,
    strategies: &[ThresholdStrategy; 2],
    cfg: &SimConfig,
) -> Result<PayoffEstimate> {
    cfg.validate()?;
    spec.validate()?;
    let lean = SimConfig {
        record_stride: 0,
        ..cfg.clone()
    };
    let paths: Vec<(f64, f64, bool)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let r = run_path(spec, strategies, &lean, i);
            (r.payoff[0], r.payoff[1], r.degenerate)
        })
        .collect();
    let degenerate_paths = paths.iter().filter(|p| p.2).count();
    let n = paths.len();
    let mut mean = [f64::NAN; 2];
    let mut std_error = [f64::NAN; 2];
    if degenerate_paths == 0 {
        for i in 0..2 {
            let xs: Vec<f64> = paths.iter().map(|p| if i == 0 { p.0 } else { p.1 }).collect();
            let m = pairwise_sum(&xs) / n as f64;
            mean[i] = m;
            if n > 1 {
                // Shifted by the first sample so identical samples give exactly zero.
                let d: Vec<f64> = xs.iter().map(|x| x - xs[0]).collect();
                let sq: Vec<f64> = d.iter().map(|v| v * v).collect();
                let s = pairwise_sum(&d);
                let var = ((pairwise_sum(&sq) - s * s / n as f64) / (n - 1) as f64).max(0.0);
                std_error[i] = (var / n as f64).sqrt();
            }
        }
    }
    Ok(PayoffEstimate {
        mean,
        std_error,
        n_paths: n,
        degenerate_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{CostSpec, Dynamics, Func, GainSpec, PlayerSpec};

    fn game(vol: f64, f: Func, rho: f64) -> GeneralGameSpec {
        let p = PlayerSpec {
            discount: rho,
            payoff: f,
            cost: CostSpec::linear(2.0, 0.5),
            gain: GainSpec::linear(1.0, 0.25),
        };
        GeneralGameSpec {
            dynamics: Dynamics {
                drift: Func::zero(),
                vol: Func::constant(vol),
            },
            players: [p.clone(), p],
        }
    }

    fn never() -> [ThresholdStrategy; 2] {
        [ThresholdStrategy::never(), ThresholdStrategy::never()]
    }

    #[test]
    fn deterministic_running_payoff() {
        let rho = 0.1;
        let spec = game(0.0, Func::constant(1.0), rho);
        let cfg = SimConfig {
            horizon: 10.0,
            dt: 0.01,
            ..Default::default()
        };
        let r = simulate_path(&spec, &never(), &cfg, 0).unwrap();
        // Left-endpoint sum of a geometric sequence.
        let q = (-rho * cfg.dt).exp();
        let riemann = cfg.dt * (1.0 - q.powi(1000)) / (1.0 - q);
        assert!((r.payoff[0] - riemann).abs() < 1e-12);
        let integral = (1.0 - (-rho * cfg.horizon).exp()) / rho;
        assert!((r.payoff[0] - integral).abs() < rho * cfg.dt * integral);
        let est = estimate_payoff(&spec, &never(), &cfg).unwrap();
        assert_eq!(est.std_error, [0.0, 0.0]);
    }

    #[test]
    fn immediate_single_impulse() {
        let spec = game(0.0, Func::zero(), 0.05);
        let s = [ThresholdStrategy::below(-1.0, 0.5), ThresholdStrategy::above(2.0, 1.0)];
        let cfg = SimConfig {
            horizon: 1.0,
            dt: 0.1,
            x0: -1.5,
            record_stride: 1,
            ..Default::default()
        };
        let r = simulate_path(&spec, &s, &cfg, 0).unwrap();
        assert_eq!(r.events.len(), 1);
        let e = r.events[0];
        assert_eq!((e.t, e.player, e.pre, e.impulse), (0.0, Player::One, -1.5, 2.0));
        assert!(r.states.iter().all(|&x| x == 0.5));
        assert_eq!(r.payoff, [-3.0, 1.5]);
    }

    #[test]
    fn alternating_strategies_hit_the_cap() {
        let spec = game(0.0, Func::zero(), 0.05);
        let s = [ThresholdStrategy::below(1.0, 2.0), ThresholdStrategy::above(1.5, 0.5)];
        let cfg = SimConfig {
            horizon: 1.0,
            dt: 0.1,
            n_paths: 3,
            impulse_cap: 1000,
            ..Default::default()
        };
        let r = simulate_path(&spec, &s, &cfg, 0).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.events.len(), 1000);
        let est = estimate_payoff(&spec, &s, &cfg).unwrap();
        assert!(est.is_degenerate() && est.mean[0].is_nan());
    }

    #[test]
    fn discrete_extraction() {
        let grid = Grid::symmetric(1.0, 4).unwrap();
        let mut region = vec![false; 9];
        region[0] = true;
        region[1] = true;
        let impulse = vec![5, 4, 0, 0, 0, 0, 0, 0, 0];
        let s = ThresholdStrategy::from_discrete(&grid, &region, &impulse).unwrap();
        assert_eq!(s, ThresholdStrategy::below(-0.625, 0.25));
        let impulse = vec![5, 3, 0, 0, 0, 0, 0, 0, 0];
        let s = ThresholdStrategy::from_discrete(&grid, &region, &impulse).unwrap();
        assert!((s.delta(-1.0) - 1.25).abs() < 1e-15);
        assert!((s.delta(-0.625) - 0.5).abs() < 1e-15);
        region[4] = true;
        assert!(ThresholdStrategy::from_discrete(&grid, &region, &impulse).is_err());
    }

    #[test]
    fn zero_perturbation_is_identity() {
        let s = ThresholdStrategy::above(1.068, -1.848);
        let mut rng = path_rng(7, 0);
        assert_eq!(perturb_strategy(&s, 0.0, &mut rng).unwrap(), s);
        let p = perturb_strategy(&s, 0.25, &mut rng).unwrap();
        let (b, t) = (p.border().unwrap(), p.target().unwrap());
        assert!((b / 1.068 - 1.0).abs() <= 0.25 && (t / -1.848 - 1.0).abs() <= 0.25);
    }

    #[test]
    fn streams_do_not_depend_on_path_count() {
        let spec = game(1.0, Func::linear(0.0, 1.0), 0.1);
        let s = [ThresholdStrategy::below(-1.0, 0.0), ThresholdStrategy::above(1.0, 0.0)];
        let cfg = SimConfig {
            horizon: 5.0,
            dt: 0.01,
            n_paths: 4,
            ..Default::default()
        };
        let a = simulate_path(&spec, &s, &cfg, 3).unwrap();
        let b = simulate_path(&spec, &s, &SimConfig { n_paths: 50, ..cfg.clone() }, 3).unwrap();
        assert_eq!(a, b);
        let e1 = estimate_payoff(&spec, &s, &cfg).unwrap();
        let e2 = estimate_payoff(&spec, &s, &cfg).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn pairwise_sum_matches_exact_integers() {
        let x: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&x), 500500.0);
    }

    #[test]
    fn invalid_config() {
        let bad = [
            SimConfig { horizon: 0.0, ..Default::default() },
            SimConfig { dt: 2000.0, ..Default::default() },
            SimConfig { n_paths: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }
}
