//! Game description files.
//!
//! A spec is a TOML document with a fixed set of sections. Unknown sections
//! and keys are errors, so a typo never silently falls back to a default.
//!
//! ```toml
//! [dynamics]
//! sigma_params = [0.15]
//!
//! [symmetric]
//! rho = 0.02
//! payoff_params = [3.0, 1.0]
//! c0 = 100.0
//! c1 = 15.0
//! g1 = 15.0
//!
//! [grid]
//! x_max = 4.0
//! n_half = 256
//! ```

use std::fmt;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use impulse_core::discretize::{CostSpec, Dynamics, Func, GainSpec, GameSpec, GeneralGameSpec, PlayerSpec};
use impulse_core::gengame::GenSolveOptions;
use impulse_core::grid::{Grid, ImpulseMode};
use impulse_core::oracle::LinearGameParams;
use impulse_core::symgame::{Engine, SymSolveOptions};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Coefficients in increasing degree.
    Poly,
    /// `[a, s, b]` for `a |x - s| + b`.
    AbsLinear,
    /// `[a, s]` or `[a, s, cap]` for `min(a (x - s), cap)`.
    CappedLinear,
}

impl Family {
    fn build(self, params: &[f64], what: &str) -> Result<Func> {
        match (self, params) {
            (Family::Poly, p) if (1..=5).contains(&p.len()) => Ok(Func::Poly(p.to_vec())),
            (Family::AbsLinear, &[a, s, b]) => Ok(Func::AbsLinear { a, s, b }),
            (Family::CappedLinear, &[a, s]) => Ok(Func::capped(a, s)),
            (Family::CappedLinear, &[a, s, cap]) => Ok(Func::CappedLinear { a, s, cap }),
            (f, p) => bail!("{what}: {} parameters do not fit family {f:?}", p.len()),
        }
    }
}

fn poly() -> Family {
    Family::Poly
}

fn zero_params() -> Vec<f64> {
    vec![0.0]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    #[serde(default = "poly")]
    pub mu_family: Family,
    #[serde(default = "zero_params")]
    pub mu_params: Vec<f64>,
    #[serde(default = "poly")]
    pub sigma_family: Family,
    pub sigma_params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerSection {
    pub rho: f64,
    #[serde(default = "poly")]
    pub payoff_family: Family,
    pub payoff_params: Vec<f64>,
    pub c0: f64,
    #[serde(default)]
    pub c1: f64,
    #[serde(default)]
    pub c2: f64,
    #[serde(default)]
    pub cr: f64,
    #[serde(default)]
    pub g0: f64,
    #[serde(default)]
    pub g1: f64,
}

impl PlayerSection {
    fn build(&self, who: &str) -> Result<PlayerSpec> {
        Ok(PlayerSpec {
            discount: self.rho,
            payoff: self.payoff_family.build(&self.payoff_params, &format!("{who} payoff"))?,
            cost: CostSpec {
                c0: self.c0,
                c1: self.c1,
                c2: self.c2,
                cr: self.cr,
            },
            gain: GainSpec::linear(self.g0, self.g1),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Unconstrained,
    SymmetryConstrained,
    AllTargets,
}

impl From<ModeName> for ImpulseMode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::Unconstrained => ImpulseMode::Unconstrained,
            ModeName::SymmetryConstrained => ImpulseMode::SymmetryConstrained,
            ModeName::AllTargets => ImpulseMode::AllTargets,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub x_max: f64,
    pub n_half: usize,
    /// Defaults to symmetry-constrained for symmetric games and to all
    /// targets for general ones.
    pub impulse_mode: Option<ModeName>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineName {
    #[default]
    Fppi,
    Howard,
}

/// Starting point of the general-game iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Guess {
    #[default]
    Zero,
    /// Single-player value functions.
    Single,
    /// Equilibrium of the game with capped affine payoffs.
    Capped,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default)]
    pub engine: EngineName,
    pub tol: Option<f64>,
    pub scale: Option<f64>,
    /// Weight of the obstacle term in the inner residual.
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub r0: Option<f64>,
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub guess: Guess,
}

/// A Neumann slope shared by both players, or one per player.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Slope {
    Shared(f64),
    PerPlayer([f64; 2]),
}

impl Slope {
    fn get(self, player: usize) -> f64 {
        match self {
            Slope::Shared(s) => s,
            Slope::PerPlayer(s) => s[player],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    pub lbc: Slope,
    pub rbc: Slope,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub dynamics: DynamicsSection,
    pub symmetric: Option<PlayerSection>,
    pub player1: Option<PlayerSection>,
    pub player2: Option<PlayerSection>,
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub boundary: Option<BoundarySection>,
}

/// The game described by a spec file.
#[derive(Debug, Clone, PartialEq)]
pub enum Game {
    Symmetric(GameSpec),
    General(GeneralGameSpec),
}

impl fmt::Display for Game {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Game::Symmetric(_) => "symmetric",
            Game::General(_) => "general",
        })
    }
}

/// A parsed and checked spec file.
#[derive(Debug, Clone, PartialEq)]
pub struct Spec {
    pub file: SpecFile,
    pub game: Game,
}

impl Spec {
    pub fn parse(text: &str) -> Result<Self> {
        let file: SpecFile = toml::from_str(text)?;
        let dynamics = Dynamics {
            drift: file.dynamics.mu_family.build(&file.dynamics.mu_params, "drift")?,
            vol: file.dynamics.sigma_family.build(&file.dynamics.sigma_params, "volatility")?,
        };
        let game = match (&file.symmetric, &file.player1, &file.player2) {
            (Some(p), None, None) => {
                let spec = GameSpec {
                    dynamics,
                    player: p.build("symmetric")?,
                };
                spec.validate(file.grid.x_max)?;
                Game::Symmetric(spec)
            }
            (None, Some(p1), Some(p2)) => {
                let spec = GeneralGameSpec {
                    dynamics,
                    players: [p1.build("player1")?, p2.build("player2")?],
                };
                spec.validate()?;
                Game::General(spec)
            }
            _ => bail!("give either a [symmetric] section or both [player1] and [player2]"),
        };
        ensure!(file.grid.n_half >= 1, "grid: n_half must be at least 1");
        if let (Game::Symmetric(_), Some(b)) = (&game, &file.boundary) {
            ensure!(
                matches!((b.lbc, b.rbc), (Slope::Shared(_), Slope::Shared(_))),
                "boundary: a symmetric game takes single lbc and rbc values"
            );
        }
        Ok(Spec { file, game })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in spec file {}", path.display()))
    }

    pub fn x_max(&self) -> f64 {
        self.file.grid.x_max
    }

    pub fn grid(&self, n_half: Option<usize>) -> Result<Grid> {
        Ok(Grid::symmetric(self.x_max(), n_half.unwrap_or(self.file.grid.n_half))?)
    }

    pub fn impulse_mode(&self) -> ImpulseMode {
        match (self.file.grid.impulse_mode, &self.game) {
            (Some(m), _) => m.into(),
            (None, Game::Symmetric(_)) => ImpulseMode::SymmetryConstrained,
            (None, Game::General(_)) => ImpulseMode::AllTargets,
        }
    }

    pub fn symmetric(&self) -> Result<&GameSpec> {
        match &self.game {
            Game::Symmetric(s) => Ok(s),
            Game::General(_) => bail!("this command needs a symmetric game ([symmetric] section)"),
        }
    }

    /// The game as a general one; a symmetric spec gives player 2 the
    /// reflected data.
    pub fn general(&self) -> GeneralGameSpec {
        match &self.game {
            Game::General(g) => g.clone(),
            Game::Symmetric(s) => GeneralGameSpec {
                dynamics: s.dynamics.clone(),
                players: [
                    s.player.clone(),
                    PlayerSpec {
                        payoff: reflect(&s.player.payoff),
                        ..s.player.clone()
                    },
                ],
            },
        }
    }

    /// Neumann slopes `(lbc, rbc)` of a symmetric game.
    pub fn symmetric_boundary(&self) -> Result<(f64, f64)> {
        let spec = self.symmetric()?;
        Ok(match &self.file.boundary {
            Some(b) => (b.lbc.get(0), b.rbc.get(0)),
            None => spec.default_boundary(),
        })
    }

    /// Neumann slopes per player for the general form of the game.
    pub fn general_boundary(&self) -> [(f64, f64); 2] {
        match (&self.file.boundary, &self.game) {
            (None, _) => self.general().default_boundary(),
            (Some(b), Game::General(_)) => [0, 1].map(|i| (b.lbc.get(i), b.rbc.get(i))),
            // Player 2 of a symmetric game sees the reflected slopes.
            (Some(b), Game::Symmetric(_)) => [(b.lbc.get(0), b.rbc.get(0)), (-b.rbc.get(0), -b.lbc.get(0))],
        }
    }

    fn engine(&self) -> Engine {
        match self.file.solver.engine {
            EngineName::Fppi => Engine::Fppi,
            EngineName::Howard => Engine::Howard,
        }
    }

    pub fn sym_options(&self) -> SymSolveOptions {
        let s = &self.file.solver;
        let mut o = SymSolveOptions {
            engine: self.engine(),
            ..Default::default()
        };
        o.tol = s.tol.unwrap_or(o.tol);
        o.scale = s.scale.unwrap_or(o.scale);
        o.max_iters = s.max_iters.unwrap_or(o.max_iters);
        o.control.lambda = s.lambda.unwrap_or(o.control.lambda);
        o
    }

    pub fn gen_options(&self) -> GenSolveOptions {
        let s = &self.file.solver;
        let mut o = GenSolveOptions {
            engine: self.engine(),
            ..Default::default()
        };
        o.tol = s.tol.unwrap_or(o.tol);
        o.alpha = s.alpha.unwrap_or(o.alpha);
        o.r0 = s.r0.unwrap_or(o.r0);
        o.max_iters = s.max_iters.unwrap_or(o.max_iters);
        o.control.lambda = s.lambda.unwrap_or(o.control.lambda);
        o
    }

    /// Parameters of the linear game when this file describes one: no drift,
    /// constant volatility, payoffs `x - s1` and `s2 - x`, linear costs and
    /// gains shared by both players.
    pub fn linear_game(&self) -> Result<LinearGameParams> {
        let g = self.general();
        let [p1, p2] = &g.players;
        let sigma = match (&g.dynamics.drift, &g.dynamics.vol) {
            (Func::Poly(mu), Func::Poly(s)) if mu.iter().all(|&c| c == 0.0) && s.len() == 1 => s[0],
            _ => bail!("the linear game needs zero drift and constant volatility"),
        };
        let s1 = match &p1.payoff {
            Func::Poly(c) if c.len() == 2 && c[1] == 1.0 => -c[0],
            _ => bail!("the linear game needs player 1 payoff x - s1"),
        };
        let s2 = match &p2.payoff {
            Func::Poly(c) if c.len() == 2 && c[1] == -1.0 => c[0],
            _ => bail!("the linear game needs player 2 payoff s2 - x"),
        };
        ensure!(
            p1.discount == p2.discount && p1.cost == p2.cost && p1.gain == p2.gain,
            "the linear game needs equal discount rates, costs and gains"
        );
        ensure!(
            p1.cost.c2 == 0.0 && p1.cost.cr == 0.0,
            "the linear game needs linear costs"
        );
        Ok(LinearGameParams {
            sigma,
            rho: p1.discount,
            s1,
            s2,
            c: p1.cost.c0,
            c_gain: p1.gain.g0,
            lambda: p1.cost.c1,
            lambda_gain: p1.gain.g1,
        })
    }
}

/// `x -> f(-x)`.
fn reflect(f: &Func) -> Func {
    match f {
        Func::Poly(c) => Func::Poly(
            c.iter()
                .enumerate()
                .map(|(k, &a)| if k % 2 == 1 { -a } else { a })
                .collect(),
        ),
        &Func::AbsLinear { a, s, b } => Func::AbsLinear { a, s: -s, b },
        &Func::CappedLinear { a, s, cap } => Func::CappedLinear { a: -a, s: -s, cap },
    }
}
