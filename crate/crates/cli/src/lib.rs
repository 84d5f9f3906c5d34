//! Command-line front end: reads game specs, runs the solvers and writes
//! CSV tables.
//!
//! Exit codes: 0 when the iteration converged, 2 when it did not but results
//! were still written, 1 on any error.

pub mod commands;
pub mod output;
pub mod spec;
pub mod strategy;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use impulse_core::simulate::{SimConfig, DEFAULT_IMPULSE_CAP};

use commands::{SimArgs, Status};
use output::{resolve_out, Table};
use spec::{Guess, Spec};
use strategy::StrategyFile;

#[derive(Debug, Parser)]
#[command(name = "impulse", version, about = "Solve and simulate one-dimensional stochastic impulse games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Game spec file (TOML).
    pub spec: PathBuf,
    /// Output CSV; defaults to a file in $IMPULSE_OUT_DIR or the working directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fixed-point iteration for a symmetric game.
    SolveSym {
        #[command(flatten)]
        common: Common,
        /// Override the grid's n_half.
        #[arg(long)]
        n_half: Option<usize>,
        /// Check the one-step fixed-point identity at every iteration.
        #[arg(long)]
        check_identity: bool,
        /// Also write the threshold strategies read off the solution.
        #[arg(long)]
        strategy_out: Option<PathBuf>,
    },
    /// Grid refinement study: step sizes for symmetric games, grid sizes M
    /// for general ones.
    Refine {
        #[command(flatten)]
        common: Common,
        /// Step sizes, comma separated; fractions like 1/64 are accepted.
        #[arg(long, value_delimiter = ',', num_args = 1.., required_unless_present = "m", conflicts_with = "m")]
        h: Vec<String>,
        /// Grid sizes M (nodes minus one), comma separated.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        m: Vec<usize>,
    },
    /// Closed-form solution of the linear game.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_half: Option<usize>,
    },
    /// Relaxation algorithm for a general game.
    SolveGen {
        #[command(flatten)]
        common: Common,
        /// Grid size M; the grid has M + 1 nodes.
        #[arg(long)]
        m: Option<usize>,
        /// Starting point; overrides solver.guess from the spec file.
        #[arg(long, value_enum)]
        guess: Option<Guess>,
        #[arg(long)]
        strategy_out: Option<PathBuf>,
    },
    /// Single-player impulse control problem.
    Control {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        player: u8,
        #[arg(long)]
        n_half: Option<usize>,
    },
    /// Monte Carlo payoffs of a pair of threshold strategies.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Strategy file (TOML).
        strategy: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        x0: f64,
        #[arg(long, default_value_t = 1000.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 200)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Negate every normal draw.
        #[arg(long)]
        antithetic: bool,
        #[arg(long, default_value_t = DEFAULT_IMPULSE_CAP)]
        impulse_cap: usize,
        /// Relative perturbation of one player's border and target.
        #[arg(long, default_value_t = 0.0)]
        perturb: f64,
        #[arg(long, default_value_t = 1)]
        perturb_player: u8,
        /// Seed of the perturbation; the simulation seed by default.
        #[arg(long)]
        perturb_seed: Option<u64>,
        /// Also write the states of path 0.
        #[arg(long)]
        path_out: Option<PathBuf>,
        /// Steps between recorded states of path 0.
        #[arg(long, default_value_t = 1000)]
        record_stride: usize,
    },
}

fn default_name(spec: &std::path::Path, command: &str) -> String {
    let stem = spec.file_stem().and_then(|s| s.to_str()).unwrap_or("spec");
    format!("{stem}-{command}.csv")
}

/// Prints a line on stdout; a closed pipe is not an error.
fn say(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn write(table: &Table, common: &Common, command: &str) -> Result<()> {
    let path = resolve_out(common.out.clone(), &default_name(&common.spec, command));
    table.write(&path)?;
    say(&format!("wrote {}", path.display()));
    Ok(())
}

/// Runs one command, printing a summary on stdout.
pub fn run(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::SolveSym {
            common,
            n_half,
            check_identity,
            strategy_out,
        } => {
            let spec = Spec::load(&common.spec)?;
            let run = commands::run_sym(&spec, n_half, check_identity)?;
            say(&run.summary());
            write(&run.table(), &common, "solve-sym")?;
            if let Some(p) = strategy_out {
                StrategyFile::new(&run.strategies()?).save(&p)?;
            }
            Ok(Status::from_converged(run.report.converged()))
        }
        Command::Refine { common, h, m } => {
            let spec = Spec::load(&common.spec)?;
            if !h.is_empty() {
                let steps = h.iter().map(|s| commands::parse_step(s)).collect::<Result<Vec<_>>>()?;
                let rows = commands::refine_sym(&spec, &steps)?;
                write(&commands::sym_refine_table(&rows), &common, "refine")?;
                Ok(Status::from_converged(rows.iter().all(|r| {
                    matches!(r.stop, impulse_core::symgame::Stop::Tolerance | impulse_core::symgame::Stop::Exact)
                })))
            } else {
                let rows = commands::refine_gen(&spec, &m)?;
                write(&commands::gen_refine_table(&rows), &common, "refine")?;
                Ok(Status::from_converged(rows.iter().all(|r| r.zero.converged && r.warm.converged)))
            }
        }
        Command::Oracle { common, n_half } => {
            let spec = Spec::load(&common.spec)?;
            let sol = commands::run_oracle(&spec)?;
            say(&commands::oracle_summary(&sol));
            write(&commands::oracle_table(&sol, &spec.grid(n_half)?), &common, "oracle")?;
            Ok(Status::Converged)
        }
        Command::SolveGen {
            common,
            m,
            guess,
            strategy_out,
        } => {
            let spec = Spec::load(&common.spec)?;
            let run = commands::run_gen(&spec, m, guess.unwrap_or(spec.file.solver.guess))?;
            say(&run.summary());
            write(&run.table(), &common, "solve-gen")?;
            if let Some(p) = strategy_out {
                StrategyFile::new(&run.strategies()?).save(&p)?;
            }
            Ok(Status::from_converged(run.report.converged))
        }
        Command::Control { common, player, n_half } => {
            let spec = Spec::load(&common.spec)?;
            let run = commands::run_control(&spec, player, n_half)?;
            say(&run.summary());
            write(&run.table(), &common, "control")?;
            Ok(Status::Converged)
        }
        Command::Simulate {
            common,
            strategy,
            x0,
            horizon,
            dt,
            paths,
            seed,
            antithetic,
            impulse_cap,
            perturb,
            perturb_player,
            perturb_seed,
            path_out,
            record_stride,
        } => {
            let spec = Spec::load(&common.spec)?;
            let strategies = StrategyFile::load(&strategy)?;
            let args = SimArgs {
                config: SimConfig {
                    horizon,
                    dt,
                    n_paths: paths,
                    seed,
                    x0,
                    antithetic,
                    record_stride: 0,
                    impulse_cap,
                },
                perturb,
                perturb_player,
                perturb_seed,
            };
            let run = commands::run_simulate(&spec, &strategies, &args)?;
            say(&run.summary());
            write(&run.table(), &common, "simulate")?;
            if let Some(p) = path_out {
                commands::path_table(&spec, &run.strategies, &args.config, record_stride)?
                    .write(&p)
                    .with_context(|| format!("writing path to {}", p.display()))?;
            }
            Ok(Status::from_converged(!run.estimate.is_degenerate()))
        }
    }
}

/// Parses `args` (program name first) and runs the command. Usage errors
/// and failures both map to exit code 1; help and version requests to 0.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(status) => status.exit_code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
