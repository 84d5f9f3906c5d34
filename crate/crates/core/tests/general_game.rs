use std::f64::consts::PI;

use impulse_core::discretize::{CostSpec, Dynamics, Func, GainSpec, GeneralGameSpec, PlayerSpec};
use impulse_core::gengame::{residual_general, single_player_guesses, solve_general, GenSolveOptions, GeneralGame};
use impulse_core::grid::{Grid, ImpulseMode, ImpulseSets};
use impulse_core::symgame::Engine;

fn parabolic() -> GeneralGameSpec {
    let player = |payoff| PlayerSpec {
        discount: 0.03,
        payoff,
        cost: CostSpec::constant(100.0),
        gain: GainSpec::linear(30.0, 0.0),
    };
    GeneralGameSpec {
        dynamics: Dynamics {
            drift: Func::zero(),
            vol: Func::constant(0.25),
        },
        players: [
            player(Func::Poly(vec![4.5, -3.5, -1.0])),
            player(Func::Poly(vec![2.7 * PI, -(PI - 2.7), -1.0])),
        ],
    }
}

fn game(m: usize) -> GeneralGame {
    let grid = Grid::symmetric(6.0, m / 2).unwrap();
    let sets = [0, 1].map(|_| ImpulseSets::new(&grid, ImpulseMode::AllTargets));
    GeneralGame::new(&parabolic(), grid, sets, [(0.0, 0.0); 2]).unwrap()
}

fn tail(region: &[bool]) -> (usize, usize) {
    let ks: Vec<usize> = (0..region.len()).filter(|&k| region[k]).collect();
    let (a, b) = (ks[0], *ks.last().unwrap());
    assert_eq!(b - a + 1, ks.len(), "region is not an interval");
    assert!(a == 0 || b == region.len() - 1, "region is not a tail");
    (a, b)
}

#[test]
fn parabolic_game_converges_from_zero() {
    let g = game(300);
    let opts = GenSolveOptions::default();
    let rep = solve_general(&g, &opts, None).unwrap();
    assert!(rep.converged);
    assert!(rep.residual <= 1e-8);
    assert!(rep.iterations <= 110, "{} iterations", rep.iterations);
    let (r, _) = residual_general(&g, &rep.payoffs, opts.tol);
    assert_eq!(r, rep.residual);
    for (k, &r) in rep.r_history.iter().enumerate() {
        assert!((r - 0.8f64.powi(k as i32)).abs() <= 1e-14 * r);
    }

    // Player 1 acts on the right tail, player 2 on the left one.
    let (a1, b1) = tail(&rep.regions[0]);
    let (a2, b2) = tail(&rep.regions[1]);
    assert_eq!(b1, g.len() - 1);
    assert_eq!(a2, 0);
    assert!(b2 < a1);
    // Impulses land outside both regions.
    for i in 0..2 {
        for k in 0..g.len() {
            if rep.regions[i][k] {
                let t = (k as isize + rep.impulses[i][k]) as usize;
                assert!(!rep.regions[0][t] && !rep.regions[1][t]);
            }
        }
    }
}

#[test]
fn single_player_warm_start_is_not_slower() {
    let g = game(300);
    let opts = GenSolveOptions::default();
    let cold = solve_general(&g, &opts, None).unwrap();
    let guess = single_player_guesses(&g, &parabolic()).unwrap();
    let warm = solve_general(&g, &opts, Some(guess)).unwrap();
    assert!(warm.converged);
    assert!(warm.iterations as f64 <= 1.5 * cold.iterations as f64);
    let gap = (0..2)
        .flat_map(|i| warm.payoffs[i].iter().zip(&cold.payoffs[i]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    assert!(gap < 1e-6, "equilibria differ by {gap}");
}

#[test]
fn engines_agree() {
    let g = game(300);
    let fp = solve_general(&g, &GenSolveOptions::default(), None).unwrap();
    let hw = solve_general(
        &g,
        &GenSolveOptions {
            engine: Engine::Howard,
            ..Default::default()
        },
        None,
    )
    .unwrap();
    assert!(fp.converged && hw.converged);
    assert_eq!(fp.regions, hw.regions);
    let gap = (0..2)
        .flat_map(|i| fp.payoffs[i].iter().zip(&hw.payoffs[i]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    assert!(gap < 1e-7, "engines differ by {gap}");
}

#[test]
fn invalid_options_rejected() {
    let g = game(20);
    for opts in [
        GenSolveOptions { alpha: 1.0, ..Default::default() },
        GenSolveOptions { r0: 0.0, ..Default::default() },
        GenSolveOptions { tol: 0.0, ..Default::default() },
    ] {
        assert!(solve_general(&g, &opts, None).is_err());
    }
    assert!(solve_general(&g, &GenSolveOptions::default(), Some([vec![0.0; 3], vec![0.0; 3]])).is_err());
}
