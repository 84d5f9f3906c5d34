use impulse_core::discretize::{CostSpec, Dynamics, Func, GainSpec, GeneralGameSpec, PlayerSpec};
use impulse_core::oracle::{solve_linear_game, LinearGameParams, Player};
use impulse_core::simulate::{estimate_payoff, simulate_path, SimConfig, ThresholdStrategy};

fn linear_game() -> (GeneralGameSpec, [ThresholdStrategy; 2]) {
    let p = LinearGameParams {
        sigma: 0.15,
        rho: 0.02,
        s1: -3.0,
        s2: 3.0,
        c: 100.0,
        c_gain: 0.0,
        lambda: 15.0,
        lambda_gain: 15.0,
    };
    let sol = solve_linear_game(&p).unwrap();
    let player = |payoff| PlayerSpec {
        discount: p.rho,
        payoff,
        cost: CostSpec::linear(p.c, p.lambda),
        gain: GainSpec::linear(p.c_gain, p.lambda_gain),
    };
    let spec = GeneralGameSpec {
        dynamics: Dynamics {
            drift: Func::zero(),
            vol: Func::constant(p.sigma),
        },
        players: [player(Func::linear(3.0, 1.0)), player(Func::linear(3.0, -1.0))],
    };
    let strategies = [
        ThresholdStrategy::from_oracle(&sol, Player::One),
        ThresholdStrategy::from_oracle(&sol, Player::Two),
    ];
    (spec, strategies)
}

#[test]
fn reflected_antithetic_paths_swap_payoffs_exactly() {
    let (spec, s) = linear_game();
    assert_eq!(s[1], s[0].reflect());
    let mut events = 0;
    for (index, x0) in [(0u64, 0.7), (5, -2.0), (9, 3.5)] {
        let cfg = SimConfig {
            horizon: 200.0,
            dt: 0.01,
            x0,
            ..Default::default()
        };
        let mirror = SimConfig {
            x0: -x0,
            antithetic: true,
            ..cfg.clone()
        };
        let a = simulate_path(&spec, &s, &cfg, index).unwrap();
        let b = simulate_path(&spec, &s, &mirror, index).unwrap();
        assert_eq!(a.payoff[0], b.payoff[1]);
        assert_eq!(a.payoff[1], b.payoff[0]);
        assert_eq!(a.events.len(), b.events.len());
        events += a.events.len();
    }
    assert!(events > 0);
}

#[test]
fn standard_error_shrinks_like_root_n() {
    let (spec, s) = linear_game();
    let cfg = SimConfig {
        horizon: 50.0,
        dt: 0.01,
        n_paths: 400,
        seed: 3,
        ..Default::default()
    };
    let small = estimate_payoff(&spec, &s, &cfg).unwrap();
    let large = estimate_payoff(&spec, &s, &SimConfig { n_paths: 1600, ..cfg }).unwrap();
    for i in 0..2 {
        let ratio = large.std_error[i] / small.std_error[i];
        assert!((ratio - 0.5).abs() <= 0.1, "player {} ratio {ratio}", i + 1);
    }
}

#[test]
fn estimates_are_reproducible() {
    let (spec, s) = linear_game();
    let cfg = SimConfig {
        horizon: 20.0,
        dt: 0.01,
        n_paths: 64,
        seed: 11,
        x0: -1.0,
        ..Default::default()
    };
    let a = estimate_payoff(&spec, &s, &cfg).unwrap();
    let b = estimate_payoff(&spec, &s, &cfg).unwrap();
    assert_eq!(a, b);
    let c = estimate_payoff(&spec, &s, &SimConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(a.mean, c.mean);
}
