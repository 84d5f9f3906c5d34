//! Closed-form equilibrium of the linear game: Brownian state, running
//! payoffs `x - s1` and `s2 - x`, affine intervention costs and gains.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Bisection iterations for the pasting root.
const XI_ITERS: usize = 200;

/// Which player's payoff to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Player {
    One,
    Two,
}

impl Player {
    pub fn index(self) -> usize {
        match self {
            Player::One => 0,
            Player::Two => 1,
        }
    }

    pub fn other(self) -> Player {
        match self {
            Player::One => Player::Two,
            Player::Two => Player::One,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGameParams {
    pub sigma: f64,
    pub rho: f64,
    pub s1: f64,
    pub s2: f64,
    /// Fixed intervention cost.
    pub c: f64,
    /// Fixed gain of the non-intervening player.
    pub c_gain: f64,
    /// Proportional intervention cost.
    pub lambda: f64,
    /// Proportional gain of the non-intervening player.
    pub lambda_gain: f64,
}

impl LinearGameParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.sigma,
            self.rho,
            self.s1,
            self.s2,
            self.c,
            self.c_gain,
            self.lambda,
            self.lambda_gain,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("parameters must be finite".into()));
        }
        if self.sigma <= 0.0 {
            return Err(Error::InvalidArgument("sigma must be positive".into()));
        }
        if self.rho <= 0.0 {
            return Err(Error::InvalidArgument("rho must be positive".into()));
        }
        if self.s1 >= self.s2 {
            return Err(Error::InvalidArgument("s1 must be below s2".into()));
        }
        if self.c_gain < 0.0 || self.c_gain > self.c {
            return Err(Error::InvalidArgument(
                "fixed gain must lie in [0, fixed cost]".into(),
            ));
        }
        if self.lambda_gain < 0.0 || self.lambda_gain > self.lambda {
            return Err(Error::InvalidArgument(
                "proportional gain must lie in [0, proportional cost]".into(),
            ));
        }
        if self.c == self.c_gain && self.lambda == self.lambda_gain {
            return Err(Error::Degenerate(
                "costs equal gains; no equilibrium of threshold type exists".into(),
            ));
        }
        if 1.0 - self.lambda * self.rho <= 0.0 {
            return Err(Error::Degenerate(
                "1 - lambda * rho must be positive".into(),
            ));
        }
        if self.c == 0.0 {
            return Err(Error::Degenerate(
                "zero fixed cost leads to infinitely many interventions".into(),
            ));
        }
        Ok(())
    }
}

/// `F(y) = 2y - eta * log((eta + y) / (eta - y)) + theta * c`.
pub fn pasting_function(y: f64, eta: f64, theta: f64, c: f64) -> f64 {
    2.0 * y - eta * ((eta + y) / (eta - y)).ln() + theta * c
}

/// [`pasting_function`] written in terms of the gap `u = eta - y`, which
/// keeps full relative precision when the root is close to `eta`.
pub fn pasting_function_gap(u: f64, eta: f64, theta: f64, c: f64) -> f64 {
    2.0 * (eta - u) - eta * ((2.0 * eta - u) / u).ln() + theta * c
}

/// Root of [`pasting_function`] in `[0, eta)`, by bisection.
pub fn solve_xi(eta: f64, theta: f64, c: f64) -> Result<f64> {
    Ok(eta - solve_xi_gap(eta, theta, c)?)
}

/// Gap `eta - xi` of the pasting root, in `(0, eta]`. Bisects geometrically
/// while the bracket spans more than a factor of two.
pub fn solve_xi_gap(eta: f64, theta: f64, c: f64) -> Result<f64> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Degenerate("eta must be positive".into()));
    }
    if !(c >= 0.0) || !(theta > 0.0) {
        return Err(Error::InvalidArgument(
            "need c >= 0 and theta > 0".into(),
        ));
    }
    if c == 0.0 {
        return Ok(eta);
    }
    // F decreases in y, so it increases in u; F(u = eta) = theta c > 0.
    let f = |u| pasting_function_gap(u, eta, theta, c);
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, eta);
    if f(lo) >= 0.0 {
        return Err(Error::Degenerate(
            "pasting root lies too close to eta".into(),
        ));
    }
    for _ in 0..XI_ITERS {
        let mid = if hi > 2.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if f(lo).abs() <= f(hi).abs() { lo } else { hi })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGameSolution {
    pub params: LinearGameParams,
    pub s_mid: f64,
    pub theta: f64,
    pub eta: f64,
    pub xi: f64,
    /// `eta - xi`, kept separately for precision.
    pub xi_gap: f64,
    pub gamma: f64,
    pub a: [f64; 2],
    /// Intervention thresholds; player 1 acts below `border[0]`, player 2
    /// above `border[1]`.
    pub border: [f64; 2],
    pub target: [f64; 2],
}

pub fn solve_linear_game(p: &LinearGameParams) -> Result<LinearGameSolution> {
    p.validate()?;
    let s_mid = 0.5 * (p.s1 + p.s2);
    let theta = (2.0 * p.rho / (p.sigma * p.sigma)).sqrt();
    let eta = (1.0 - p.lambda * p.rho) / p.rho;
    let xi_gap = solve_xi_gap(eta, theta, p.c)?;
    let xi = eta - xi_gap;
    let gamma = theta * (p.c - p.c_gain) / (4.0 * xi)
        + theta * p.c * (p.lambda - p.lambda_gain) / (4.0 * eta * xi)
        + (p.lambda - p.lambda_gain) / (2.0 * eta);
    let root = gamma.sqrt() + (gamma + 1.0).sqrt();
    let spread = ((2.0 * eta - xi_gap) / xi_gap).sqrt();
    let scale = (xi_gap * (2.0 * eta - xi_gap)).sqrt() / (2.0 * theta);
    let mut border = [0.0; 2];
    let mut target = [0.0; 2];
    let mut a = [0.0; 2];
    for i in 0..2 {
        let sign = if i == 0 { -1.0 } else { 1.0 };
        border[i] = s_mid + sign / theta * (spread * root).ln();
        target[i] = s_mid + sign / theta * (root / spread).ln();
        a[i] = (sign * theta * s_mid).exp() * scale * (-sign * (gamma + 1.0).sqrt() - gamma.sqrt());
    }
    Ok(LinearGameSolution {
        params: *p,
        s_mid,
        theta,
        eta,
        xi,
        xi_gap,
        gamma,
        a,
        border,
        target,
    })
}

impl LinearGameSolution {
    /// Smooth part shared by both branches of player 2's payoff.
    pub fn phi(&self, x: f64) -> f64 {
        self.a[0] * (self.theta * x).exp()
            + self.a[1] * (-self.theta * x).exp()
            + (self.params.s2 - x) / self.params.rho
    }

    pub fn v2(&self, x: f64) -> f64 {
        let p = &self.params;
        if x <= self.border[0] {
            let t = self.target[0];
            self.phi(t) + p.c_gain + p.lambda_gain * (t - x)
        } else if x < self.border[1] {
            self.phi(x)
        } else {
            let t = self.target[1];
            self.phi(t) - p.c - p.lambda * (x - t)
        }
    }

    pub fn v1(&self, x: f64) -> f64 {
        self.v2(2.0 * self.s_mid - x)
    }

    pub fn value(&self, player: Player, x: f64) -> f64 {
        match player {
            Player::One => self.v1(x),
            Player::Two => self.v2(x),
        }
    }

    /// Residual of the pasting equation at the computed root.
    pub fn xi_residual(&self) -> f64 {
        pasting_function_gap(self.xi_gap, self.eta, self.theta, self.params.c)
    }
}

pub fn sample_on_grid(sol: &LinearGameSolution, grid: &Grid, player: Player) -> Vec<f64> {
    grid.nodes().into_iter().map(|x| sol.value(player, x)).collect()
}

/// `max |(v - exact) / exact|` over the nodes.
pub fn relative_sup_error(v: &[f64], exact: &[f64]) -> f64 {
    v.iter()
        .zip(exact)
        .map(|(a, b)| ((a - b) / b).abs())
        .fold(0.0, f64::max)
}

/// `max |v - exact| / max |exact|` over the nodes.
pub fn relative_norm_error(v: &[f64], exact: &[f64]) -> f64 {
    let num = v
        .iter()
        .zip(exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let den = exact.iter().map(|b| b.abs()).fold(0.0, f64::max);
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn table_game() -> LinearGameParams {
        LinearGameParams {
            sigma: 0.15,
            rho: 0.02,
            s1: -3.0,
            s2: 3.0,
            c: 100.0,
            c_gain: 0.0,
            lambda: 15.0,
            lambda_gain: 15.0,
        }
    }

    #[test]
    fn anchors() {
        let sol = solve_linear_game(&table_game()).unwrap();
        assert!((sol.border[0] + 2.8238).abs() < 5e-5);
        assert!((sol.target[0] - 1.5243).abs() < 5e-5);
        assert!((sol.theta - 4.0 / 3.0).abs() < 1e-14);
        assert!((sol.eta - 35.0).abs() < 1e-12);
        assert!(sol.xi_residual().abs() <= 1e-12);
    }

    #[test]
    fn symmetric_thresholds() {
        let sol = solve_linear_game(&table_game()).unwrap();
        assert!((sol.border[0] + sol.border[1]).abs() < 1e-12);
        assert!((sol.target[0] + sol.target[1]).abs() < 1e-12);
        assert!(sol.border[0] < sol.target[0] && sol.target[1] < sol.border[1]);
        assert_eq!(sol.v1(0.0), sol.v2(0.0));
    }

    #[test]
    fn pasting_continuity() {
        let sol = solve_linear_game(&table_game()).unwrap();
        for &b in &sol.border {
            let eps = 1e-9;
            assert!((sol.v2(b - eps) - sol.v2(b + eps)).abs() < 1e-6);
            let left = if b < 0.0 {
                sol.phi(sol.target[0]) + sol.params.lambda_gain * (sol.target[0] - b)
            } else {
                sol.phi(sol.target[1]) - sol.params.c - sol.params.lambda * (b - sol.target[1])
            };
            assert!((left - sol.phi(b)).abs() < 1e-9 * (1.0 + left.abs()));
        }
    }

    #[test]
    fn ode_holds_in_continuation_region() {
        let sol = solve_linear_game(&table_game()).unwrap();
        let p = sol.params;
        let h = 1e-4;
        for i in 1..=100 {
            let x = sol.border[0] + (sol.border[1] - sol.border[0]) * i as f64 / 101.0;
            let d2 = (sol.v2(x + h) - 2.0 * sol.v2(x) + sol.v2(x - h)) / (h * h);
            let r = 0.5 * p.sigma * p.sigma * d2 - p.rho * sol.v2(x) + (p.s2 - x);
            assert!(r.abs() <= 1e-6 * (1.0 + sol.v2(x).abs()), "x = {x}, r = {r}");
        }
    }

    #[test]
    fn affine_tail() {
        let sol = solve_linear_game(&table_game()).unwrap();
        let grid = Grid::symmetric(4.0, 64).unwrap();
        let v = sample_on_grid(&sol, &grid, Player::Two);
        let n = grid.len();
        let slope = (v[n - 1] - v[n - 2]) / grid.step();
        assert!((slope + 15.0).abs() < 1e-9);
    }

    #[test]
    fn error_metrics() {
        let exact = [2.0, -4.0, 1.0];
        let v = [2.5, -4.0, 0.5];
        assert_eq!(relative_sup_error(&v, &exact), 0.5);
        assert_eq!(relative_norm_error(&v, &exact), 0.125);
    }

    #[test]
    fn zero_fixed_cost_root() {
        assert_eq!(solve_xi(35.0, 1.0, 0.0).unwrap(), 0.0);
        assert!(solve_xi(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn degenerate_games() {
        let mut p = table_game();
        p.c_gain = p.c;
        assert!(matches!(solve_linear_game(&p), Err(Error::Degenerate(_))));
        let mut p = table_game();
        p.rho = 1.0 / 15.0;
        assert!(matches!(solve_linear_game(&p), Err(Error::Degenerate(_))));
    }
}
