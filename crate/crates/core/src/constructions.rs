//! Explicit lower-bound games and the pay-your-signal envelope.
//!
//! Both constructions start from an equilibrium `s` of a simple game `G1`
//! and build a second game `G2` in which every player's utility differs from
//! her `G1` utility by a constant on the deviations she can afford. `s` then
//! stays an equilibrium of `G2` while the optimal liquid welfare of `G2` is
//! much larger than its liquid welfare at `s`.

use serde::Serialize;

use crate::equilibrium::{self, Verification, VERIFY_GRID};
use crate::games::{self, Budget, Game, Player, Valuation};
use crate::mechanisms::{self, Mechanism};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstructionKind {
    /// Linear unbudgeted players, then budgets pinned at the equilibrium
    /// shares; any mechanism, bound `2 − 1/n`.
    Thm1,
    /// Two linear players with unit budgets; bound `4/3` even when the
    /// mechanism sees budgets.
    BudgetAware,
}

impl ConstructionKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "thm1" => Some(ConstructionKind::Thm1),
            "budget-aware" | "budget_aware" => Some(ConstructionKind::BudgetAware),
            _ => None,
        }
    }
}

/// Per-game welfare at the shared equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameCheck {
    pub game: Game,
    pub liquid_welfare: f64,
    pub optimal_liquid_welfare: f64,
    pub optimal_allocation: Vec<f64>,
    pub verification: Verification,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructionReport {
    pub kind: ConstructionKind,
    pub mechanism: String,
    pub n: usize,
    pub signals: Vec<f64>,
    pub allocation: Vec<f64>,
    pub payments: Vec<f64>,
    /// The player whose valuation is left alone in `G2` (thm1) or the low
    /// share linear player (budget-aware).
    pub pivot: usize,
    pub g1: GameCheck,
    pub g2: GameCheck,
    /// `LW*(G2) / LW(s, G2)`.
    pub bound: f64,
    /// `2 − d_pivot` (thm1) or `2 / (1 + d_pivot)` (budget-aware).
    pub predicted_bound: f64,
    /// `2 − 1/n` or `4/3`.
    pub guaranteed_bound: f64,
    /// Every payment at `s` fits inside the corresponding `G2` budget.
    pub budgets_feasible: bool,
    /// `s` passes the deviation scan in both games.
    pub shared_equilibrium: bool,
}

impl ConstructionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn construct(kind: ConstructionKind, mech: &dyn Mechanism, n: usize) -> Result<ConstructionReport> {
    match kind {
        ConstructionKind::Thm1 => pinned_budget_games(mech, n),
        ConstructionKind::BudgetAware => budget_aware_games(mech, n),
    }
}

fn solve_g1(g1: &Game, mech: &dyn Mechanism) -> Result<Vec<f64>> {
    let n = g1.n();
    let eq = equilibrium::find_equilibrium(g1, mech, &vec![1.0; n])?;
    if !eq.converged {
        return Err(Error::ConstructionFailed(format!(
            "no equilibrium of the first game for {} from the symmetric start (max gain {:.3e} after {} rounds)",
            mech.name(),
            eq.max_gain,
            eq.rounds
        )));
    }
    Ok(eq.signals)
}

fn check(game: Game, mech: &dyn Mechanism, s: &[f64], d: &[f64]) -> Result<GameCheck> {
    let verification = equilibrium::verify_equilibrium(&game, mech, s, VERIFY_GRID)?;
    let optimum = games::optimal_liquid_welfare(&game);
    Ok(GameCheck {
        liquid_welfare: games::liquid_welfare(&game, d),
        optimal_liquid_welfare: optimum.value,
        optimal_allocation: optimum.allocation,
        verification,
        game,
    })
}

/// Lowest-index argmin of `d[..among]`; shares within 1e-6 (the equilibrium
/// accuracy) count as ties.
fn lowest_share(d: &[f64], among: usize) -> usize {
    (0..among).fold(0, |best, i| if d[i] < d[best] - 1e-6 { i } else { best })
}

/// The `2 − 1/n` construction for `mech` with `n` players.
pub fn pinned_budget_games(mech: &dyn Mechanism, n: usize) -> Result<ConstructionReport> {
    let g1 = Game::new(vec![Player::linear_unbounded(); n])?;
    let s = solve_g1(&g1, mech)?;
    let d = mechanisms::allocate(mech, &s)?;
    let pay = mechanisms::payments(mech, &s)?;
    let pivot = lowest_share(&d, n);

    let players = (0..n)
        .map(|i| {
            if i == pivot {
                Player::linear_unbounded()
            } else {
                Player::new(Valuation::Affine { slope: 1.0, intercept: d[i] }, Budget::Finite(d[i]))
            }
        })
        .collect();
    let g2 = Game::new(players)?;
    let budgets_feasible = (0..n).all(|i| i == pivot || pay[i] <= d[i]);
    if !budgets_feasible {
        return Err(Error::ConstructionFailed(format!(
            "equilibrium payments {pay:?} exceed the shares {d:?}"
        )));
    }

    let g1 = check(g1, mech, &s, &d)?;
    let g2 = check(g2, mech, &s, &d)?;
    Ok(ConstructionReport {
        kind: ConstructionKind::Thm1,
        mechanism: mech.name().to_string(),
        n,
        bound: g2.optimal_liquid_welfare / g2.liquid_welfare,
        predicted_bound: 2.0 - d[pivot],
        guaranteed_bound: 2.0 - 1.0 / n as f64,
        budgets_feasible,
        shared_equilibrium: g1.verification.is_equilibrium && g2.verification.is_equilibrium,
        signals: s,
        allocation: d,
        payments: pay,
        pivot,
        g1,
        g2,
    })
}

/// The `4/3` construction: players 1 and 2 value `x`, the rest nothing,
/// all budgets 1. In `G2` the linear player with the larger share values
/// `1 + x` instead.
pub fn budget_aware_games(mech: &dyn Mechanism, n: usize) -> Result<ConstructionReport> {
    let linear = Player::new(Valuation::linear(1.0), Budget::Finite(1.0));
    let idle = Player::new(Valuation::zero(), Budget::Finite(1.0));
    let players: Vec<Player> = (0..n).map(|i| if i < 2 { linear.clone() } else { idle.clone() }).collect();
    let g1 = Game::new(players)?;
    let s = solve_g1(&g1, mech)?;
    let d = mechanisms::allocate(mech, &s)?;
    let pay = mechanisms::payments(mech, &s)?;
    let pivot = lowest_share(&d, 2);
    let other = 1 - pivot;

    let mut players = g1.players.clone();
    players[other].valuation = Valuation::Affine { slope: 1.0, intercept: 1.0 };
    let g2 = Game::new(players)?;
    let budgets_feasible = pay.iter().all(|&p| p <= 1.0);

    let g1 = check(g1, mech, &s, &d)?;
    let g2 = check(g2, mech, &s, &d)?;
    Ok(ConstructionReport {
        kind: ConstructionKind::BudgetAware,
        mechanism: mech.name().to_string(),
        n,
        bound: g2.optimal_liquid_welfare / g2.liquid_welfare,
        predicted_bound: 2.0 / (1.0 + d[pivot]),
        guaranteed_bound: 4.0 / 3.0,
        budgets_feasible,
        shared_equilibrium: g1.verification.is_equilibrium && g2.verification.is_equilibrium,
        signals: s,
        allocation: d,
        payments: pay,
        pivot,
        g1,
        g2,
    })
}

/// `(1/β′)(1 − exp(−β′y/(β′ − 1)))`: the least two-player pay-your-signal
/// share at own signal `y` against a unit rival for a mechanism with
/// master ratio at most `β′`.
pub fn pys_envelope(beta_prime: f64, y: f64) -> Result<f64> {
    if !(beta_prime > 1.0) || !beta_prime.is_finite() {
        return Err(Error::Domain(format!("envelope needs β′ > 1, got {beta_prime}")));
    }
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("envelope needs y >= 0, got {y}")));
    }
    Ok(-(-beta_prime * y / (beta_prime - 1.0)).exp_m1() / beta_prime)
}
