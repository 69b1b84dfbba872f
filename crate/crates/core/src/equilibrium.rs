//! Budget-constrained best responses and pure Nash equilibria.

use serde::Serialize;

use crate::games::{self, Game};
use crate::mechanisms::{self, Mechanism};
use crate::numeric;
use crate::Result;

/// Deviation gains at or below this count as no improvement.
pub const VERIFY_TOLERANCE: f64 = 1e-7;
/// Default number of deviation points per player in [`verify_equilibrium`].
pub const VERIFY_GRID: usize = 512;
/// Stand-in upper end of the deviation scan for unbounded signal ranges.
pub const SIGNAL_CAP: f64 = 1e6;

const BR_GRID: usize = 32;

fn others_positive(s: &[f64], i: usize) -> bool {
    s.iter().enumerate().any(|(j, &x)| j != i && x > 0.0)
}

fn payment_with(mech: &dyn Mechanism, s: &[f64], i: usize, y: f64) -> f64 {
    let mut t = s.to_vec();
    t[i] = y;
    mechanisms::payment_of(mech, &t, i)
}

fn utility_with(game: &Game, mech: &dyn Mechanism, s: &mut [f64], i: usize, y: f64) -> f64 {
    let old = s[i];
    s[i] = y;
    let u = games::utility_unchecked(game, mech, s, i);
    s[i] = old;
    u
}

/// Largest own signal whose payment stays within `limit`, or `+∞` when the
/// payment never exceeds it.
fn largest_affordable(mech: &dyn Mechanism, s: &[f64], i: usize, limit: f64) -> f64 {
    if limit.is_infinite() || !others_positive(s, i) {
        return f64::INFINITY;
    }
    if limit <= 0.0 {
        return 0.0;
    }
    if mech.is_pys() {
        return limit;
    }
    let mut lo = 0.0;
    let mut hi = s[i].max(1.0);
    let mut doublings = 0;
    while payment_with(mech, s, i, hi) <= limit {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 1100 || !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if payment_with(mech, s, i, mid) <= limit {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Largest signal player `i` can afford against `s_-i`; `+∞` with an
/// unbounded budget.
pub fn feasible_signal_bound(game: &Game, mech: &dyn Mechanism, i: usize, s: &[f64]) -> Result<f64> {
    mechanisms::check_profile(mech, s)?;
    games::check_sizes(game, s.len())?;
    Ok(largest_affordable(mech, s, i, game.players[i].budget.amount()))
}

/// `∂u_i(y, s_-i)/∂y` at `y = s_i` for the game's own valuation.
pub fn utility_derivative(game: &Game, mech: &dyn Mechanism, s: &[f64], i: usize) -> Result<f64> {
    let dg = mechanisms::allocation_derivative(mech, s, i)?;
    let dp = mechanisms::payment_derivative(mech, s, i)?;
    let share = mechanisms::share_of(mech, s, i);
    let v = &game.players[i].valuation;
    if dg == 0.0 {
        return Ok(-dp);
    }
    Ok(v.slope(share) * dg - dp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BestResponse {
    pub signal: f64,
    pub utility: f64,
    /// Upper end of the searched interval. Zero means no positive signal can
    /// beat signalling zero.
    pub upper: f64,
    /// Affordability bound on the own signal.
    pub bound: f64,
    /// The coarse scan saw more than one local maximum.
    pub irregular: bool,
}

/// Utility-maximizing signal of player `i` against `s_-i`.
///
/// The search interval is `[0, ȳ]` where `ȳ` is the smaller of the budget
/// bound and the largest signal whose payment does not exceed
/// `v_i(1) − v_i(0)` (beyond it signalling zero is strictly better). A coarse
/// hybrid grid brackets the best point, golden-section search narrows it, and
/// a sign bisection on the utility derivative polishes interior optima.
pub fn best_response(game: &Game, mech: &dyn Mechanism, i: usize, s: &[f64]) -> Result<BestResponse> {
    mechanisms::check_profile(mech, s)?;
    games::check_sizes(game, s.len())?;
    let mut work = s.to_vec();
    if !others_positive(s, i) {
        let u = utility_with(game, mech, &mut work, i, 1.0);
        return Ok(BestResponse {
            signal: 1.0,
            utility: u,
            upper: f64::INFINITY,
            bound: f64::INFINITY,
            irregular: false,
        });
    }

    let v = &game.players[i].valuation;
    let bound = largest_affordable(mech, s, i, game.players[i].budget.amount());
    let room = v.value(1.0) - v.value(0.0);
    let upper = bound.min(largest_affordable(mech, s, i, room));
    let at_zero = utility_with(game, mech, &mut work, i, 0.0);
    if !(upper > 0.0) {
        return Ok(BestResponse { signal: 0.0, utility: at_zero, upper: 0.0, bound, irregular: false });
    }
    let upper = upper.min(1e12);

    let grid = numeric::hybrid_grid(upper, BR_GRID, BR_GRID);
    let values: Vec<f64> = grid.iter().map(|&y| utility_with(game, mech, &mut work, i, y)).collect();
    let k = values
        .iter()
        .enumerate()
        .fold(0, |best, (j, &u)| if u > values[best] { j } else { best });
    let peaks = (0..values.len())
        .filter(|&j| {
            let left = j == 0 || values[j] > values[j - 1];
            let right = j + 1 == values.len() || values[j] > values[j + 1];
            left && right
        })
        .count();

    let a = grid[k.saturating_sub(1)];
    let b = grid[(k + 1).min(grid.len() - 1)];
    let mut candidates = Vec::with_capacity(4);
    if b > a {
        let slope = |y: f64| {
            let mut t = s.to_vec();
            t[i] = y;
            utility_derivative(game, mech, &t, i).unwrap_or(f64::NAN)
        };
        if slope(a) > 0.0 && slope(b) < 0.0 {
            if let Ok(root) = numeric::bisect(slope, a, b, 0.0) {
                candidates.push((root, utility_with(game, mech, &mut work, i, root)));
            }
        }
        let probe = |y: f64| {
            let mut t = s.to_vec();
            t[i] = y;
            games::utility_unchecked(game, mech, &t, i)
        };
        candidates.push(numeric::golden_section_max(probe, a, b, 1e-10 * (b - a)));
    }
    candidates.push((grid[k], values[k]));
    candidates.push((0.0, at_zero));
    // Earlier candidates win ties.
    let (signal, utility) = candidates
        .into_iter()
        .fold((0.0, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
    Ok(BestResponse { signal, utility, upper, bound, irregular: peaks > 1 })
}

/// A maximal unilateral deviation found by [`verify_equilibrium`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Deviation {
    pub player: usize,
    pub signal: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verification {
    pub is_equilibrium: bool,
    pub max_gain: f64,
    pub worst: Option<Deviation>,
}

/// Scan unilateral deviations of every player over `[0, ȳ]` and report the
/// largest utility gain. `ȳ` is the affordability bound, capped at
/// [`SIGNAL_CAP`]; half the grid is log-spaced in `[1e-9·ȳ, ȳ]`, half linear.
pub fn verify_equilibrium(
    game: &Game,
    mech: &dyn Mechanism,
    s: &[f64],
    grid_size: usize,
) -> Result<Verification> {
    mechanisms::check_profile(mech, s)?;
    games::check_sizes(game, s.len())?;
    let mut work = s.to_vec();
    let mut worst: Option<Deviation> = None;
    for i in 0..s.len() {
        let current = games::utility_unchecked(game, mech, s, i);
        let upper = largest_affordable(mech, s, i, game.players[i].budget.amount()).min(SIGNAL_CAP);
        let half = grid_size / 2;
        for y in numeric::hybrid_grid(upper, half, grid_size - half) {
            let gain = utility_with(game, mech, &mut work, i, y) - current;
            if worst.map_or(true, |w| gain > w.gain) {
                worst = Some(Deviation { player: i, signal: y, gain });
            }
        }
    }
    let max_gain = worst.map_or(0.0, |w| w.gain.max(0.0));
    // NaN gains (e.g. −∞ − −∞) must not pass as an equilibrium.
    let is_equilibrium = max_gain <= VERIFY_TOLERANCE && worst.map_or(true, |w| !w.gain.is_nan());
    Ok(Verification { is_equilibrium, max_gain, worst: worst.filter(|w| w.gain > 0.0 || w.gain.is_nan()) })
}

/// Player categories at an equilibrium `s` with allocation `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PlayerClass {
    /// `v(d) < c` and the utility derivative vanishes.
    A,
    /// `s_i = 0`, negative utility derivative and `v(0) < c`.
    B,
    /// `v(d) >= c`: the value is capped by the budget.
    Gamma,
    #[serde(rename = "unclassified")]
    Unclassified,
}

const CLASS_SLOPE_TOL: f64 = 1e-6;
const CLASS_BUDGET_SLACK: f64 = 1e-9;

/// Tag each player A, B, Γ or unclassified.
pub fn classify_players(game: &Game, mech: &dyn Mechanism, s: &[f64]) -> Result<Vec<PlayerClass>> {
    let d = mechanisms::allocate(mech, s)?;
    games::check_sizes(game, s.len())?;
    Ok((0..s.len())
        .map(|i| {
            let p = &game.players[i];
            let c = p.budget.amount();
            if p.valuation.value(d[i]) + CLASS_BUDGET_SLACK >= c {
                return PlayerClass::Gamma;
            }
            let slope = match utility_derivative(game, mech, s, i) {
                Ok(x) => x,
                Err(_) => return PlayerClass::Unclassified,
            };
            if slope.abs() <= CLASS_SLOPE_TOL {
                PlayerClass::A
            } else if s[i] == 0.0 && slope < 0.0 && p.valuation.value(0.0) < c {
                PlayerClass::B
            } else {
                PlayerClass::Unclassified
            }
        })
        .collect())
}

/// Tuning for [`find_equilibrium_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    /// Stop when no signal moves more than this (scaled by `max(1, ‖s‖∞)`).
    pub tolerance: f64,
    pub max_rounds: usize,
    /// Each update moves this fraction of the way to the best response.
    pub damping: f64,
    pub verify_grid: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { tolerance: 1e-8, max_rounds: 10_000, damping: 0.5, verify_grid: VERIFY_GRID }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub signals: Vec<f64>,
    pub allocation: Vec<f64>,
    /// Iteration settled and the deviation scan found no improvement.
    pub converged: bool,
    pub rounds: usize,
    pub max_gain: f64,
    pub classes: Vec<PlayerClass>,
    /// Some best response met a utility with several local maxima.
    pub irregular: bool,
}

/// [`find_equilibrium_with`] under [`SearchOptions::default`].
pub fn find_equilibrium(game: &Game, mech: &dyn Mechanism, init: &[f64]) -> Result<EquilibriumResult> {
    find_equilibrium_with(game, mech, init, SearchOptions::default())
}

/// Cyclic (Gauss-Seidel) best-response dynamics with damping.
///
/// Player `i` moves to `s_i + α(BR_i − s_i)`, clipped to what she can
/// afford. A player for whom no positive signal can pay off drops straight to
/// zero; a damped signal that lands within the tolerance of the best response's
/// boundary value snaps onto it. Non-convergence is reported through
/// `converged = false` with the last iterate.
pub fn find_equilibrium_with(
    game: &Game,
    mech: &dyn Mechanism,
    init: &[f64],
    opts: SearchOptions,
) -> Result<EquilibriumResult> {
    mechanisms::check_profile(mech, init)?;
    games::check_sizes(game, init.len())?;
    if init.iter().all(|&x| x == 0.0) {
        return Err(crate::Error::Domain("initial profile must have a positive signal".into()));
    }
    let n = init.len();
    let mut s = init.to_vec();
    let mut rounds = 0;
    let mut settled = false;
    let mut irregular = false;
    while rounds < opts.max_rounds {
        rounds += 1;
        let mut moved: f64 = 0.0;
        for i in 0..n {
            let old = s[i];
            let next = if !others_positive(&s, i) {
                if old > 0.0 {
                    old
                } else {
                    1.0
                }
            } else {
                let br = best_response(game, mech, i, &s)?;
                irregular |= br.irregular;
                if br.upper == 0.0 {
                    0.0
                } else {
                    let step = old + opts.damping * (br.signal - old);
                    let step = step.min(br.bound);
                    let tol = opts.tolerance * old.abs().max(1.0);
                    if (step - br.signal).abs() < tol && (br.signal == 0.0 || br.signal == br.bound) {
                        br.signal
                    } else {
                        step
                    }
                }
            };
            moved = moved.max((next - old).abs());
            s[i] = next;
        }
        if s.iter().all(|&x| x == 0.0) {
            s = init.to_vec();
            continue;
        }
        let scale = s.iter().copied().fold(1.0, f64::max);
        if moved < opts.tolerance * scale {
            settled = true;
            break;
        }
    }
    if settled {
        s = polish(game, mech, s, opts.tolerance)?;
    }
    let allocation = mechanisms::allocate(mech, &s)?;
    let check = verify_equilibrium(game, mech, &s, opts.verify_grid)?;
    let classes = classify_players(game, mech, &s)?;
    Ok(EquilibriumResult {
        converged: settled && check.is_equilibrium,
        signals: s,
        allocation,
        rounds,
        max_gain: check.max_gain,
        classes,
        irregular,
    })
}

/// Undamped best-response passes from a settled iterate, so that interior
/// signals satisfy their first-order conditions to near machine precision.
/// Falls back to the input if the passes drift instead of contracting.
fn polish(game: &Game, mech: &dyn Mechanism, start: Vec<f64>, tolerance: f64) -> Result<Vec<f64>> {
    let mut s = start.clone();
    for _ in 0..50 {
        let mut moved: f64 = 0.0;
        for i in 0..s.len() {
            if !others_positive(&s, i) {
                continue;
            }
            let br = best_response(game, mech, i, &s)?;
            let next = if br.upper == 0.0 { 0.0 } else { br.signal };
            moved = moved.max((next - s[i]).abs());
            s[i] = next;
        }
        let scale = s.iter().copied().fold(1.0, f64::max);
        let drift = s.iter().zip(&start).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if drift > 1e3 * tolerance * scale || s.iter().all(|&x| x == 0.0) {
            return Ok(start);
        }
        if moved <= 1e-15 * scale {
            break;
        }
    }
    Ok(s)
}
