//! Worst-case structure of budget-constrained games.
//!
//! For a signal profile `s` and a pivot player `j`, the affinized game
//! `G(s, j)` gives every player the affine valuation `λ_i(s)·z + κ_i(s)`,
//! where `λ_i = (∂p_i/∂y) / (∂g_i/∂y)` is the payment-to-allocation slope
//! ratio at `s`. The pivot is unbudgeted with `κ_j = 0`; every other player
//! has intercept and budget equal to her payment at `s`, so her liquid value
//! is pinned at that payment. The liquid price of anarchy of a mechanism is
//! bounded by the supremum over `s` of the master ratio
//!
//! ```text
//!     (Σ_{i≠1} p_i(s) + λ_1(s)) / (Σ_{i≠1} p_i(s) + λ_1(s)·g_1(s))
//! ```
//!
//! and equals it when `s` is always an equilibrium of `G(s, 1)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::equilibrium::{self, Deviation, PlayerClass, VERIFY_GRID};
use crate::games::{self, Budget, Game, Player, Valuation, WelfareOptimum};
use crate::mechanisms::{self, Mechanism};
use crate::numeric;
use crate::{Error, Result};

/// Allocation derivatives at or below this make `λ` undefined.
pub const DEGENERATE_SLOPE: f64 = 1e-14;

/// `λ_i(s) = (∂p_i/∂y) / (∂g_i/∂y)` at `y = s_i`.
pub fn lambda_coefficient(mech: &dyn Mechanism, s: &[f64], i: usize) -> Result<f64> {
    let dg = mechanisms::allocation_derivative(mech, s, i)?;
    if !(dg > DEGENERATE_SLOPE) {
        return Err(Error::Degenerate { player: i, derivative: dg });
    }
    Ok(mechanisms::payment_derivative(mech, s, i)? / dg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffinizedGame {
    pub game: Game,
    pub signals: Vec<f64>,
    pub pivot: usize,
    pub slopes: Vec<f64>,
}

/// Build `G(s, j)`.
pub fn affinize(mech: &dyn Mechanism, s: &[f64], j: usize) -> Result<AffinizedGame> {
    let pay = mechanisms::payments(mech, s)?;
    if j >= s.len() {
        return Err(Error::Domain(format!("pivot {j} out of range")));
    }
    let slopes = (0..s.len())
        .map(|i| lambda_coefficient(mech, s, i))
        .collect::<Result<Vec<_>>>()?;
    let players = (0..s.len())
        .map(|i| {
            if i == j {
                Player::new(Valuation::linear(slopes[i]), Budget::Unbounded)
            } else {
                Player::new(
                    Valuation::Affine { slope: slopes[i], intercept: pay[i] },
                    Budget::Finite(pay[i]),
                )
            }
        })
        .collect();
    Ok(AffinizedGame { game: Game::new(players)?, signals: s.to_vec(), pivot: j, slopes })
}

/// The master ratio with player 1 (index 0) as the pivot.
pub fn master_ratio(mech: &dyn Mechanism, s: &[f64]) -> Result<f64> {
    master_ratio_at(mech, s, 0)
}

/// `(Σ_{i≠j} p_i + λ_j) / (Σ_{i≠j} p_i + λ_j·g_j)`.
pub fn master_ratio_at(mech: &dyn Mechanism, s: &[f64], pivot: usize) -> Result<f64> {
    let pay = mechanisms::payments(mech, s)?;
    if pivot >= s.len() {
        return Err(Error::Domain(format!("pivot {pivot} out of range")));
    }
    let lambda = lambda_coefficient(mech, s, pivot)?;
    let share = mechanisms::share_of(mech, s, pivot);
    let rest: f64 = pay.iter().enumerate().filter(|&(i, _)| i != pivot).map(|(_, p)| p).sum();
    Ok((rest + lambda) / (rest + lambda * share))
}

/// The master ratio computed the long way: optimal liquid welfare of
/// `G(s, 1)` over its liquid welfare at the allocation `g(s)`.
pub fn master_ratio_via_welfare(mech: &dyn Mechanism, s: &[f64]) -> Result<f64> {
    let affine = affinize(mech, s, 0)?;
    let d = mechanisms::allocate(mech, s)?;
    let best = games::optimal_liquid_welfare(&affine.game).value;
    Ok(best / games::liquid_welfare(&affine.game, &d))
}

// ---------------------------------------------------------------------------
// Supremum scans

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanConfig {
    /// Range of `s_1 / s_2` (two players) or `s_1 / tail` (more players).
    pub ratio_range: (f64, f64),
    pub points: usize,
    /// Overall scales applied to each two-player ratio profile.
    pub scales: Vec<f64>,
    /// Seeded random profiles added for three or more players.
    pub random_profiles: usize,
    pub seed: u64,
    /// Passes of coordinate-wise golden-section refinement.
    pub refine_passes: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            ratio_range: (1e-8, 1e8),
            points: 1601,
            scales: vec![1e-3, 1.0, 1e3],
            random_profiles: 2000,
            seed: 7,
            refine_passes: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineStep {
    pub pass: usize,
    pub coordinate: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    /// Best master ratio evaluated; a lower estimate of the supremum.
    pub sup_estimate: f64,
    pub argmax: Vec<f64>,
    pub evaluations: usize,
    /// Profiles skipped because the allocation derivative vanished.
    pub rejected: usize,
    pub trace: Vec<RefineStep>,
    /// Best distinct sweep profiles, highest ratio first.
    pub leaders: Vec<(Vec<f64>, f64)>,
}

/// One evaluated scan profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanPoint {
    pub profile: Vec<f64>,
    pub ratio: f64,
}

/// Profile family `(r·t, t, …, t)` with the tail summing to one, so that
/// `r = s_1 / Σ_{i≥2} s_i`; for two players `(r, 1)`.
pub fn ratio_profile(n: usize, r: f64) -> Vec<f64> {
    let tail = 1.0 / (n - 1) as f64;
    let mut s = vec![tail; n];
    s[0] = r;
    s
}

/// Master ratio along [`ratio_profile`] for `points` log-spaced `r` in
/// `[lo, hi]`. Degenerate profiles are dropped.
pub fn ratio_sweep(mech: &dyn Mechanism, n: usize, lo: f64, hi: f64, points: usize) -> Vec<ScanPoint> {
    numeric::log_space(lo, hi, points)
        .into_par_iter()
        .filter_map(|r| {
            let profile = ratio_profile(n, r);
            master_ratio(mech, &profile).ok().map(|ratio| ScanPoint { profile, ratio })
        })
        .collect()
}

fn scan_profiles(n: usize, cfg: &ScanConfig) -> Vec<Vec<f64>> {
    let (lo, hi) = cfg.ratio_range;
    let ratios = numeric::log_space(lo, hi, cfg.points);
    let mut profiles = Vec::new();
    if n == 2 {
        for &scale in &cfg.scales {
            profiles.extend(ratios.iter().map(|&r| vec![r * scale, scale]));
        }
        return profiles;
    }
    // Player 1 against an equal tail.
    profiles.extend(ratios.iter().map(|&r| ratio_profile(n, r)));
    // Player 1 against a single rival, the rest dormant or nearly so.
    for dormant in [0.0, 1e-3, 1e-1] {
        profiles.extend(ratios.iter().map(|&r| {
            let mut s = vec![dormant; n];
            s[0] = r;
            s[1] = 1.0;
            s
        }));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.random_profiles {
        let s: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.gen_range(-4.0..4.0))).collect();
        profiles.push(s);
    }
    profiles
}

/// Estimate `sup_s master_ratio(mech, s)` over structured profile families,
/// then refine the best profile coordinate by coordinate with golden-section
/// search in log-signal space.
///
/// The result is the best value actually evaluated, hence a lower estimate of
/// the supremum.
pub fn lpoa_upper_scan(mech: &dyn Mechanism, n: usize, cfg: &ScanConfig) -> Result<ScanResult> {
    if n < 2 {
        return Err(Error::Domain(format!("scan needs at least 2 players, got {n}")));
    }
    if let Some(expected) = mech.player_count() {
        if expected != n {
            return Err(Error::PlayerCount { mechanism: mech.name().to_string(), expected, got: n });
        }
    }
    let profiles = scan_profiles(n, cfg);
    let values: Vec<Option<f64>> = profiles
        .par_iter()
        .map(|s| master_ratio(mech, s).ok().filter(|r| r.is_finite()))
        .collect();
    let evaluations = profiles.len();
    let rejected = values.iter().filter(|v| v.is_none()).count();

    let mut ranked: Vec<(usize, f64)> =
        values.iter().enumerate().filter_map(|(k, v)| v.map(|r| (k, r))).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let leaders: Vec<(Vec<f64>, f64)> =
        ranked.iter().take(8).map(|&(k, r)| (profiles[k].clone(), r)).collect();
    let Some(&(first, mut best)) = ranked.first() else {
        return Ok(ScanResult {
            sup_estimate: f64::NAN,
            argmax: Vec::new(),
            evaluations,
            rejected,
            trace: Vec::new(),
            leaders,
        });
    };
    let mut argmax = profiles[first].clone();

    let mut trace = Vec::new();
    let objective = |s: &[f64]| master_ratio(mech, s).ok().filter(|r| r.is_finite()).unwrap_or(f64::NEG_INFINITY);
    let mut extra_evaluations = 0;
    for pass in 0..cfg.refine_passes {
        let width = 2.0 / (pass + 1) as f64;
        for k in 0..n {
            if argmax[k] <= 0.0 {
                continue;
            }
            let centre = argmax[k].ln();
            let probe = |t: f64| {
                let mut s = argmax.clone();
                s[k] = t.exp();
                objective(&s)
            };
            let (t, value) = numeric::golden_section_max(probe, centre - width, centre + width, 1e-12);
            extra_evaluations += 60;
            if value > best {
                argmax[k] = t.exp();
                best = objective(&argmax);
                trace.push(RefineStep { pass, coordinate: k, ratio: best });
            }
        }
    }
    Ok(ScanResult {
        sup_estimate: master_ratio(mech, &argmax)?,
        argmax,
        evaluations: evaluations + extra_evaluations,
        rejected,
        trace,
        leaders,
    })
}

// ---------------------------------------------------------------------------
// Witnesses and per-game LPoA

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessReport {
    pub signals: Vec<f64>,
    /// `s` verified as an equilibrium of `G(s, 1)`.
    pub certified: bool,
    /// Master ratio at `s`; a valid LPoA lower bound when certified.
    pub ratio: f64,
    pub max_gain: f64,
    pub deviation: Option<Deviation>,
}

/// Check whether `s` is an equilibrium of `G(s, 1)`; if so the master ratio
/// at `s` is a liquid price of anarchy lower bound for the mechanism.
pub fn lower_bound_witness(mech: &dyn Mechanism, s: &[f64]) -> Result<WitnessReport> {
    let affine = affinize(mech, s, 0)?;
    let ratio = master_ratio(mech, s)?;
    let check = equilibrium::verify_equilibrium(&affine.game, mech, s, VERIFY_GRID)?;
    Ok(WitnessReport {
        signals: s.to_vec(),
        certified: check.is_equilibrium,
        ratio,
        max_gain: check.max_gain,
        deviation: check.worst,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoundEquilibrium {
    pub signals: Vec<f64>,
    pub allocation: Vec<f64>,
    pub liquid_welfare: f64,
    pub social_welfare: f64,
    /// Optimal liquid welfare over the liquid welfare here.
    pub ratio: f64,
    pub classes: Vec<PlayerClass>,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameLpoa {
    /// Worst ratio over the equilibria found. Equilibrium search is not
    /// exhaustive, so this is a lower estimate of the game's LPoA.
    pub lpoa: f64,
    pub optimum: WelfareOptimum,
    pub equilibria: Vec<FoundEquilibrium>,
    pub attempts: usize,
}

/// Default starting profiles: uniform, one-hot bumps, then seeded random
/// profiles, eight in total.
pub fn default_inits(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut inits = vec![vec![1.0; n]];
    for k in 0..n.min(3) {
        let mut s = vec![1.0; n];
        s[k] = 2.0;
        inits.push(s);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while inits.len() < 8 {
        inits.push((0..n).map(|_| rng.gen_range(0.1..2.0)).collect());
    }
    inits
}

fn welfare_ratio(best: f64, at_eq: f64) -> f64 {
    if at_eq > 0.0 {
        best / at_eq
    } else if best > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

/// Liquid price of anarchy of `game` over the equilibria reached from
/// `inits`.
pub fn game_lpoa(game: &Game, mech: &dyn Mechanism, inits: &[Vec<f64>]) -> Result<GameLpoa> {
    let optimum = games::optimal_liquid_welfare(game);
    let results = inits
        .par_iter()
        .map(|init| equilibrium::find_equilibrium(game, mech, init))
        .collect::<Result<Vec<_>>>()?;
    let mut equilibria: Vec<FoundEquilibrium> = Vec::new();
    for eq in results.into_iter().filter(|e| e.converged) {
        let duplicate = equilibria.iter().any(|f| {
            f.signals.iter().zip(&eq.signals).all(|(a, b)| (a - b).abs() <= 1e-6 * a.abs().max(1.0))
        });
        if duplicate {
            continue;
        }
        let lw = games::liquid_welfare(game, &eq.allocation);
        equilibria.push(FoundEquilibrium {
            liquid_welfare: lw,
            social_welfare: games::social_welfare(game, &eq.allocation),
            ratio: welfare_ratio(optimum.value, lw),
            signals: eq.signals,
            allocation: eq.allocation,
            classes: eq.classes,
            rounds: eq.rounds,
        });
    }
    if equilibria.is_empty() {
        return Err(Error::NoEquilibrium(inits.len()));
    }
    let lpoa = equilibria.iter().map(|e| e.ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(GameLpoa { lpoa, optimum, equilibria, attempts: inits.len() })
}

// ---------------------------------------------------------------------------
// Welfare accounting against the affinized game

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaReport {
    pub pivot: usize,
    pub classes: Vec<PlayerClass>,
    pub deltas: Vec<f64>,
    pub total: f64,
    /// `Σδ <= 1e-9`.
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DeltaOutcome {
    /// Every player is budget-capped: equilibrium welfare is optimal.
    NotApplicable,
    Computed(DeltaReport),
}

/// Per-player welfare differences between `game` and `G(s, i*)`:
///
/// `δ(i) = min{v_i(x_i), c_i} − min{ṽ_i(x̃_i), c̃_i} − min{v_i(d_i), c_i} + min{ṽ_i(d_i), c̃_i}`
///
/// with `d = g(s)`, `x` the optimal allocation of `game`, `x̃` the whole
/// resource to `i*`, and `i*` the lowest-index maximizer of `λ` over
/// players in A ∪ B. A nonpositive sum is what makes the affinized game at
/// least as bad as `game`.
pub fn delta_diagnostic(game: &Game, mech: &dyn Mechanism, s: &[f64], x_opt: &[f64]) -> Result<DeltaOutcome> {
    games::check_sizes(game, s.len())?;
    if x_opt.len() != s.len() {
        return Err(Error::Domain("optimal allocation has the wrong length".into()));
    }
    let classes = equilibrium::classify_players(game, mech, s)?;
    let mut pivot: Option<(usize, f64)> = None;
    for (i, class) in classes.iter().enumerate() {
        if matches!(class, PlayerClass::A | PlayerClass::B) {
            let lambda = lambda_coefficient(mech, s, i)?;
            if pivot.map_or(true, |(_, best)| lambda > best) {
                pivot = Some((i, lambda));
            }
        }
    }
    let Some((pivot, _)) = pivot else {
        return Ok(DeltaOutcome::NotApplicable);
    };
    let affine = affinize(mech, s, pivot)?;
    let d = mechanisms::allocate(mech, s)?;
    let deltas: Vec<f64> = (0..s.len())
        .map(|i| {
            let original = &game.players[i];
            let affinized = &affine.game.players[i];
            let whole = if i == pivot { 1.0 } else { 0.0 };
            original.liquid_value(x_opt[i]) - affinized.liquid_value(whole) - original.liquid_value(d[i])
                + affinized.liquid_value(d[i])
        })
        .collect();
    let total = deltas.iter().sum();
    Ok(DeltaOutcome::Computed(DeltaReport { pivot, classes, deltas, total, holds: total <= 1e-9 }))
}
