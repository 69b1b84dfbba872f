//! Players, games and welfare.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::mechanisms::{self, Mechanism};
use crate::{Error, Result};

/// A concave, nondecreasing valuation of a resource share in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Valuation {
    /// `slope·x + intercept`
    Affine {
        slope: f64,
        #[serde(default)]
        intercept: f64,
    },
    /// `scale·x^exponent`, exponent in (0, 1]
    Power { scale: f64, exponent: f64 },
    /// `scale·ln(1 + rate·x)`
    Log { scale: f64, rate: f64 },
}

impl Valuation {
    pub fn linear(slope: f64) -> Self {
        Valuation::Affine { slope, intercept: 0.0 }
    }

    pub fn zero() -> Self {
        Valuation::linear(0.0)
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Valuation::Affine { slope, intercept } => slope * x + intercept,
            Valuation::Power { scale, exponent } => scale * x.powf(exponent),
            Valuation::Log { scale, rate } => scale * (rate * x).ln_1p(),
        }
    }

    /// `v'(x)`; `+∞` at zero for a power valuation with exponent below one.
    pub fn slope(&self, x: f64) -> f64 {
        match *self {
            Valuation::Affine { slope, .. } => slope,
            Valuation::Power { scale, exponent } => {
                if exponent == 1.0 {
                    scale
                } else if x <= 0.0 {
                    f64::INFINITY
                } else {
                    scale * exponent * x.powf(exponent - 1.0)
                }
            }
            Valuation::Log { scale, rate } => scale * rate / (1.0 + rate * x),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Valuation::Affine { slope, intercept } => {
                slope >= 0.0 && intercept >= 0.0 && slope.is_finite() && intercept.is_finite()
            }
            Valuation::Power { scale, exponent } => {
                scale > 0.0 && scale.is_finite() && exponent > 0.0 && exponent <= 1.0
            }
            Valuation::Log { scale, rate } => {
                scale > 0.0 && rate > 0.0 && scale.is_finite() && rate.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidGame(format!("invalid valuation parameters {self:?}")))
        }
    }

    /// Smallest `x` with `v(x) >= level`, for `v(0) < level <= v(1)`.
    fn reach(&self, level: f64) -> f64 {
        match *self {
            Valuation::Affine { slope, intercept } => (level - intercept) / slope,
            Valuation::Power { scale, exponent } => (level / scale).powf(1.0 / exponent),
            Valuation::Log { scale, rate } => (level / scale).exp_m1() / rate,
        }
    }

    /// Largest `x` in `[0, cap]` whose marginal value exceeds `mu`
    /// (or reaches it, when `inclusive`).
    fn demand(&self, mu: f64, cap: f64, inclusive: bool) -> f64 {
        let above = |slope: f64| if inclusive { slope >= mu } else { slope > mu };
        match *self {
            Valuation::Affine { slope, .. } => {
                if above(slope) {
                    cap
                } else {
                    0.0
                }
            }
            Valuation::Power { scale, exponent } if exponent == 1.0 => {
                if above(scale) {
                    cap
                } else {
                    0.0
                }
            }
            Valuation::Power { scale, exponent } => {
                if mu <= 0.0 {
                    return cap;
                }
                (mu / (scale * exponent)).powf(1.0 / (exponent - 1.0)).clamp(0.0, cap)
            }
            Valuation::Log { scale, rate } => {
                if mu <= 0.0 {
                    return cap;
                }
                ((scale * rate / mu - 1.0) / rate).clamp(0.0, cap)
            }
        }
    }
}

/// A player's budget: a nonnegative real or unbounded.
///
/// Serialized as a JSON number or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Finite(f64),
    Unbounded,
}

impl Budget {
    /// The budget as an extended real.
    pub fn amount(&self) -> f64 {
        match *self {
            Budget::Finite(c) => c,
            Budget::Unbounded => f64::INFINITY,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, Budget::Unbounded)
    }

    /// `min(value, budget)`.
    pub fn cap(&self, value: f64) -> f64 {
        value.min(self.amount())
    }
}

impl PartialOrd for Budget {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.amount().partial_cmp(&other.amount())
    }
}

impl Serialize for Budget {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Budget::Finite(c) => serializer.serialize_f64(c),
            Budget::Unbounded => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Budget {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct BudgetVisitor;

        impl Visitor<'_> for BudgetVisitor {
            type Value = Budget;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a nonnegative number or \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Budget, E> {
                if v >= 0.0 && v.is_finite() {
                    Ok(Budget::Finite(v))
                } else {
                    Err(E::custom(format!("budget must be >= 0, got {v}")))
                }
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Budget, E> {
                Ok(Budget::Finite(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Budget, E> {
                self.visit_f64(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Budget, E> {
                match v {
                    "inf" | "Infinity" | "infinity" => Ok(Budget::Unbounded),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }

        deserializer.deserialize_any(BudgetVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Player {
    pub valuation: Valuation,
    pub budget: Budget,
}

impl Player {
    pub fn new(valuation: Valuation, budget: Budget) -> Self {
        Player { valuation, budget }
    }

    /// Player with valuation `x` and no budget.
    pub fn linear_unbounded() -> Self {
        Player::new(Valuation::linear(1.0), Budget::Unbounded)
    }

    /// `min(v(x), c)`.
    pub fn liquid_value(&self, x: f64) -> f64 {
        self.budget.cap(self.valuation.value(x))
    }
}

/// A resource allocation game: n >= 2 players.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Game {
    pub players: Vec<Player>,
}

impl Game {
    pub fn new(players: Vec<Player>) -> Result<Self> {
        let game = Game { players };
        game.validate()?;
        Ok(game)
    }

    pub fn validate(&self) -> Result<()> {
        if self.players.len() < 2 {
            return Err(Error::InvalidGame(format!(
                "a game needs at least 2 players, got {}",
                self.players.len()
            )));
        }
        for p in &self.players {
            p.valuation.validate()?;
            if let Budget::Finite(c) = p.budget {
                if !(c >= 0.0) {
                    return Err(Error::InvalidGame(format!("negative budget {c}")));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.players.len()
    }

    /// Parse and validate a game-spec JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let game: Game = serde_json::from_str(text)?;
        game.validate()?;
        Ok(game)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `u_i(s) = v_i(g_i(s)) − p_i(s)`, or `−∞` when the payment exceeds the
/// budget.
pub fn utility(game: &Game, mech: &dyn Mechanism, s: &[f64], i: usize) -> Result<f64> {
    mechanisms::check_profile(mech, s)?;
    check_sizes(game, s.len())?;
    Ok(utility_unchecked(game, mech, s, i))
}

pub(crate) fn utility_unchecked(game: &Game, mech: &dyn Mechanism, s: &[f64], i: usize) -> f64 {
    let player = &game.players[i];
    let pay = mechanisms::payment_of(mech, s, i);
    if pay > player.budget.amount() {
        return f64::NEG_INFINITY;
    }
    player.valuation.value(mechanisms::share_of(mech, s, i)) - pay
}

pub(crate) fn check_sizes(game: &Game, n: usize) -> Result<()> {
    if game.n() != n {
        return Err(Error::Domain(format!(
            "game has {} players but the profile has {n}",
            game.n()
        )));
    }
    Ok(())
}

/// `Σ min{v_i(d_i), c_i}`.
pub fn liquid_welfare(game: &Game, d: &[f64]) -> f64 {
    game.players.iter().zip(d).map(|(p, &x)| p.liquid_value(x)).sum()
}

/// `Σ v_i(d_i)`.
pub fn social_welfare(game: &Game, d: &[f64]) -> f64 {
    game.players.iter().zip(d).map(|(p, &x)| p.valuation.value(x)).sum()
}

/// Optimal (relaxed, `Σx_i <= 1`) allocation and its liquid welfare.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelfareOptimum {
    pub allocation: Vec<f64>,
    pub value: f64,
}

/// Share beyond which player `p` gains no liquid value: `0` when
/// `v(0) >= c`, otherwise `min(1, inf{x : v(x) >= c})`.
fn saturation(p: &Player) -> f64 {
    let c = p.budget.amount();
    let v = &p.valuation;
    if v.value(0.0) >= c {
        0.0
    } else if v.value(1.0) <= c {
        1.0
    } else {
        v.reach(c).clamp(0.0, 1.0)
    }
}

/// Maximize `Σ min{v_i(x_i), c_i}` over `x >= 0`, `Σx_i <= 1` by
/// water-filling on marginal values.
///
/// Each player's liquid value is concave with marginal `v_i'` up to her
/// saturation share and zero beyond it, so the optimum hands out the resource
/// by descending marginal value. Players whose marginal equals the final
/// water level are filled in index order.
pub fn optimal_liquid_welfare(game: &Game) -> WelfareOptimum {
    let caps: Vec<f64> = game.players.iter().map(saturation).collect();
    let demand_at = |mu: f64, inclusive: bool| -> Vec<f64> {
        game.players
            .iter()
            .zip(&caps)
            .map(|(p, &cap)| if cap > 0.0 { p.valuation.demand(mu, cap, inclusive) } else { 0.0 })
            .collect()
    };
    let total = |x: &[f64]| x.iter().sum::<f64>();

    let unconstrained = demand_at(0.0, false);
    let allocation = if total(&unconstrained) <= 1.0 {
        unconstrained
    } else {
        let mut lo = 0.0;
        let mut hi = 1.0;
        while total(&demand_at(hi, false)) > 1.0 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if total(&demand_at(mid, false)) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut x = demand_at(hi, false);
        let upper = demand_at(lo, false);
        let mut left = 1.0 - total(&x);
        for (xi, &ui) in x.iter_mut().zip(&upper) {
            if left <= 0.0 {
                break;
            }
            let extra = (ui - *xi).max(0.0).min(left);
            *xi += extra;
            left -= extra;
        }
        x
    };
    let value = liquid_welfare(game, &allocation);
    WelfareOptimum { allocation, value }
}
