//! Resource allocation mechanisms.
//!
//! A mechanism maps a profile of nonnegative signals to shares of a unit
//! resource and to nonnegative payments. Every built-in mechanism follows the
//! same zero-signal conventions, enforced here rather than in each rule:
//!
//! * the all-zero profile allocates nothing and charges nothing;
//! * a player with signal zero gets no share and pays nothing;
//! * a unique positive signaler receives the whole resource for free.
//!
//! Implementations of [`Mechanism`] therefore only ever see profiles with at
//! least two positive signals.

use std::sync::OnceLock;

use serde::Serialize;

use crate::numeric;
use crate::{Error, Result};

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 6] = ["kelly", "sh", "e2pys", "e2sr", "shr", "mb"];

/// An allocation rule paired with a payment rule.
pub trait Mechanism: Send + Sync {
    fn name(&self) -> &str;

    /// Fixed number of players, for mechanisms only defined for one size.
    fn player_count(&self) -> Option<usize> {
        None
    }

    /// Pay-your-signal: the payment of every player equals her signal.
    fn is_pys(&self) -> bool {
        false
    }

    /// Whether the generating profile is always an equilibrium of its own
    /// affinized game, as it is for concave allocations with convex payments.
    fn is_class_c(&self) -> bool {
        false
    }

    /// Share of player `i`. Called only with at least two positive signals.
    fn share(&self, s: &[f64], i: usize) -> f64;

    /// Payment of player `i`. Same precondition as [`Mechanism::share`].
    fn payment(&self, s: &[f64], i: usize) -> f64;

    /// Analytic `∂g_i(y, s_-i)/∂y` at `y = s_i`, when known. Called only when
    /// `s_-i` has a positive entry.
    fn share_slope(&self, _s: &[f64], _i: usize) -> Option<f64> {
        None
    }

    /// Analytic `∂p_i(y, s_-i)/∂y` at `y = s_i`, when known.
    fn payment_slope(&self, _s: &[f64], _i: usize) -> Option<f64> {
        None
    }
}

/// Look up a built-in mechanism by name.
pub fn builtin(name: &str) -> Result<Box<dyn Mechanism>> {
    let c = constants();
    Ok(match name.to_ascii_lowercase().as_str() {
        "kelly" => Box::new(Kelly),
        "sh" => Box::new(SanghaviHajek),
        "e2pys" => Box::new(E2Pys { beta: c.beta }),
        "e2sr" => Box::new(E2Sr { gamma: c.gamma }),
        "shr" => Box::new(ShRatio),
        "mb" => Box::new(MaheswaranBasar),
        _ => return Err(Error::UnknownMechanism(name.to_string())),
    })
}

/// Checks that `s` is a valid signal profile for `mech`.
pub fn check_profile(mech: &dyn Mechanism, s: &[f64]) -> Result<()> {
    if s.len() < 2 {
        return Err(Error::Domain(format!(
            "signal profile needs at least 2 players, got {}",
            s.len()
        )));
    }
    if let Some(expected) = mech.player_count() {
        if expected != s.len() {
            return Err(Error::PlayerCount {
                mechanism: mech.name().to_string(),
                expected,
                got: s.len(),
            });
        }
    }
    if let Some((i, x)) = s.iter().enumerate().find(|(_, x)| !(**x >= 0.0 && x.is_finite())) {
        return Err(Error::Domain(format!("signal {i} is {x}; signals must be finite and >= 0")));
    }
    Ok(())
}

fn others_positive(s: &[f64], i: usize) -> bool {
    s.iter().enumerate().any(|(j, &x)| j != i && x > 0.0)
}

/// Share of player `i` at `s`, applying the zero-signal conventions.
/// Assumes `s` has been validated.
pub(crate) fn share_of(mech: &dyn Mechanism, s: &[f64], i: usize) -> f64 {
    if s[i] <= 0.0 {
        0.0
    } else if !others_positive(s, i) {
        1.0
    } else {
        mech.share(s, i)
    }
}

/// Payment of player `i` at `s`, applying the zero-signal conventions.
pub(crate) fn payment_of(mech: &dyn Mechanism, s: &[f64], i: usize) -> f64 {
    if s[i] <= 0.0 || !others_positive(s, i) {
        0.0
    } else {
        mech.payment(s, i)
    }
}

/// Allocation at `s`. Returns the all-zero allocation for the zero profile.
pub fn allocate(mech: &dyn Mechanism, s: &[f64]) -> Result<Vec<f64>> {
    check_profile(mech, s)?;
    Ok((0..s.len()).map(|i| share_of(mech, s, i)).collect())
}

/// Payments at `s`.
pub fn payments(mech: &dyn Mechanism, s: &[f64]) -> Result<Vec<f64>> {
    check_profile(mech, s)?;
    Ok((0..s.len()).map(|i| payment_of(mech, s, i)).collect())
}

fn check_derivative_point(mech: &dyn Mechanism, s: &[f64], i: usize) -> Result<()> {
    check_profile(mech, s)?;
    if i >= s.len() {
        return Err(Error::Domain(format!("player index {i} out of range")));
    }
    if !others_positive(s, i) {
        return Err(Error::Domain(format!(
            "own-signal derivative of player {i} is undefined when every other signal is zero"
        )));
    }
    Ok(())
}

fn with_signal(s: &[f64], i: usize, y: f64) -> Vec<f64> {
    let mut t = s.to_vec();
    t[i] = y;
    t
}

/// `∂g_i(y, s_-i)/∂y` at `y = s_i`: analytic when the mechanism provides it,
/// otherwise a finite difference.
pub fn allocation_derivative(mech: &dyn Mechanism, s: &[f64], i: usize) -> Result<f64> {
    check_derivative_point(mech, s, i)?;
    Ok(match mech.share_slope(s, i) {
        Some(d) => d,
        None => numerical_allocation_derivative(mech, s, i),
    })
}

/// `∂p_i(y, s_-i)/∂y` at `y = s_i`.
pub fn payment_derivative(mech: &dyn Mechanism, s: &[f64], i: usize) -> Result<f64> {
    check_derivative_point(mech, s, i)?;
    Ok(match mech.payment_slope(s, i) {
        Some(d) => d,
        None => numerical_payment_derivative(mech, s, i),
    })
}

/// Finite-difference allocation derivative, ignoring any analytic formula.
pub fn numerical_allocation_derivative(mech: &dyn Mechanism, s: &[f64], i: usize) -> f64 {
    numeric::derivative(|y| share_of(mech, &with_signal(s, i, y), i), s[i])
}

/// Finite-difference payment derivative, ignoring any analytic formula.
pub fn numerical_payment_derivative(mech: &dyn Mechanism, s: &[f64], i: usize) -> f64 {
    numeric::derivative(|y| payment_of(mech, &with_signal(s, i, y), i), s[i])
}

/// `∫₀¹ ∏_j (1 − r_j t) dt`, evaluated exactly by expanding the product into
/// polynomial coefficients and integrating term by term.
pub fn sh_integral(ratios: &[f64]) -> Result<f64> {
    if let Some(r) = ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::Domain(format!("ratio {r} outside [0, 1]")));
    }
    Ok(product_integral(ratios.iter().copied()))
}

fn product_integral(ratios: impl Iterator<Item = f64>) -> f64 {
    let mut coeffs = vec![1.0];
    for r in ratios {
        if r == 0.0 {
            continue;
        }
        coeffs.push(0.0);
        for k in (1..coeffs.len()).rev() {
            coeffs[k] -= r * coeffs[k - 1];
        }
    }
    coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| c / (k + 1) as f64)
        .sum()
}

// ---------------------------------------------------------------------------
// Constants

/// LPoA constants of the two-player mechanisms and of the SH/ratio hybrid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MechanismConstants {
    pub beta: f64,
    pub gamma: f64,
    pub phi: f64,
}

impl MechanismConstants {
    /// Residual of the equation defining β.
    pub fn beta_residual(&self) -> f64 {
        pys_level(self.beta) - 0.5
    }

    /// Residual of the equation defining γ.
    pub fn gamma_residual(&self) -> f64 {
        sr_level(self.gamma) - 0.5
    }

    pub fn phi_residual(&self) -> f64 {
        self.phi * self.phi - self.phi - 1.0
    }
}

/// `(1/z)(1 − exp(−z/(z−1)))`; β is where this equals 1/2.
pub fn pys_level(z: f64) -> f64 {
    -(-z / (z - 1.0)).exp_m1() / z
}

/// `(1/z)(1 − exp(−z/(2(z−1))))`; γ is where this equals 1/2.
pub fn sr_level(z: f64) -> f64 {
    -(-z / (2.0 * (z - 1.0))).exp_m1() / z
}

const CONSTANT_BRACKET: (f64, f64) = (1.0 + 1e-4, 3.0);

/// Solve for β and γ by bisection on `[1 + 1e-4, 3]`; φ in closed form.
pub fn solve_constants() -> Result<MechanismConstants> {
    let (lo, hi) = CONSTANT_BRACKET;
    let beta = numeric::bisect(|z| pys_level(z) - 0.5, lo, hi, 0.0)?;
    let gamma = numeric::bisect(|z| sr_level(z) - 0.5, lo, hi, 0.0)?;
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    Ok(MechanismConstants { beta, gamma, phi })
}

/// Cached [`solve_constants`].
pub fn constants() -> MechanismConstants {
    static CONSTANTS: OnceLock<MechanismConstants> = OnceLock::new();
    *CONSTANTS.get_or_init(|| solve_constants().expect("constant equations change sign on the bracket"))
}

// ---------------------------------------------------------------------------
// Built-in mechanisms

fn rest_sum(s: &[f64], i: usize) -> f64 {
    s.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, x)| x).sum()
}

fn rest_max(s: &[f64], i: usize) -> f64 {
    s.iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &x)| x)
        .fold(0.0, f64::max)
}

fn two_player_check(s: &[f64]) {
    debug_assert_eq!(s.len(), 2, "two-player mechanism evaluated on {} players", s.len());
}

/// Proportional allocation, pay-your-signal.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kelly;

impl Mechanism for Kelly {
    fn name(&self) -> &str {
        "kelly"
    }
    fn is_pys(&self) -> bool {
        true
    }
    fn is_class_c(&self) -> bool {
        true
    }
    fn share(&self, s: &[f64], i: usize) -> f64 {
        s[i] / s.iter().sum::<f64>()
    }
    fn payment(&self, s: &[f64], i: usize) -> f64 {
        s[i]
    }
    fn share_slope(&self, s: &[f64], i: usize) -> Option<f64> {
        let c = rest_sum(s, i);
        Some(c / ((s[i] + c) * (s[i] + c)))
    }
    fn payment_slope(&self, _s: &[f64], _i: usize) -> Option<f64> {
        Some(1.0)
    }
}

/// Sanghavi-Hajek allocation,
/// `g_i = (s_i/m) ∫₀¹ ∏_{j≠i} (1 − (s_j/m) t) dt` with `m = max_ℓ s_ℓ`,
/// with pay-your-signal payments.
#[derive(Debug, Clone, Copy, Default)]
pub struct SanghaviHajek;

fn sh_share(s: &[f64], i: usize) -> f64 {
    let m = s.iter().copied().fold(0.0, f64::max);
    let ratios = s.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &x)| x / m);
    s[i] / m * product_integral(ratios)
}

fn sh_slope(s: &[f64], i: usize) -> f64 {
    let rival = rest_max(s, i);
    if s[i] <= rival {
        let ratios = s.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &x)| x / rival);
        product_integral(ratios) / rival
    } else {
        // g_i(y) = ∫₀¹ ∏(1 − s_j t / y) dt, so g_i'(y) = (g_i − ∏(1 − s_j / y)) / y.
        let y = s[i];
        let tail: f64 = s
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &x)| 1.0 - x / y)
            .product();
        (sh_share(s, i) - tail) / y
    }
}

impl Mechanism for SanghaviHajek {
    fn name(&self) -> &str {
        "sh"
    }
    fn is_pys(&self) -> bool {
        true
    }
    fn is_class_c(&self) -> bool {
        true
    }
    fn share(&self, s: &[f64], i: usize) -> f64 {
        sh_share(s, i)
    }
    fn payment(&self, s: &[f64], i: usize) -> f64 {
        s[i]
    }
    fn share_slope(&self, s: &[f64], i: usize) -> Option<f64> {
        Some(sh_slope(s, i))
    }
    fn payment_slope(&self, _s: &[f64], _i: usize) -> Option<f64> {
        Some(1.0)
    }
}

/// Two-player pay-your-signal mechanism whose allocation makes the master
/// ratio identically β on `s_i <= s_{3-i}`.
#[derive(Debug, Clone, Copy)]
pub struct E2Pys {
    pub beta: f64,
}

impl Default for E2Pys {
    fn default() -> Self {
        E2Pys { beta: constants().beta }
    }
}

impl E2Pys {
    fn rate(&self) -> f64 {
        self.beta / (self.beta - 1.0)
    }
}

impl Mechanism for E2Pys {
    fn name(&self) -> &str {
        "e2pys"
    }
    fn player_count(&self) -> Option<usize> {
        Some(2)
    }
    fn is_pys(&self) -> bool {
        true
    }
    fn is_class_c(&self) -> bool {
        true
    }
    fn share(&self, s: &[f64], i: usize) -> f64 {
        two_player_check(s);
        let (own, other) = (s[i], s[1 - i]);
        let b = self.beta;
        if own <= other {
            -(-self.rate() * own / other).exp_m1() / b
        } else {
            (b - 1.0) / b + (-self.rate() * other / own).exp() / b
        }
    }
    fn payment(&self, s: &[f64], i: usize) -> f64 {
        s[i]
    }
    fn share_slope(&self, s: &[f64], i: usize) -> Option<f64> {
        let (own, other) = (s[i], s[1 - i]);
        let b1 = self.beta - 1.0;
        Some(if own <= other {
            (-self.rate() * own / other).exp() / (b1 * other)
        } else {
            other / (b1 * own * own) * (-self.rate() * other / own).exp()
        })
    }
    fn payment_slope(&self, _s: &[f64], _i: usize) -> Option<f64> {
        Some(1.0)
    }
}

/// Two-player mechanism with a Gaussian-type allocation and signal-ratio
/// payments `p_i = s_i / s_{3-i}`.
///
/// Its allocation is not concave, so it is not flagged class C.
#[derive(Debug, Clone, Copy)]
pub struct E2Sr {
    pub gamma: f64,
}

impl Default for E2Sr {
    fn default() -> Self {
        E2Sr { gamma: constants().gamma }
    }
}

impl E2Sr {
    fn rate(&self) -> f64 {
        self.gamma / (2.0 * (self.gamma - 1.0))
    }
}

impl Mechanism for E2Sr {
    fn name(&self) -> &str {
        "e2sr"
    }
    fn player_count(&self) -> Option<usize> {
        Some(2)
    }
    fn share(&self, s: &[f64], i: usize) -> f64 {
        two_player_check(s);
        let (own, other) = (s[i], s[1 - i]);
        let g = self.gamma;
        if own <= other {
            let r = own / other;
            -(-self.rate() * r * r).exp_m1() / g
        } else {
            let r = other / own;
            (g - 1.0) / g + (-self.rate() * r * r).exp() / g
        }
    }
    fn payment(&self, s: &[f64], i: usize) -> f64 {
        s[i] / s[1 - i]
    }
    fn share_slope(&self, s: &[f64], i: usize) -> Option<f64> {
        let (own, other) = (s[i], s[1 - i]);
        let g1 = self.gamma - 1.0;
        Some(if own <= other {
            let r = own / other;
            own / (g1 * other * other) * (-self.rate() * r * r).exp()
        } else {
            let r = other / own;
            other * other / (g1 * own * own * own) * (-self.rate() * r * r).exp()
        })
    }
    fn payment_slope(&self, s: &[f64], i: usize) -> Option<f64> {
        Some(1.0 / s[1 - i])
    }
}

/// Two-player SH allocation combined with signal-ratio payments.
#[derive(Debug, Clone, Copy, Default)]
pub struct ShRatio;

impl Mechanism for ShRatio {
    fn name(&self) -> &str {
        "shr"
    }
    fn player_count(&self) -> Option<usize> {
        Some(2)
    }
    fn is_class_c(&self) -> bool {
        true
    }
    fn share(&self, s: &[f64], i: usize) -> f64 {
        two_player_check(s);
        sh_share(s, i)
    }
    fn payment(&self, s: &[f64], i: usize) -> f64 {
        s[i] / s[1 - i]
    }
    fn share_slope(&self, s: &[f64], i: usize) -> Option<f64> {
        Some(sh_slope(s, i))
    }
    fn payment_slope(&self, s: &[f64], i: usize) -> Option<f64> {
        Some(1.0 / s[1 - i])
    }
}

/// Proportional allocation with the Maheswaran-Basar payment for `h(z) = z`:
/// `p_i = C ∫₀^{s_i} dt / (t + C) = C ln((s_i + C)/C)`, `C = Σ_{j≠i} s_j`.
///
/// The payment is concave in the own signal, but in every affinized game the
/// utility derivative is positive below the generating signal and negative
/// above it, so the generating profile is still an equilibrium there. The
/// class-C flag records that property.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaheswaranBasar;

impl Mechanism for MaheswaranBasar {
    fn name(&self) -> &str {
        "mb"
    }
    fn is_class_c(&self) -> bool {
        true
    }
    fn share(&self, s: &[f64], i: usize) -> f64 {
        s[i] / s.iter().sum::<f64>()
    }
    fn payment(&self, s: &[f64], i: usize) -> f64 {
        let c = rest_sum(s, i);
        c * (s[i] / c).ln_1p()
    }
    fn share_slope(&self, s: &[f64], i: usize) -> Option<f64> {
        let c = rest_sum(s, i);
        Some(c / ((s[i] + c) * (s[i] + c)))
    }
    fn payment_slope(&self, s: &[f64], i: usize) -> Option<f64> {
        let c = rest_sum(s, i);
        Some(c / (s[i] + c))
    }
}
