//! Reference implementations used to check the library. Nothing here calls
//! into the code under test except for plain data types.
#![allow(dead_code)]

use std::f64::consts::PI;

use arena_core::games::{Budget, Game, Player, Valuation};
use rand::Rng;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    let mut rule = Vec::with_capacity(order);
    for k in 0..order {
        // Chebyshev-like initial guess, then Newton on P_order.
        let mut x = (PI * (k as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for m in 2..=order {
                let p2 = ((2 * m - 1) as f64 * x * p1 - (m - 1) as f64 * p0) / m as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = order as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule
}

pub fn gl_integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, order: usize) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gauss_legendre(order).iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F, a: f64, fa: f64, b: f64, fb: f64, m: f64, fm: f64, whole: f64, tol: f64, depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// SH share straight from its integral definition, by quadrature.
pub fn sh_share_by_quadrature(s: &[f64], i: usize) -> f64 {
    let top = s.iter().cloned().fold(0.0, f64::max);
    let integrand = |t: f64| {
        s.iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &sj)| 1.0 - sj / top * t)
            .product::<f64>()
    };
    s[i] / top * gl_integrate(integrand, 0.0, 1.0, 32)
}

/// Richardson-extrapolated central difference.
pub fn richardson_derivative<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
    let h = 1e-3 * x.abs().max(1e-3);
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let (d1, d2) = (d(h), d(h / 2.0));
    (4.0 * d2 - d1) / 3.0
}

/// Best liquid welfare over allocations on a grid of step `1/steps`,
/// giving out the whole resource. Two or three players.
pub fn brute_force_liquid_welfare(game: &Game, steps: usize) -> f64 {
    let lv = |i: usize, x: f64| {
        let p = &game.players[i];
        let v = p.valuation.value(x);
        match p.budget {
            Budget::Finite(c) => v.min(c),
            Budget::Unbounded => v,
        }
    };
    let h = 1.0 / steps as f64;
    let mut best = f64::NEG_INFINITY;
    match game.players.len() {
        2 => {
            for a in 0..=steps {
                let x = a as f64 * h;
                best = best.max(lv(0, x) + lv(1, 1.0 - x));
            }
        }
        3 => {
            for a in 0..=steps {
                for b in 0..=(steps - a) {
                    let (x, y) = (a as f64 * h, b as f64 * h);
                    best = best.max(lv(0, x) + lv(1, y) + lv(2, (1.0 - x - y).max(0.0)));
                }
            }
        }
        n => panic!("brute force supports 2 or 3 players, got {n}"),
    }
    best
}

pub fn random_valuation<R: Rng>(rng: &mut R) -> Valuation {
    match rng.gen_range(0..3) {
        0 => Valuation::Affine { slope: rng.gen_range(0.2..2.0), intercept: 0.0 },
        1 => Valuation::Power { scale: rng.gen_range(0.2..2.0), exponent: rng.gen_range(0.3..1.0) },
        _ => Valuation::Log { scale: rng.gen_range(0.2..2.0), rate: rng.gen_range(0.5..5.0) },
    }
}

pub fn random_budget<R: Rng>(rng: &mut R) -> Budget {
    if rng.gen_bool(0.3) {
        Budget::Unbounded
    } else {
        Budget::Finite(rng.gen_range(0.05..1.5))
    }
}

pub fn random_game<R: Rng>(rng: &mut R, n: usize) -> Game {
    let players = (0..n).map(|_| Player::new(random_valuation(rng), random_budget(rng))).collect();
    Game::new(players).unwrap()
}

/// Log-uniform positive signal profile with entries in `[1e-2, 1e2]`.
pub fn random_profile<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| 10f64.powf(rng.gen_range(-2.0..2.0))).collect()
}

pub fn golden_ratio() -> f64 {
    (1.0 + 5f64.sqrt()) / 2.0
}
