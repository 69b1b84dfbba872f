//! Small one-dimensional numerical routines shared by the solvers.

use crate::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// Iterates until the bracket cannot be split further in floating point or
/// `|f(mid)| <= residual`.
pub fn bisect<F>(f: F, mut lo: f64, mut hi: f64, residual: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::NotBracketed { lo, hi });
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid.abs() <= residual && residual > 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    let f_hi = f(hi);
    Ok(if f_lo.abs() <= f_hi.abs() { lo } else { hi })
}

/// Golden-section search for a maximum of `f` on `[a, b]`.
///
/// Returns the best point seen and its value. Exact for unimodal `f`; for
/// anything else it returns some local maximum inside the bracket.
pub fn golden_section_max<F>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let (mut best_x, mut best_f) = if fc >= fd { (c, fc) } else { (d, fd) };
    let mut iterations = 0;
    while (b - a).abs() > tol && iterations < 300 {
        iterations += 1;
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        if fc > best_f {
            best_x = c;
            best_f = fc;
        }
        if fd > best_f {
            best_x = d;
            best_f = fd;
        }
    }
    (best_x, best_f)
}

/// Numerical derivative of `f` at `y >= 0`.
///
/// Central difference with step `max(1e-6·|y|, 1e-9)`; when the left
/// stencil point would be negative a second-order forward stencil is used.
pub fn derivative<F>(f: F, y: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let h = (1e-6 * y.abs()).max(1e-9);
    if y - h >= 0.0 {
        (f(y + h) - f(y - h)) / (2.0 * h)
    } else {
        (-3.0 * f(y) + 4.0 * f(y + h) - f(y + 2.0 * h)) / (2.0 * h)
    }
}

/// Sorted, deduplicated grid on `[0, upper]`: `0`, `upper`, `log_points`
/// log-spaced points in `[1e-9·upper, upper]` and `linear_points` evenly
/// spaced interior points.
pub fn hybrid_grid(upper: f64, log_points: usize, linear_points: usize) -> Vec<f64> {
    let mut grid = Vec::with_capacity(log_points + linear_points + 2);
    grid.push(0.0);
    grid.push(upper);
    if upper > 0.0 {
        let lo = (1e-9 * upper).ln();
        let hi = upper.ln();
        for k in 0..log_points {
            let t = if log_points > 1 {
                k as f64 / (log_points - 1) as f64
            } else {
                0.0
            };
            grid.push((lo + t * (hi - lo)).exp().min(upper));
        }
        for k in 1..=linear_points {
            grid.push(upper * k as f64 / (linear_points + 1) as f64);
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..points)
                .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp())
                .collect()
        }
    }
}
