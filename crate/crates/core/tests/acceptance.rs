//! End-to-end checks of the headline numbers. Runs as a plain binary and
//! prints one PASS/FAIL line per check.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;

use arena_core::constructions::{budget_aware_games, pys_envelope, pinned_budget_games};
use arena_core::equilibrium::{self, VERIFY_GRID};
use arena_core::games;
use arena_core::Error;
use arena_core::lpoa::{self, DeltaOutcome, ScanConfig};
use arena_core::mechanisms::{
    self, builtin, constants, E2Pys, E2Sr, Kelly, MaheswaranBasar, Mechanism, SanghaviHajek, ShRatio,
    BUILTIN_NAMES,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn constants_check() -> Outcome {
    let c = constants();
    ensure!((c.beta - 1.792).abs() <= 2e-3, "beta = {}", c.beta);
    ensure!((c.gamma - 1.529).abs() <= 2e-3, "gamma = {}", c.gamma);
    ensure!(c.beta_residual().abs() < 1e-12, "beta residual {:e}", c.beta_residual());
    ensure!(c.gamma_residual().abs() < 1e-12, "gamma residual {:e}", c.gamma_residual());
    ensure!((c.phi - 1.618_033_988_7).abs() <= 1e-9, "phi = {}", c.phi);
    // Residuals again from the defining equations written out here.
    let beta_eq = (1.0 - (-c.beta / (c.beta - 1.0)).exp()) / c.beta - 0.5;
    let gamma_eq = (1.0 - (-c.gamma / (2.0 * (c.gamma - 1.0))).exp()) / c.gamma - 0.5;
    ensure!(beta_eq.abs() < 1e-12 && gamma_eq.abs() < 1e-12, "independent residuals {beta_eq:e} {gamma_eq:e}");
    Ok(format!("beta={:.12} gamma={:.12} phi={:.12}", c.beta, c.gamma, c.phi))
}

fn kelly_check() -> Outcome {
    let scan = lpoa::lpoa_upper_scan(&Kelly, 2, &ScanConfig::default()).map_err(|e| e.to_string())?;
    ensure!(
        (1.999..=2.0 + 1e-9).contains(&scan.sup_estimate),
        "scan sup {} at {:?}",
        scan.sup_estimate,
        scan.argmax
    );
    let mut worst: f64 = 0.0;
    for (k, r) in mechanisms_grid(10_000).into_iter().enumerate() {
        let c = [0.1, 1.0, 5.0, 20.0][k % 4];
        let s1 = r * c;
        let n = 2 + k % 3;
        let mut s = vec![c / (n - 1) as f64; n];
        s[0] = s1;
        let ratio = lpoa::master_ratio(&Kelly, &s).map_err(|e| e.to_string())?;
        let closed = 2.0 - s1 * s1 / (c * c + s1 * c + s1 * s1);
        worst = worst.max((ratio - closed).abs());
    }
    ensure!(worst <= 1e-10, "closed form off by {worst:e}");
    let w = lpoa::lower_bound_witness(&Kelly, &[1e-4, 1.0]).map_err(|e| e.to_string())?;
    ensure!(w.certified && w.ratio >= 1.999, "witness {w:?}");
    Ok(format!("scan sup {:.12}, closed-form max error {:.1e}, witness {:.9}", scan.sup_estimate, worst, w.ratio))
}

fn mechanisms_grid(points: usize) -> Vec<f64> {
    arena_core::numeric::log_space(1e-6, 1e6, points)
}

fn sh_check() -> Outcome {
    let w = lpoa::lower_bound_witness(&SanghaviHajek, &[1e-3, 1.0]).map_err(|e| e.to_string())?;
    ensure!(w.certified && w.ratio >= 2.99, "witness {w:?}");
    let mut sups = Vec::new();
    for n in 2..=6 {
        let scan = lpoa::lpoa_upper_scan(&SanghaviHajek, n, &ScanConfig::default()).map_err(|e| e.to_string())?;
        ensure!(scan.sup_estimate <= 3.0 + 1e-9, "n={n}: scan sup {} at {:?}", scan.sup_estimate, scan.argmax);
        ensure!(scan.sup_estimate >= 2.99, "n={n}: scan sup only {}", scan.sup_estimate);
        sups.push(format!("{:.9}", scan.sup_estimate));
    }
    Ok(format!("witness {:.6}, scan sups n=2..6 [{}]", w.ratio, sups.join(", ")))
}

/// Largest deviation from `level` over profiles with `s1 <= s2`, and the
/// largest ratio with `s1 > s2` together with the count of `s1 > s2`
/// profiles skipped because the allocation derivative vanished.
fn two_player_branches(mech: &dyn Mechanism, level: f64, seed: u64) -> Result<(f64, f64, usize), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut below, mut above, mut skipped) = (0.0f64, f64::NEG_INFINITY, 0);
    for _ in 0..1000 {
        let s2 = 10f64.powf(rng.gen_range(-2.0..2.0));
        let s1 = s2 * rng.gen_range(1e-3..=1.0);
        let r = lpoa::master_ratio(mech, &[s1, s2]).map_err(|e| e.to_string())?;
        below = below.max((r - level).abs());
        let s1 = s2 * 10f64.powf(rng.gen_range(1e-9..2.0));
        match lpoa::master_ratio(mech, &[s1, s2]) {
            Ok(r) => above = above.max(r),
            Err(Error::Degenerate { .. }) => skipped += 1,
            Err(e) => return Err(e.to_string()),
        }
    }
    Ok((below, above, skipped))
}

fn e2pys_check() -> Outcome {
    let m = E2Pys::default();
    let (below, above, skipped) = two_player_branches(&m, m.beta, 41)?;
    ensure!(below <= 1e-9, "s1<=s2 branch off beta by {below:e}");
    ensure!(above <= m.beta + 1e-9, "s1>s2 branch reaches {above}");
    let w = lpoa::lower_bound_witness(&m, &[0.5, 1.0]).map_err(|e| e.to_string())?;
    ensure!(w.certified && w.ratio >= m.beta - 1e-6, "witness {w:?}");
    Ok(format!(
        "|ratio-beta| <= {below:.1e} below diagonal, max {above:.12} above ({skipped} degenerate), witness {:.12}",
        w.ratio
    ))
}

fn e2sr_check() -> Outcome {
    let m = E2Sr::default();
    let (below, above, skipped) = two_player_branches(&m, m.gamma, 43)?;
    ensure!(below <= 1e-9, "s1<=s2 branch off gamma by {below:e}");
    ensure!(above <= m.gamma + 1e-9, "s1>s2 branch reaches {above}");
    let w = lpoa::lower_bound_witness(&m, &[1.0, 1.0]).map_err(|e| e.to_string())?;
    let witness = if w.certified {
        format!("witness certified at {:.9}", w.ratio)
    } else {
        format!("witness not certified (gain {:.3e} via {:?})", w.max_gain, w.deviation)
    };
    Ok(format!("|ratio-gamma| <= {below:.1e} below diagonal, max {above:.12} above ({skipped} degenerate); {witness}"))
}

fn shr_check() -> Outcome {
    let scan = lpoa::lpoa_upper_scan(&ShRatio, 2, &ScanConfig::default()).map_err(|e| e.to_string())?;
    let ratio = scan.argmax[1] / scan.argmax[0];
    // Stationary point of (r² + 2r)/(r² + 1): r² − r − 1 = 0.
    let r_star = (1.0 + 5f64.sqrt()) / 2.0;
    let peak = (r_star * r_star + 2.0 * r_star) / (r_star * r_star + 1.0);
    ensure!((scan.sup_estimate - peak).abs() <= 1e-6, "scan peak {} vs {peak}", scan.sup_estimate);
    ensure!((ratio - r_star).abs() <= 1e-4, "argmax ratio {ratio} vs {r_star}");
    let mut worst: f64 = 0.0;
    for r in arena_core::numeric::log_space(1.0, 1e4, 2000) {
        let got = lpoa::master_ratio(&ShRatio, &[1.0, r]).map_err(|e| e.to_string())?;
        worst = worst.max((got - (r * r + 2.0 * r) / (r * r + 1.0)).abs());
    }
    ensure!(worst <= 1e-9, "ratio formula off by {worst:e}");
    Ok(format!("peak {:.12} at s2/s1 = {:.9} (analytic {:.12} at {:.9})", scan.sup_estimate, ratio, peak, r_star))
}

fn thm1_check() -> Outcome {
    let mut parts = Vec::new();
    for n in [2usize, 3, 5, 10] {
        let r = pinned_budget_games(&Kelly, n).map_err(|e| e.to_string())?;
        let target = 2.0 - 1.0 / n as f64;
        ensure!((r.bound - target).abs() <= 1e-6, "n={n}: bound {} vs {target}", r.bound);
        ensure!(r.shared_equilibrium, "n={n}: shared equilibrium failed: {:?} / {:?}", r.g1.verification, r.g2.verification);
        parts.push(format!("n={n}: {:.9}", r.bound));
    }
    Ok(parts.join(", "))
}

fn budget_aware_check() -> Outcome {
    let mut parts = Vec::new();
    for n in [2usize, 3] {
        let r = budget_aware_games(&Kelly, n).map_err(|e| e.to_string())?;
        ensure!((r.bound - 4.0 / 3.0).abs() <= 1e-6, "n={n}: bound {}", r.bound);
        ensure!(r.shared_equilibrium, "n={n}: shared equilibrium failed");
        parts.push(format!("n={n}: {:.9}", r.bound));
    }
    Ok(parts.join(", "))
}

fn class_c_check() -> Outcome {
    let mechs: Vec<(Box<dyn Mechanism>, &[usize])> = vec![
        (Box::new(Kelly), &[2, 3, 4]),
        (Box::new(SanghaviHajek), &[2, 3, 4]),
        (Box::new(E2Pys::default()), &[2]),
        (Box::new(MaheswaranBasar), &[2, 3, 4]),
    ];
    let mut parts = Vec::new();
    let mut failures = Vec::new();
    for (k, (mech, sizes)) in mechs.iter().enumerate() {
        ensure!(mech.is_class_c(), "{} not flagged class C", mech.name());
        let mut rng = ChaCha8Rng::seed_from_u64(900 + k as u64);
        let (mut worst, mut bad) = (0.0f64, 0);
        for t in 0..100 {
            let s = common::random_profile(&mut rng, sizes[t % sizes.len()]);
            let w = lpoa::lower_bound_witness(mech.as_ref(), &s).map_err(|e| e.to_string())?;
            if w.max_gain > 1e-7 {
                if bad == 0 {
                    failures.push(format!("{} at {s:?} gains {:.3e} via {:?}", mech.name(), w.max_gain, w.deviation));
                }
                bad += 1;
            }
            worst = worst.max(w.max_gain);
        }
        parts.push(format!("{} {bad}/100 violations, max gain {worst:.1e}", mech.name()));
    }
    ensure!(failures.is_empty(), "{}; first violations: {}", parts.join(", "), failures.join("; "));
    Ok(parts.join(", "))
}

fn random_mechanism_profile(rng: &mut ChaCha8Rng) -> (Box<dyn Mechanism>, Vec<f64>) {
    let name = BUILTIN_NAMES[rng.gen_range(0..BUILTIN_NAMES.len())];
    let mech = builtin(name).unwrap();
    let n = mech.player_count().unwrap_or_else(|| rng.gen_range(2..=5));
    let s = common::random_profile(rng, n);
    (mech, s)
}

fn welfare_identity_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let (mech, s) = random_mechanism_profile(&mut rng);
        let direct = lpoa::master_ratio(mech.as_ref(), &s).map_err(|e| e.to_string())?;
        let welfare = lpoa::master_ratio_via_welfare(mech.as_ref(), &s).map_err(|e| e.to_string())?;
        ensure!((direct - welfare).abs() <= 1e-9, "{} at {s:?}: {direct} vs {welfare}", mech.name());
        worst = worst.max((direct - welfare).abs());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut games_checked, mut attempts, mut not_applicable) = (0, 0, 0);
    let mut max_total = f64::NEG_INFINITY;
    while games_checked < 50 && attempts < 500 {
        attempts += 1;
        let n = rng.gen_range(2..=4);
        let game = common::random_game(&mut rng, n);
        let mech: Box<dyn Mechanism> = if rng.gen_bool(0.5) { Box::new(Kelly) } else { Box::new(SanghaviHajek) };
        let eq = equilibrium::find_equilibrium(&game, mech.as_ref(), &vec![1.0; n]).map_err(|e| e.to_string())?;
        if !eq.converged {
            continue;
        }
        let check = equilibrium::verify_equilibrium(&game, mech.as_ref(), &eq.signals, VERIFY_GRID)
            .map_err(|e| e.to_string())?;
        if !check.is_equilibrium {
            continue;
        }
        games_checked += 1;
        let x_opt = games::optimal_liquid_welfare(&game).allocation;
        match lpoa::delta_diagnostic(&game, mech.as_ref(), &eq.signals, &x_opt).map_err(|e| e.to_string())? {
            DeltaOutcome::NotApplicable => not_applicable += 1,
            DeltaOutcome::Computed(report) => {
                ensure!(
                    report.holds,
                    "{} game {game:?} at {:?}: sum delta {:e}, classes {:?}",
                    mech.name(),
                    eq.signals,
                    report.total,
                    report.classes
                );
                max_total = max_total.max(report.total);
            }
        }
    }
    ensure!(games_checked == 50, "only {games_checked} verified equilibria in {attempts} games");
    Ok(format!(
        "identity max error {worst:.1e} over 500 profiles; {games_checked} games, max sum delta {max_total:.2e}, {not_applicable} all-capped"
    ))
}

fn oracle_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut sh_err: f64 = 0.0;
    for _ in 0..400 {
        let n = rng.gen_range(2..=8);
        let s = common::random_profile(&mut rng, n);
        let ratios: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let exact = mechanisms::sh_integral(&ratios).map_err(|e| e.to_string())?;
        let quad = common::gl_integrate(|t| ratios.iter().map(|r| 1.0 - r * t).product(), 0.0, 1.0, 32);
        sh_err = sh_err.max((exact - quad).abs());
        for i in 0..n {
            let share = SanghaviHajek.share(&s, i);
            sh_err = sh_err.max((share - common::sh_share_by_quadrature(&s, i)).abs());
        }
    }
    ensure!(sh_err <= 1e-10, "SH exact vs quadrature {sh_err:e}");

    let mut deriv_err: f64 = 0.0;
    for _ in 0..300 {
        let (mech, s) = random_mechanism_profile(&mut rng);
        for i in 0..s.len() {
            let g = |y: f64| {
                let mut t = s.clone();
                t[i] = y;
                mech.share(&t, i)
            };
            let p = |y: f64| {
                let mut t = s.clone();
                t[i] = y;
                mech.payment(&t, i)
            };
            for (analytic, numeric) in [
                (mechanisms::allocation_derivative(mech.as_ref(), &s, i), common::richardson_derivative(g, s[i])),
                (mechanisms::payment_derivative(mech.as_ref(), &s, i), common::richardson_derivative(p, s[i])),
            ] {
                let analytic = analytic.map_err(|e| e.to_string())?;
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-300);
                ensure!(rel <= 1e-6, "{} at {s:?} player {i}: {analytic} vs {numeric}", mech.name());
                deriv_err = deriv_err.max(rel);
            }
        }
    }

    let mut wf_err: f64 = 0.0;
    for _ in 0..60 {
        let n = rng.gen_range(2..=3);
        let game = common::random_game(&mut rng, n);
        let fast = games::optimal_liquid_welfare(&game).value;
        let brute = common::brute_force_liquid_welfare(&game, 1000);
        ensure!(fast >= brute - 1e-12, "water-filling {fast} below grid {brute}");
        ensure!(fast - brute <= 2e-3, "water-filling {fast} vs grid {brute}");
        wf_err = wf_err.max(fast - brute);
    }
    Ok(format!("SH {sh_err:.1e}, derivatives rel {deriv_err:.1e}, water-filling {wf_err:.1e}"))
}

fn envelope_check() -> Outcome {
    let m = E2Pys::default();
    let mut worst: f64 = 0.0;
    for k in 0..=1000 {
        let y = k as f64 / 1000.0;
        let env = pys_envelope(m.beta, y).map_err(|e| e.to_string())?;
        let share = mechanisms::allocate(&m, &[y, 1.0]).map_err(|e| e.to_string())?[0];
        worst = worst.max((env - share).abs());
    }
    ensure!(worst <= 1e-12, "envelope vs E2-PYS share {worst:e}");
    let mut values = Vec::new();
    for bp in [1.6, 1.7] {
        let v = pys_envelope(bp, 1.0).map_err(|e| e.to_string())?;
        ensure!(v > 0.5, "envelope at beta'={bp} is {v}");
        values.push(format!("{bp}: {v:.9}"));
    }
    Ok(format!("max error {worst:.1e}; envelope(beta',1) {}", values.join(", ")))
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Outcome); 12] = [
        ("constants beta, gamma, phi", constants_check),
        ("kelly bound 2", kelly_check),
        ("sh bound 3", sh_check),
        ("e2-pys bound beta", e2pys_check),
        ("e2-sr bound gamma", e2sr_check),
        ("sh-ratio hybrid peak phi", shr_check),
        ("2 - 1/n construction", thm1_check),
        ("budget-aware 4/3 construction", budget_aware_check),
        ("class-C witnesses", class_c_check),
        ("affinized welfare identity and delta accounting", welfare_identity_check),
        ("independent oracles", oracle_check),
        ("pay-your-signal envelope", envelope_check),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, (name, check)) in checks.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", k + 1);
            }
        }
    }
    println!("{} of {} acceptance checks passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
