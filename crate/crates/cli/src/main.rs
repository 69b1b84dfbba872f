use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arena_core::constructions::{self, ConstructionKind, ConstructionReport};
use arena_core::games::Game;
use arena_core::lpoa::{self, GameLpoa, ScanConfig, ScanResult, WitnessReport};
use arena_core::mechanisms::{self, Mechanism};
use arena_core::Error;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

mod plot;

#[derive(Debug, Parser)]
#[command(name = "arena", version, about = "Liquid price of anarchy toolkit for budget-constrained resource allocation")]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,

    /// Write the main output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct MechArg {
    /// Mechanism: kelly, sh, e2pys, e2sr, shr, mb.
    mech: Option<String>,
    #[arg(long = "mech", value_name = "NAME")]
    mech_flag: Option<String>,
}

impl MechArg {
    fn resolve(&self) -> Result<Box<dyn Mechanism>, Failure> {
        match (&self.mech, &self.mech_flag) {
            (Some(a), Some(b)) if !a.eq_ignore_ascii_case(b) => {
                Err(Failure::usage(format!("mechanism given twice: `{a}` and `{b}`")))
            }
            (Some(name), _) | (None, Some(name)) => Ok(mechanisms::builtin(name)?),
            (None, None) => Err(Failure::usage("missing mechanism name")),
        }
    }
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Range of s1 / C as lo:hi.
    #[arg(long, value_name = "LO:HI", value_parser = parse_range)]
    ratio_range: Option<(f64, f64)>,
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the constants β, γ and φ.
    Constants,
    /// Upper scan of the master ratio and the best certified lower-bound witness.
    Bounds {
        #[command(flatten)]
        mech: MechArg,
        #[arg(short, default_value_t = 2)]
        n: usize,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Equilibria, welfare and LPoA estimate of a game-spec file.
    Solve {
        game: PathBuf,
        #[command(flatten)]
        mech: MechArg,
        /// Explicit starting profile, comma separated; repeatable.
        #[arg(long, value_name = "S1,S2,..", value_parser = parse_profile)]
        init: Vec<Vec<f64>>,
    },
    /// Build a lower-bound game pair: thm1 or budget-aware.
    Construct {
        kind: String,
        #[command(flatten)]
        mech: MechArg,
        #[arg(short, default_value_t = 2)]
        n: usize,
        /// Directory receiving g1.json and g2.json.
        #[arg(long, value_name = "DIR")]
        emit_games: Option<PathBuf>,
    },
    /// Master ratio along s = (r, tail) with the tail summing to one, as CSV.
    Scan {
        #[command(flatten)]
        mech: MechArg,
        #[arg(short, default_value_t = 2)]
        n: usize,
        #[command(flatten)]
        grid: GridArgs,
        /// Also write an SVG plot of ratio against log10(s1 / C).
        #[arg(long, value_name = "PATH")]
        svg: Option<PathBuf>,
    },
}

fn parse_range(text: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = text.split_once(':').ok_or("expected lo:hi")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("bad lower end: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("bad upper end: {e}"))?;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(format!("need 0 < lo < hi < inf, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn parse_profile(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|x| {
            let v: f64 = x.trim().parse().map_err(|e| format!("bad signal `{x}`: {e}"))?;
            if v >= 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(format!("signals must be finite and nonnegative, got {v}"))
            }
        })
        .collect()
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    fn no_result(message: impl Into<String>) -> Self {
        Failure { code: 3, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::UnknownMechanism(_)
            | Error::Domain(_)
            | Error::PlayerCount { .. }
            | Error::InvalidGame(_)
            | Error::Json(_) => 2,
            Error::NoEquilibrium(_) | Error::ConstructionFailed(_) => 3,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(f) = configure_threads() {
        eprintln!("error: {}", f.message);
        return ExitCode::from(f.code);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("ARENA_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Failure::usage(format!("ARENA_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure { code: 1, message: e.to_string() })
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Constants => constants(cli),
        Command::Bounds { mech, n, grid } => bounds(cli, mech.resolve()?.as_ref(), *n, grid),
        Command::Solve { game, mech, init } => solve(cli, game, mech.resolve()?.as_ref(), init),
        Command::Construct { kind, mech, n, emit_games } => {
            let kind = ConstructionKind::parse(kind)
                .ok_or_else(|| Failure::usage(format!("unknown construction `{kind}` (expected thm1 or budget-aware)")))?;
            construct(cli, kind, mech.resolve()?.as_ref(), *n, emit_games.as_deref())
        }
        Command::Scan { mech, n, grid, svg } => scan(cli, mech.resolve()?.as_ref(), *n, grid, svg.as_deref()),
    }
}

fn emit(cli: &Cli, text: &str) -> Result<(), Failure> {
    match &cli.out {
        Some(path) => fs::write(path, text).map_err(|e| Failure { code: 1, message: format!("{}: {e}", path.display()) }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    Ok(text)
}

fn fmt_profile(s: &[f64]) -> String {
    let parts: Vec<String> = s.iter().map(|x| format!("{x:.6e}")).collect();
    format!("({})", parts.join(", "))
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ConstantsReport {
    beta: f64,
    beta_residual: f64,
    gamma: f64,
    gamma_residual: f64,
    phi: f64,
    phi_residual: f64,
}

fn constants(cli: &Cli) -> Result<(), Failure> {
    let c = mechanisms::solve_constants()?;
    let report = ConstantsReport {
        beta: c.beta,
        beta_residual: c.beta_residual(),
        gamma: c.gamma,
        gamma_residual: c.gamma_residual(),
        phi: c.phi,
        phi_residual: c.phi_residual(),
    };
    let text = if cli.json {
        to_json(&report)?
    } else {
        format!(
            "beta  = {:.12}  residual {:.1e}\ngamma = {:.12}  residual {:.1e}\nphi   = {:.12}  residual {:.1e}\n",
            report.beta, report.beta_residual, report.gamma, report.gamma_residual, report.phi, report.phi_residual
        )
    };
    emit(cli, &text)
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct BoundsReport {
    mechanism: String,
    n: usize,
    scan: ScanConfig,
    upper: ScanResult,
    /// Best certified witness, or the best attempt if none certified.
    witness: Option<WitnessReport>,
    witness_attempts: usize,
}

fn scan_config(cli: &Cli, grid: &GridArgs) -> Result<ScanConfig, Failure> {
    let mut cfg = ScanConfig { seed: cli.seed, ..ScanConfig::default() };
    if let Some(range) = grid.ratio_range {
        cfg.ratio_range = range;
    }
    if let Some(points) = grid.points {
        if points < 2 {
            return Err(Failure::usage("--points must be at least 2"));
        }
        cfg.points = points;
    }
    Ok(cfg)
}

fn witness_candidates(n: usize, upper: &ScanResult) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for k in 1..=8 {
        let eps = 10f64.powf(-(k as f64) / 2.0);
        let mut s = vec![0.0; n];
        s[0] = eps;
        s[1] = 1.0;
        out.push(s);
        out.push(lpoa::ratio_profile(n, eps));
    }
    out.push(upper.argmax.clone());
    out.extend(upper.leaders.iter().take(8).map(|(s, _)| s.clone()));
    out
}

fn bounds(cli: &Cli, mech: &dyn Mechanism, n: usize, grid: &GridArgs) -> Result<(), Failure> {
    let cfg = scan_config(cli, grid)?;
    let upper = lpoa::lpoa_upper_scan(mech, n, &cfg)?;
    let candidates = witness_candidates(n, &upper);
    let attempts: Vec<WitnessReport> = candidates
        .par_iter()
        .map(|s| lpoa::lower_bound_witness(mech, s).ok())
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let best = |certified: bool| {
        attempts
            .iter()
            .filter(|w| w.certified == certified && w.ratio.is_finite())
            .fold(None::<&WitnessReport>, |acc, w| match acc {
                Some(b) if b.ratio >= w.ratio => Some(b),
                _ => Some(w),
            })
            .cloned()
    };
    let witness = best(true).or_else(|| best(false));
    let report = BoundsReport {
        mechanism: mech.name().to_string(),
        n,
        scan: cfg,
        witness_attempts: attempts.len(),
        upper,
        witness,
    };

    let text = if cli.json {
        to_json(&report)?
    } else {
        let mut t = format!(
            "mechanism {}  n {}\nupper scan  {:.9}  at {}  ({} profiles, {} degenerate)\n",
            report.mechanism,
            n,
            report.upper.sup_estimate,
            fmt_profile(&report.upper.argmax),
            report.upper.evaluations,
            report.upper.rejected
        );
        match &report.witness {
            Some(w) if w.certified => {
                t += &format!("witness     {:.9}  at {}  certified\n", w.ratio, fmt_profile(&w.signals))
            }
            Some(w) => {
                t += &format!(
                    "witness     none certified; best attempt {:.9} at {} has a deviation gaining {:.3e}\n",
                    w.ratio,
                    fmt_profile(&w.signals),
                    w.max_gain
                )
            }
            None => t += "witness     no candidate evaluated\n",
        }
        t
    };
    emit(cli, &text)
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SolveReport<'a> {
    mechanism: String,
    game: &'a Game,
    inits: &'a [Vec<f64>],
    #[serde(flatten)]
    result: GameLpoa,
}

fn solve(cli: &Cli, path: &Path, mech: &dyn Mechanism, init: &[Vec<f64>]) -> Result<(), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let game = Game::from_json(&text).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })?;
    let n = game.n();
    if let Some(bad) = init.iter().find(|s| s.len() != n) {
        return Err(Failure::usage(format!("--init has {} signals, the game has {n} players", bad.len())));
    }
    let inits = if init.is_empty() { lpoa::default_inits(n, cli.seed) } else { init.to_vec() };
    let result = lpoa::game_lpoa(&game, mech, &inits)?;
    let report = SolveReport { mechanism: mech.name().to_string(), game: &game, inits: &inits, result };

    let out = if cli.json {
        to_json(&report)?
    } else {
        let r = &report.result;
        let mut t = format!(
            "mechanism {}  players {}\noptimal liquid welfare {:.9}  at {}\n",
            report.mechanism,
            n,
            r.optimum.value,
            fmt_profile(&r.optimum.allocation)
        );
        for (k, e) in r.equilibria.iter().enumerate() {
            let classes: Vec<String> = e.classes.iter().map(|c| format!("{c:?}")).collect();
            t += &format!(
                "equilibrium {k}: signals {}\n  allocation {}\n  LW {:.9}  SW {:.9}  ratio {:.9}  classes [{}]\n",
                fmt_profile(&e.signals),
                fmt_profile(&e.allocation),
                e.liquid_welfare,
                e.social_welfare,
                e.ratio,
                classes.join(", ")
            );
        }
        t += &format!("LPoA estimate {:.9}  ({} distinct of {} starts)\n", r.lpoa, r.equilibria.len(), r.attempts);
        t
    };
    emit(cli, &out)
}

// ---------------------------------------------------------------------------

fn construct(
    cli: &Cli,
    kind: ConstructionKind,
    mech: &dyn Mechanism,
    n: usize,
    emit_games: Option<&Path>,
) -> Result<(), Failure> {
    if n < 2 {
        return Err(Failure::usage(format!("constructions need at least 2 players, got {n}")));
    }
    let report = constructions::construct(kind, mech, n)?;
    if let Some(dir) = emit_games {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("g1.json"), report.g1.game.to_json()? + "\n")?;
        fs::write(dir.join("g2.json"), report.g2.game.to_json()? + "\n")?;
    }
    let text = if cli.json { to_json(&report)? } else { construction_text(&report) };
    emit(cli, &text)?;
    if !report.shared_equilibrium {
        return Err(Failure::no_result("the equilibrium of the first game is not an equilibrium of both games"));
    }
    Ok(())
}

fn construction_text(r: &ConstructionReport) -> String {
    let verdict = |ok: bool| if ok { "passes" } else { "FAILS" };
    format!(
        "construction {:?}  mechanism {}  n {}\nequilibrium {}\nshares      {}\npayments    {}\npivot {}\n\
         G1: LW {:.9}  LW* {:.9}  verification {} (max gain {:.3e})\n\
         G2: LW {:.9}  LW* {:.9}  verification {} (max gain {:.3e})\n\
         bound {:.9}  predicted {:.9}  guaranteed {:.9}\n",
        r.kind,
        r.mechanism,
        r.n,
        fmt_profile(&r.signals),
        fmt_profile(&r.allocation),
        fmt_profile(&r.payments),
        r.pivot,
        r.g1.liquid_welfare,
        r.g1.optimal_liquid_welfare,
        verdict(r.g1.verification.is_equilibrium),
        r.g1.verification.max_gain,
        r.g2.liquid_welfare,
        r.g2.optimal_liquid_welfare,
        verdict(r.g2.verification.is_equilibrium),
        r.g2.verification.max_gain,
        r.bound,
        r.predicted_bound,
        r.guaranteed_bound
    )
}

// ---------------------------------------------------------------------------

fn scan(cli: &Cli, mech: &dyn Mechanism, n: usize, grid: &GridArgs, svg: Option<&Path>) -> Result<(), Failure> {
    if n < 2 {
        return Err(Failure::usage(format!("scan needs at least 2 players, got {n}")));
    }
    if let Some(expected) = mech.player_count() {
        if expected != n {
            return Err(Error::PlayerCount { mechanism: mech.name().to_string(), expected, got: n }.into());
        }
    }
    let (lo, hi) = grid.ratio_range.unwrap_or((1e-6, 1e6));
    let points = grid.points.unwrap_or(200);
    if points < 2 {
        return Err(Failure::usage("--points must be at least 2"));
    }
    let sweep = lpoa::ratio_sweep(mech, n, lo, hi, points);

    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=n).map(|i| format!("s{i}")).collect();
    header.push("ratio".into());
    writer.write_record(&header).map_err(csv_failure)?;
    for p in &sweep {
        let mut row: Vec<String> = p.profile.iter().map(|x| x.to_string()).collect();
        row.push(p.ratio.to_string());
        writer.write_record(&row).map_err(csv_failure)?;
    }
    let bytes = writer.into_inner().map_err(|e| Failure { code: 1, message: e.to_string() })?;
    emit(cli, &String::from_utf8_lossy(&bytes))?;

    if let Some(path) = svg {
        let curve: Vec<(f64, f64)> = sweep
            .iter()
            .map(|p| (p.profile[0] / p.profile[1..].iter().sum::<f64>()).log10())
            .zip(sweep.iter().map(|p| p.ratio))
            .collect();
        fs::write(path, plot::line_plot(&format!("master ratio, {} with {n} players", mech.name()), &curve))?;
    }
    if sweep.is_empty() {
        return Err(Failure::no_result("every grid point was degenerate"));
    }
    Ok(())
}

fn csv_failure(e: csv::Error) -> Failure {
    Failure { code: 1, message: e.to_string() }
}
