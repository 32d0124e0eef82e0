use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use epsim_core::dispersion::{dyadic_times, kernel_decay_fit, strichartz_measure, TimeWindow, DEFAULT_PAD};
use epsim_core::dynamics::random_smooth_field;
use epsim_core::harness::{
    nf_check, paradiff_suite, report, resolve_output, run_scan, simulate, verify_all, Check, Injection, RunConfig,
    ScanSpec, VerifyOptions, BUILD_ID, VERSION,
};
use epsim_core::normal_form::{nonresonance_scan, Fault};
use epsim_core::TorusGrid;

#[derive(Parser)]
#[command(name = "epsim", version, about = "Euler-Poisson electron-fluid simulator on the 2D torus")]
struct Cli {
    /// JSON configuration (run config, or scan spec for `scan-lifespan`)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, or output file for the CSV-producing subcommands.
    /// Relative paths are resolved against $EPSIM_OUT when set.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed override
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration and write a run directory
    Simulate,
    /// Norm-doubling lifespan scan over (R, eps)
    ScanLifespan,
    /// Sup-norm decay of the frequency-localized Klein-Gordon kernel
    Dispersion(DispersionArgs),
    /// Growth of the L^2_t X Strichartz quantity for random smooth data
    Strichartz(StrichartzArgs),
    /// Normal-form residual along a run
    NfCheck,
    /// Brute-force minimum of the phases over a frequency disk
    Nonres(NonresArgs),
    /// Paradifferential identity suite
    ParadiffTest(ParadiffArgs),
    /// Every invariant suite at small scale
    Verify(VerifyArgs),
    /// Fit lifespans of a scan and write report.md and lifespan.svg
    Report(ReportArgs),
}

#[derive(Args)]
struct DispersionArgs {
    #[arg(long = "R")]
    side: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    k: i32,
    #[arg(long, default_value_t = 5.0)]
    t0: f64,
    #[arg(long, default_value_t = 40.0)]
    t1: f64,
    /// Geometrically spaced samples in [t0, t1]
    #[arg(long, default_value_t = 12)]
    samples: usize,
    /// Zero-padding factor for the sup
    #[arg(long, default_value_t = DEFAULT_PAD)]
    pad: usize,
}

#[derive(Args)]
struct StrichartzArgs {
    #[arg(long = "R")]
    side: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    tmax: f64,
    /// Weight M of the X norm
    #[arg(long, default_value_t = 2)]
    m: u32,
    /// Quadrature step
    #[arg(long, default_value_t = 0.05)]
    ds: f64,
}

#[derive(Args)]
struct NonresArgs {
    #[arg(long = "R")]
    side: f64,
    #[arg(long = "K")]
    cap: f64,
}

#[derive(Args)]
struct ParadiffArgs {
    #[arg(long, default_value_t = 16)]
    grid: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum InjectArg {
    None,
    NfSign,
    Dealias,
}

#[derive(Args)]
struct VerifyArgs {
    /// Corrupt one component to check that the suite notices
    #[arg(long, value_enum, default_value_t = InjectArg::None, hide = true)]
    inject: InjectArg,
}

#[derive(Args)]
struct ReportArgs {
    /// Scan CSV produced by `scan-lifespan`
    #[arg(long)]
    scan: PathBuf,
}

const SUITES: [&str; 7] = ["spectral", "lp", "energy", "normal-form", "paradiff", "dispersion", "nonresonance"];

fn out_path(cli: &Cli, default: &str) -> PathBuf {
    resolve_output(cli.out.as_deref().unwrap_or(Path::new(default)))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    Ok(())
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_json_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Bit `i + 1` is set when suite `i` of [`SUITES`] failed; 1 is left for errors.
fn failure_code(checks: &[Check]) -> u8 {
    SUITES
        .iter()
        .enumerate()
        .filter(|(_, s)| checks.iter().any(|c| c.suite == **s && !c.passed))
        .fold(0, |acc, (i, _)| acc | (1 << (i + 1)))
}

fn print_checks(checks: &[Check]) -> ExitCode {
    for c in checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {} failed", checks.len(), failed);
    match failure_code(checks) {
        0 => ExitCode::SUCCESS,
        code => ExitCode::from(code),
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if let Some(k) = cli.threads {
        rayon_threads(k)?;
    }
    match &cli.command {
        Command::Simulate => {
            let cfg = run_config(cli)?;
            let dir = match &cli.out {
                Some(p) => resolve_output(p),
                None => resolve_output(&cfg.output_dir),
            };
            let s = simulate(&cfg, &dir)?;
            println!(
                "{}: {} steps of dt = {}, final t = {}, status {}",
                dir.display(),
                s.meta.steps_taken,
                s.meta.dt,
                s.meta.final_t,
                s.meta.status
            );
        }
        Command::ScanLifespan => {
            let mut spec = match &cli.config {
                Some(p) => serde_json::from_str::<ScanSpec>(
                    &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
                )
                .with_context(|| format!("parsing {}", p.display()))?,
                None => ScanSpec::default(),
            };
            if let Some(s) = cli.seed {
                spec.base_seed = s;
            }
            if cli.threads.is_some() {
                spec.threads = cli.threads;
            }
            let dir = out_path(cli, "scan");
            let rows = run_scan(&spec, &dir)?;
            let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
            println!("{} runs written to {} ({} failed)", rows.len(), dir.join("scan.csv").display(), failed);
        }
        Command::Dispersion(a) => {
            let grid = TorusGrid::new(a.side, a.n)?;
            let exp = kernel_decay_fit(&grid, a.k, TimeWindow::new(a.t0, a.t1, a.samples), a.pad)?;
            let path = out_path(cli, "dispersion.csv");
            ensure_parent(&path)?;
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["t", "sup", "fit"])?;
            for (t, s) in exp.times.iter().zip(&exp.sup) {
                let fit = exp.prefactor * t.powf(-exp.alpha);
                w.write_record([t.to_string(), s.to_string(), fit.to_string()])?;
            }
            w.flush()?;
            println!(
                "alpha = {:.4}, 95% CI [{:.4}, {:.4}], r^2 = {:.4}",
                exp.alpha, exp.alpha_ci.0, exp.alpha_ci.1, exp.fit.r_squared
            );
        }
        Command::Strichartz(a) => {
            let grid = TorusGrid::new(a.side, a.n)?;
            let seed = cli.seed.unwrap_or(1);
            let u = random_smooth_field(&grid, &mut ChaCha8Rng::seed_from_u64(seed));
            let mut times: Vec<f64> = dyadic_times(a.side, -3, 12).into_iter().filter(|t| *t < a.tmax).collect();
            times.push(a.tmax);
            let rows = strichartz_measure(&u, a.m, &times, a.ds)?;
            let path = out_path(cli, "strichartz.csv");
            ensure_parent(&path)?;
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["t", "S", "S_normalized"])?;
            for r in &rows {
                w.write_record([r.t.to_string(), r.s.to_string(), r.normalized.to_string()])?;
            }
            w.flush()?;
            println!("{} rows written to {}", rows.len(), path.display());
        }
        Command::NfCheck => {
            if cli.config.is_none() {
                bail!("nf-check needs --config");
            }
            let cfg = run_config(cli)?;
            let r = nf_check(&cfg, Fault::None)?;
            let path = out_path(cli, "nf.csv");
            ensure_parent(&path)?;
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["t", "residual_L2", "residual_no_H"])?;
            for i in 0..r.times.len() {
                w.write_record([r.times[i].to_string(), r.residual[i].to_string(), r.residual_no_h[i].to_string()])?;
            }
            w.flush()?;
            println!("max residual {:.3e}, without H {:.3e}", r.max_residual(), r.max_residual_no_h());
        }
        Command::Nonres(a) => {
            let r = nonresonance_scan(a.side, a.cap)?;
            let path = out_path(cli, "nonres.csv");
            ensure_parent(&path)?;
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["R", "K", "c_min", "mu", "nu", "xi1_x", "xi1_y", "xi2_x", "xi2_y", "pairs_scanned"])?;
            w.write_record([
                r.side.to_string(),
                r.cap.to_string(),
                r.c_min.to_string(),
                r.signs.0.symbol().to_string(),
                r.signs.1.symbol().to_string(),
                r.xi1[0].to_string(),
                r.xi1[1].to_string(),
                r.xi2[0].to_string(),
                r.xi2[1].to_string(),
                r.pairs_scanned.to_string(),
            ])?;
            w.flush()?;
            println!(
                "c_min = {:.6} at ({}{}), xi1 = {:?}, xi2 = {:?}",
                r.c_min,
                r.signs.0.symbol(),
                r.signs.1.symbol(),
                r.xi1,
                r.xi2
            );
        }
        Command::ParadiffTest(a) => {
            let checks = paradiff_suite(a.grid, cli.seed.unwrap_or(0))?;
            return Ok(print_checks(&checks));
        }
        Command::Verify(a) => {
            let injection = match a.inject {
                InjectArg::None => Injection::None,
                InjectArg::NfSign => Injection::NormalFormSign,
                InjectArg::Dealias => Injection::BrokenDealiasing,
            };
            println!("epsim {VERSION} ({BUILD_ID})");
            let checks = verify_all(VerifyOptions { seed: cli.seed.unwrap_or(0), injection })?;
            return Ok(print_checks(&checks));
        }
        Command::Report(a) => {
            let dir = out_path(cli, "report");
            let s = report(&a.scan, &dir)?;
            for f in &s.fits {
                println!(
                    "R = {}: slope {:.3}, 95% CI [{:.3}, {:.3}]",
                    f.side, f.fit.slope, f.fit.slope_ci.0, f.fit.slope_ci.1
                );
            }
            for v in &s.violations {
                println!("monotonicity violation: {v}");
            }
            println!("wrote {} and {}", s.markdown.display(), s.plot.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn rayon_threads(k: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global().context("configuring thread pool")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
