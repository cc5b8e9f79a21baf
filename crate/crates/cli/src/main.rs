//! `fnls`: run simulations, convergence sweeps, error-growth studies and
//! profile generation from a JSON run configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use fnls_core::harness::{Experiment, PROFILE_MAX_ITERS};
use fnls_core::io::{self, ProfileMetadata};
use fnls_core::model::hs_bound_diagnostic;
use fnls_core::{
    convergence_study, error_growth_study, petviashvili_profile, residual_operator,
    wave_tracking, FnlsError, InitialCondition, InvariantRecorder, Result, RunConfig,
    SnapshotRecorder,
};

const DEFAULT_DTS: [f64; 4] = [2.5e-2, 1.25e-2, 6.25e-3, 3.125e-3];

#[derive(Parser)]
#[command(name = "fnls", version, about = "Spectral solver for the periodic fractional cubic NLS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the configured initial data and write invariants, tracking and snapshots.
    Simulate(Common),
    /// Errors at the final time for a list of step sizes, with observed rates.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Step sizes, comma separated or repeated.
        #[arg(long = "dt", value_delimiter = ',', num_args = 1..)]
        dt: Vec<f64>,
    },
    /// Error against the exact traveling wave at regular checkpoints.
    Growth {
        #[command(flatten)]
        common: Common,
        /// Time between checkpoints (defaults to `snapshot_stride * dt`).
        #[arg(long)]
        every: Option<f64>,
    },
    /// Generate a solitary-wave profile with the Petviashvili iteration.
    Profile(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(common) => {
            let (cfg, out) = load(&common)?;
            simulate(&cfg, &out)
        }
        Command::Convergence { common, dt } => {
            let (cfg, out) = load(&common)?;
            let dts = if dt.is_empty() { DEFAULT_DTS.to_vec() } else { dt };
            convergence(&cfg, &out, &dts)
        }
        Command::Growth { common, every } => {
            let (cfg, out) = load(&common)?;
            growth(&cfg, &out, every)
        }
        Command::Profile(common) => {
            let (cfg, out) = load(&common)?;
            profile(&cfg, &out)
        }
    }
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf)> {
    let cfg = RunConfig::load(&common.config)?;
    let out = common.output.clone().unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&out)?;
    Ok((cfg, out))
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let start = Instant::now();
    let exp = Experiment::prepare(cfg)?;
    if let Ok(bound) = hs_bound_diagnostic(&exp.initial, &exp.model) {
        if !bound.satisfied {
            eprintln!(
                "warning: a-priori H^s bound not available (C* = {:.3e}); data may be too large",
                bound.c_star
            );
        }
    }
    let mut invariants = InvariantRecorder::new(cfg.invariant_stride, exp.model);
    let mut snapshots = SnapshotRecorder::new(cfg.snapshot_stride);
    let outcome = exp.run(&mut [&mut invariants, &mut snapshots])?;

    fs::write(out.join("invariants.csv"), io::invariants_csv(&invariants.records))?;
    for (i, (t, field)) in snapshots.snapshots.iter().enumerate() {
        let step = i * cfg.snapshot_stride;
        io::write_snapshot(&out.join(format!("snapshot_{step:08}.fnls")), field, cfg.s, *t)?;
    }
    match wave_tracking(&snapshots.snapshots) {
        Ok(track) => fs::write(out.join("tracking.csv"), io::tracking_csv(&track))?,
        Err(e) => {
            eprintln!("warning: {e}; tracking.csv has no rows");
            fs::write(out.join("tracking.csv"), io::tracking_csv(&[]))?;
        }
    }

    println!("steps: {}", outcome.steps);
    println!("final time: {}", outcome.final_time);
    println!("mean fixed-point iterations per stage: {:.3}", outcome.mean_fp_iterations);
    println!("max stability margin (3 R^2 k N max|b|): {:.4e}", outcome.max_stability_margin);
    if outcome.stability_warnings > 0 {
        println!(
            "stability condition violated on {} steps",
            outcome.stability_warnings
        );
    }
    println!("wall time: {:.3} s", start.elapsed().as_secs_f64());
    Ok(())
}

fn convergence(cfg: &RunConfig, out: &Path, dts: &[f64]) -> Result<()> {
    let start = Instant::now();
    let exp = Experiment::prepare(cfg)?;
    let rows = convergence_study(&exp, dts)?;
    fs::write(out.join("convergence.csv"), io::convergence_csv(&rows))?;
    println!("{:>12} {:>12} {:>8} {:>12} {:>8}", "dt", "err_v", "rate", "err_w", "rate");
    let rate = |r: Option<f64>| r.map_or_else(String::new, |r| format!("{r:.4}"));
    for r in &rows {
        println!(
            "{:>12.4e} {:>12.4e} {:>8} {:>12.4e} {:>8}",
            r.dt,
            r.err_v,
            rate(r.rate_v),
            r.err_w,
            rate(r.rate_w)
        );
    }
    println!("wall time: {:.3} s", start.elapsed().as_secs_f64());
    Ok(())
}

fn growth(cfg: &RunConfig, out: &Path, every: Option<f64>) -> Result<()> {
    let exp = Experiment::prepare(cfg)?;
    let interval = every.unwrap_or(cfg.snapshot_stride as f64 * cfg.dt);
    let ratio = interval / cfg.dt;
    if !(interval > 0.0 && ratio.round() == ratio) {
        return Err(FnlsError::Config {
            field: "every".into(),
            reason: format!("{interval} is not a positive multiple of dt = {}", cfg.dt),
        });
    }
    let stride = ratio as usize;
    let steps = cfg.steps()?;
    let checkpoints: Vec<f64> = (0..=steps)
        .step_by(stride)
        .map(|n| n as f64 * cfg.dt)
        .collect();
    let series = error_growth_study(&exp, &checkpoints)?;
    fs::write(out.join("errorgrowth.csv"), io::error_growth_csv(&series.points))?;
    println!("checkpoints: {}", series.points.len());
    println!("log-log slope over the second half: {:.4}", series.slope);
    Ok(())
}

fn profile(cfg: &RunConfig, out: &Path) -> Result<()> {
    let InitialCondition::Petviashvili {
        lambda1,
        lambda2,
        tol,
    } = cfg.initial
    else {
        return Err(FnlsError::Config {
            field: "initial".into(),
            reason: "profile generation needs a `petviashvili` initial condition".into(),
        });
    };
    let grid = cfg.grid()?;
    let res = petviashvili_profile(&grid, cfg.s, lambda1, lambda2, tol, PROFILE_MAX_ITERS)?;
    let path = out.join("profile.fnls");
    io::write_snapshot(&path, &res.profile, cfg.s, 0.0)?;
    ProfileMetadata::from_result(&res).save_beside(&path)?;
    let check = residual_operator(&res.profile, cfg.s, lambda1, lambda2)?;
    println!("iterations: {}", res.iterations);
    println!("stabilizing factor: {:.15}", res.stabilizer);
    println!("residual: {:.6e}", res.residual);
    println!("max |residual|: {:.6e}", fnls_core::spectral::linf_norm(&check));
    println!("profile: {}", path.display());
    Ok(())
}
