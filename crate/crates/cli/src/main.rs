use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ndg_core::experiment::{
    cmd_spinup, cmd_stats, cmd_sweep, cmd_twin, cmd_verify_observers, ExperimentConfig, SweepAxis,
};
use ndg_core::Error;

#[derive(Parser)]
#[command(name = "ndg", about = "Nudging data assimilation for 2D periodic Navier-Stokes")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spin up the reference state and record attractor bounds.
    Spinup,
    /// Run a twin experiment against a spun-up reference.
    Twin {
        /// Directory holding the spin-up artifacts (defaults to --out).
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Repeat the twin experiment over one parameter.
    Sweep {
        /// beta, kappa, epsilon, or m_or_h.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated parameter values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Check interpolant constants and noise bounds.
    VerifyObservers,
    /// Compare time averages of a finished twin run.
    Stats {
        /// Twin output directory (defaults to --out).
        #[arg(long)]
        twin: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Cfl { .. } | Error::NonFinite { .. } => 2,
        Error::InvariantViolation(_) => 3,
        Error::Config(_) | Error::InvalidGrid(_) | Error::InvalidInput(_) => 4,
        _ => 1,
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.override_seed(s);
        cfg.resolve()?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<u8, Error> {
    let cfg = load(cli)?;
    let out: &Path = &cli.out;
    match &cli.command {
        Command::Spinup => {
            let m = cmd_spinup(&cfg, out)?;
            println!("G = {:.4}  M0 = {:.6e}  M1 = {:.6e}", m.grashof, m.m0_emp, m.m1_emp);
        }
        Command::Twin { reference } => {
            let s = cmd_twin(&cfg, reference.as_deref().unwrap_or(out), out)?;
            if let Some(d) = &s.diverged {
                eprintln!("diverged: {d}");
                return Ok(2);
            }
            if s.structure_failures > 0 {
                eprintln!("{} structure check(s) failed", s.structure_failures);
                return Ok(3);
            }
            println!(
                "theta = {}  plateau = {}  final |w| = {:.6e}  conditions satisfied: {}",
                fmt_opt(s.theta_emp),
                fmt_opt(s.plateau_emp),
                s.final_error,
                s.conditions.overall
            );
        }
        Command::Sweep {
            axis,
            values,
            reference,
        } => {
            let rows = cmd_sweep(
                &cfg,
                *axis,
                values,
                reference.as_deref().unwrap_or(out),
                out,
                cli.threads,
            )?;
            for r in &rows {
                println!(
                    "{:>14.6e}  theta = {}  diverged = {}  conditions = {}",
                    r.value,
                    fmt_opt(r.theta_emp),
                    r.diverged,
                    r.conditions_satisfied
                );
            }
        }
        Command::VerifyObservers => {
            let rep = cmd_verify_observers(&cfg, Some(out))?;
            for c in &rep.checks {
                println!(
                    "{} {:<28} {:.6e} (limit {:.6e})",
                    if c.passed { "ok  " } else { "FAIL" },
                    c.name,
                    c.value,
                    c.limit
                );
            }
            if !rep.passed {
                return Ok(3);
            }
        }
        Command::Stats { twin } => {
            let s = cmd_stats(&cfg, twin.as_deref().unwrap_or(out), out)?;
            println!(
                "energy: mean_u = {:.6e}  mean_v = {:.6e}  diff = {:.3e}  bound = {:.3e}  decreasing = {}",
                s.energy.mean_u, s.energy.mean_v, s.energy.diff, s.energy.bound, s.ladder_decreasing
            );
        }
    }
    Ok(0)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.6}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
