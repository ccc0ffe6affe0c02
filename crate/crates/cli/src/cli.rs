//! Argument parsing. Every flag is shorthand for a config key and wins over
//! the config file; `--set section.key=value` reaches any key.
//!
//! Exit codes: 0 success, 2 non-converged solve or failed checks, 1 error.

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::commands::{self, RunContext, Status};
use crate::config::Config;

/// Overrides the output directory from the config file.
pub const OUT_ENV: &str = "SADOVSKII_OUT";
const DEFAULT_OUT: &str = "sadovskii-out";

#[derive(Debug, Parser)]
#[command(
    name = "sadovskii",
    version,
    about = "Touching vortex pairs in the half-plane"
)]
pub struct Cli {
    /// Config file of `[section]` headers and `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; beats the SADOVSKII_OUT variable and `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Sets any config key, e.g. `--set solver.max_iter=2000`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute a profile and check its identities.
    Solve(SolveArgs),
    /// Validate the analytic Lamb dipole across resolutions.
    Oracle(OracleArgs),
    /// Evolve particles from a profile or a tailed patch.
    Evolve(EvolveArgs),
    /// Re-check a profile dump written by `solve`.
    Verify(VerifyArgs),
}

#[derive(Debug, Default, Args)]
pub struct SolveArgs {
    /// `patch` or `regular`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long)]
    pub mu: Option<String>,
    #[arg(long)]
    pub nu: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub nx: Option<String>,
    #[arg(long)]
    pub ny: Option<String>,
    /// Box height, or `auto`.
    #[arg(long)]
    pub height: Option<String>,
    #[arg(long)]
    pub max_iter: Option<String>,
    #[arg(long)]
    pub tol_field: Option<String>,
    #[arg(long)]
    pub tol_multiplier: Option<String>,
    #[arg(long)]
    pub relaxation: Option<String>,
}

#[derive(Debug, Default, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub speed_u: Option<String>,
    #[arg(long)]
    pub radius_a: Option<String>,
    /// Comma-separated list such as `96x48,192x96`.
    #[arg(long)]
    pub resolutions: Option<String>,
}

#[derive(Debug, Default, Args)]
pub struct EvolveArgs {
    /// `lamb`, `profile` or `tailed`.
    #[arg(long)]
    pub initial: Option<String>,
    /// Profile dump to start from.
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long)]
    pub t_final: Option<String>,
    #[arg(long)]
    pub dt: Option<String>,
    #[arg(long)]
    pub record_every: Option<String>,
    /// Target particle count; 0 keeps one particle per occupied cell.
    #[arg(long)]
    pub particles: Option<String>,
    #[arg(long)]
    pub blob_radius: Option<String>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Profile dump (CSV with profile metadata).
    pub dump: PathBuf,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub random_fields: Option<String>,
}

fn flag_overrides(command: &Command) -> Vec<(&'static str, Option<&String>)> {
    match command {
        Command::Solve(a) => vec![
            ("solver.mode", a.mode.as_ref()),
            ("solver.p", a.p.as_ref()),
            ("solver.mu", a.mu.as_ref()),
            ("solver.nu", a.nu.as_ref()),
            ("solver.lambda", a.lambda.as_ref()),
            ("grid.nx", a.nx.as_ref()),
            ("grid.ny", a.ny.as_ref()),
            ("grid.height", a.height.as_ref()),
            ("solver.max_iter", a.max_iter.as_ref()),
            ("solver.tol_field", a.tol_field.as_ref()),
            ("solver.tol_multiplier", a.tol_multiplier.as_ref()),
            ("solver.relaxation", a.relaxation.as_ref()),
        ],
        Command::Oracle(a) => vec![
            ("oracle.speed_u", a.speed_u.as_ref()),
            ("oracle.radius_a", a.radius_a.as_ref()),
            ("oracle.resolutions", a.resolutions.as_ref()),
        ],
        Command::Evolve(a) => vec![
            ("evolution.initial", a.initial.as_ref()),
            ("evolution.profile", a.profile.as_ref()),
            ("evolution.t_final", a.t_final.as_ref()),
            ("evolution.dt", a.dt.as_ref()),
            ("evolution.record_every", a.record_every.as_ref()),
            ("evolution.particles", a.particles.as_ref()),
            ("evolution.blob_radius", a.blob_radius.as_ref()),
        ],
        Command::Verify(a) => vec![
            ("verify.seed", a.seed.as_ref()),
            ("verify.random_fields", a.random_fields.as_ref()),
        ],
    }
}

/// Merges the config file, `--set` entries and flags, in increasing priority.
pub fn build_context(cli: &Cli, env_out: Option<PathBuf>) -> Result<RunContext> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    for entry in &cli.set {
        let (k, v) = entry
            .split_once('=')
            .with_context(|| format!("`--set {entry}` must have the form section.key=value"))?;
        config.set(k.trim(), v)?;
    }
    for (key, value) in flag_overrides(&cli.command) {
        if let Some(v) = value {
            config.set(key, v)?;
        }
    }
    commands::check_config(&config)?;
    let out_dir = cli
        .out
        .clone()
        .or(env_out)
        .or_else(|| config.raw("output", "dir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok(RunContext {
        config,
        from_file: cli.config.is_some(),
        out_dir,
    })
}

pub fn execute(cli: &Cli, env_out: Option<PathBuf>) -> Result<Status> {
    let ctx = build_context(cli, env_out)?;
    match &cli.command {
        Command::Solve(_) => commands::command_solve(&ctx),
        Command::Oracle(_) => commands::command_oracle(&ctx),
        Command::Evolve(_) => commands::command_evolve(&ctx),
        Command::Verify(a) => commands::command_verify(&ctx, &a.dump),
    }
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let env_out = std::env::var_os(OUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from);
    match execute(&cli, env_out) {
        Ok(status) => ExitCode::from(status.code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
