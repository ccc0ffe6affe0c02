//! The four commands. Each reads its settings from a [`Config`], writes its
//! artifacts into the output directory and returns a [`Status`].

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sadovskii_core::energy::kinetic_energy;
use sadovskii_core::evolution::{discretize, estimate_shift, run, ParticleSource, RunConfig};
use sadovskii_core::field::{GridField, GridGeometry};
use sadovskii_core::identities::{
    exponent_fit, lp_relation_check, pohozaev_report, touching_check, traveling_speed_formula,
    IdentityReport,
};
use sadovskii_core::lamb::{lamb_dipole, lamb_validate, oracle_geometry, LambParams};
use sadovskii_core::solver::{solve_dipole, DipoleProfile, GridSpec, Mode, SolveConfig};
use sadovskii_core::steiner::{even_part, is_steiner_symmetric, steiner_symmetrize};
use sadovskii_core::tail::{build_tailed_contour, patch_contour, TailParams};

use crate::config::{Config, ConfigError};
use crate::formats::{
    contour_to_csv, diagnostics_to_csv, field_to_binary, field_to_csv, read_field, ProfileMeta,
};
use crate::report::{
    to_json, EvolveReport, OracleReport, OracleResolution, ProfileReport, VerifyReport,
};

/// Tolerance of the identity checks attached to a solved profile.
pub const IDENTITY_TOL: f64 = 0.05;
/// Tolerance of the speed-formula check.
pub const SPEED_TOL: f64 = 0.03;
/// Relative tolerance of the regularity exponent against `1/(p-1)`.
pub const EXPONENT_TOL: f64 = 0.12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success,
    NotConverged,
    ChecksFailed,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::NotConverged | Status::ChecksFailed => 2,
        }
    }
}

/// Settings shared by all commands.
#[derive(Clone, Debug)]
pub struct RunContext {
    pub config: Config,
    /// A config file was given, so its `[grid]` section is mandatory.
    pub from_file: bool,
    pub out_dir: PathBuf,
}

const SECTIONS: &[&str] = &["solver", "grid", "oracle", "evolution", "verify", "output"];
const SOLVER_KEYS: &[&str] = &[
    "mode",
    "p",
    "mu",
    "nu",
    "lambda",
    "max_iter",
    "tol_field",
    "tol_multiplier",
    "relaxation",
    "initial",
];
const GRID_KEYS: &[&str] = &["nx", "ny", "height"];
const ORACLE_KEYS: &[&str] = &[
    "speed_u",
    "radius_a",
    "resolutions",
    "residual_tol",
    "identity_tol",
];
const EVOLUTION_KEYS: &[&str] = &[
    "initial",
    "profile",
    "t_final",
    "dt",
    "record_every",
    "lp_exponent",
    "particles",
    "blob_radius",
    "nx",
    "ny",
    "epsilon",
    "tail_length",
    "spike_center",
    "spike_halfwidth",
];
const VERIFY_KEYS: &[&str] = &["seed", "random_fields"];
const OUTPUT_KEYS: &[&str] = &["dir", "field_format"];

/// Rejects unknown sections and keys so typos never fall back to defaults.
pub fn check_config(config: &Config) -> Result<(), ConfigError> {
    config.check_sections(SECTIONS)?;
    config.check_keys("solver", SOLVER_KEYS)?;
    config.check_keys("grid", GRID_KEYS)?;
    config.check_keys("oracle", ORACLE_KEYS)?;
    config.check_keys("evolution", EVOLUTION_KEYS)?;
    config.check_keys("verify", VERIFY_KEYS)?;
    config.check_keys("output", OUTPUT_KEYS)
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn positive(section: &str, key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Config::invalid(
            section,
            key,
            &v.to_string(),
            "must be positive and finite",
        ))
    }
}

/// Builds the solver settings from `[solver]` and `[grid]`.
pub fn solve_config(ctx: &RunContext) -> Result<SolveConfig> {
    let c = &ctx.config;
    if ctx.from_file && !c.has_section("grid") {
        return Err(ConfigError::MissingSection {
            section: "grid".into(),
        }
        .into());
    }
    let mode = match c.raw("solver", "mode").unwrap_or("regular") {
        "patch" => {
            if c.raw("solver", "p").is_some() {
                bail!(Config::invalid(
                    "solver",
                    "p",
                    c.raw("solver", "p").unwrap(),
                    "patch mode takes no exponent"
                ));
            }
            Mode::Patch
        }
        "regular" => {
            let p: f64 = c.require("solver", "p")?;
            if !(p > 1.0 && p.is_finite()) {
                bail!(Config::invalid(
                    "solver",
                    "p",
                    &p.to_string(),
                    "must be finite and greater than 1"
                ));
            }
            Mode::Regular { p }
        }
        other => bail!(Config::invalid(
            "solver",
            "mode",
            other,
            "expected `patch` or `regular`"
        )),
    };
    let mu = positive("solver", "mu", c.require("solver", "mu")?)?;
    let mut cfg = SolveConfig::new(mode, mu);
    cfg.nu = positive("solver", "nu", c.get_or("solver", "nu", cfg.nu)?)?;
    cfg.lambda = positive(
        "solver",
        "lambda",
        c.get_or("solver", "lambda", cfg.lambda)?,
    )?;
    cfg.max_iter = c.get_or("solver", "max_iter", cfg.max_iter)?;
    if cfg.max_iter == 0 {
        bail!(Config::invalid(
            "solver",
            "max_iter",
            "0",
            "must be at least 1"
        ));
    }
    cfg.tol_field = positive(
        "solver",
        "tol_field",
        c.get_or("solver", "tol_field", cfg.tol_field)?,
    )?;
    cfg.tol_multiplier = positive(
        "solver",
        "tol_multiplier",
        c.get_or("solver", "tol_multiplier", cfg.tol_multiplier)?,
    )?;
    cfg.relaxation = c.get_or("solver", "relaxation", cfg.relaxation)?;
    if !(cfg.relaxation > 0.0 && cfg.relaxation <= 1.0) {
        bail!(Config::invalid(
            "solver",
            "relaxation",
            &cfg.relaxation.to_string(),
            "must lie in (0, 1]"
        ));
    }
    let nx: usize = c.get_or("grid", "nx", cfg.grid.nx)?;
    let ny: usize = c.get_or("grid", "ny", cfg.grid.ny)?;
    if nx < 8 || !nx.is_multiple_of(2) {
        bail!(Config::invalid(
            "grid",
            "nx",
            &nx.to_string(),
            "must be even and at least 8"
        ));
    }
    if ny < 4 {
        bail!(Config::invalid(
            "grid",
            "ny",
            &ny.to_string(),
            "must be at least 4"
        ));
    }
    let height = match c.raw("grid", "height") {
        None | Some("auto") => None,
        Some(_) => Some(positive("grid", "height", c.require("grid", "height")?)?),
    };
    cfg.grid = GridSpec { nx, ny, height };
    if let Some(path) = c.raw("solver", "initial") {
        let (field, _) = read_field(Path::new(path)).context("solver.initial")?;
        cfg.initial = Some(field);
    }
    cfg.validate()
        .map_err(|e| anyhow!("invalid solver settings: {e}"))?;
    Ok(cfg)
}

/// Identity checks attached to every solved or verified profile.
pub fn profile_identities(profile: &DipoleProfile) -> Result<Vec<IdentityReport>> {
    let mut out = vec![pohozaev_report(profile, IDENTITY_TOL)];
    if let Mode::Regular { p } = profile.mode {
        out.push(lp_relation_check(profile, IDENTITY_TOL)?);
        let e = exponent_fit(profile)?;
        out.push(IdentityReport::compare(
            "regularity_exponent",
            e,
            1.0 / (p - 1.0),
            EXPONENT_TOL,
            1.0,
        ));
    }
    let w = traveling_speed_formula(&profile.field)?;
    out.push(IdentityReport::compare(
        "speed_formula",
        w,
        profile.w,
        SPEED_TOL,
        1.0,
    ));
    out.push(touching_check(profile)?.report);
    Ok(out)
}

fn write_profile(ctx: &RunContext, profile: &DipoleProfile) -> Result<()> {
    let format = ctx.config.raw("output", "field_format").unwrap_or("csv");
    let meta = ProfileMeta::of(profile);
    match format {
        "csv" => {
            write(
                &ctx.out_dir,
                "profile.csv",
                field_to_csv(&profile.field, Some(&meta)),
            )?;
        }
        "binary" => {
            write(&ctx.out_dir, "profile.bin", field_to_binary(&profile.field))?;
        }
        "both" => {
            write(
                &ctx.out_dir,
                "profile.csv",
                field_to_csv(&profile.field, Some(&meta)),
            )?;
            write(&ctx.out_dir, "profile.bin", field_to_binary(&profile.field))?;
        }
        other => bail!(Config::invalid(
            "output",
            "field_format",
            other,
            "expected `csv`, `binary` or `both`"
        )),
    }
    Ok(())
}

pub fn command_solve(ctx: &RunContext) -> Result<Status> {
    let cfg = solve_config(ctx)?;
    if cfg.mode.is_degenerate() {
        eprintln!("warning: p <= 4/3 is degenerate; convergence is not expected");
    }
    let profile = solve_dipole(&cfg)?;
    let identities = profile_identities(&profile)?;
    let report = ProfileReport::new(&profile, &identities);
    write_profile(ctx, &profile)?;
    write(&ctx.out_dir, "report.json", to_json(&report))?;
    println!(
        "W = {} gamma = {} mu = {} mass = {} residual = {:.3e} iterations = {} converged = {}",
        profile.w,
        profile.gamma,
        profile.mu,
        profile.mass,
        profile.residual,
        profile.iterations,
        profile.converged
    );
    for r in &identities {
        println!(
            "  {:<20} {:>5}  lhs {:.6e} rhs {:.6e} rel {:.2e} (tol {})",
            r.name,
            if r.pass { "pass" } else { "FAIL" },
            r.lhs,
            r.rhs,
            r.rel_err,
            r.tolerance
        );
    }
    Ok(if profile.converged {
        Status::Success
    } else {
        Status::NotConverged
    })
}

/// Parses `96x48, 192x96`.
pub fn parse_resolutions(text: &str) -> Result<Vec<(usize, usize)>, ConfigError> {
    let bad = |reason: &str| Config::invalid("oracle", "resolutions", text, reason);
    let mut out = Vec::new();
    for item in text.split(',') {
        let (a, b) = item
            .trim()
            .split_once('x')
            .ok_or_else(|| bad("expected a comma-separated list of NXxNY"))?;
        let nx: usize = a
            .trim()
            .parse()
            .map_err(|_| bad("NX is not a positive integer"))?;
        let ny: usize = b
            .trim()
            .parse()
            .map_err(|_| bad("NY is not a positive integer"))?;
        if nx < 2 || ny < 2 || !nx.is_multiple_of(2) {
            return Err(bad("each resolution needs an even NX >= 2 and NY >= 2"));
        }
        out.push((nx, ny));
    }
    Ok(out)
}

fn lamb_params(c: &Config) -> Result<LambParams> {
    let p = LambParams {
        speed_u: positive("oracle", "speed_u", c.get_or("oracle", "speed_u", 1.0)?)?,
        radius_a: positive("oracle", "radius_a", c.get_or("oracle", "radius_a", 1.0)?)?,
    };
    Ok(p)
}

pub fn command_oracle(ctx: &RunContext) -> Result<Status> {
    let c = &ctx.config;
    let params = lamb_params(c)?;
    let resolutions = parse_resolutions(c.raw("oracle", "resolutions").unwrap_or("96x48, 192x96"))?;
    let residual_tol = positive(
        "oracle",
        "residual_tol",
        c.get_or("oracle", "residual_tol", 1e-2)?,
    )?;
    let identity_tol = positive(
        "oracle",
        "identity_tol",
        c.get_or("oracle", "identity_tol", 0.03)?,
    )?;
    let results = lamb_validate(&params, &resolutions, residual_tol, identity_tol)?;
    let mut pass = true;
    let mut rows = Vec::new();
    for v in &results {
        println!("{}x{}: residual {:.3e}", v.nx, v.ny, v.residual);
        for r in &v.reports {
            pass &= r.pass;
            println!("  {:<36} {}", r.name, if r.pass { "pass" } else { "FAIL" });
        }
        rows.push(OracleResolution {
            nx: v.nx,
            ny: v.ny,
            residual: v.residual,
            identities: v.reports.iter().map(Into::into).collect(),
        });
    }
    let report = OracleReport {
        speed_u: params.speed_u,
        radius_a: params.radius_a,
        resolutions: rows,
        pass,
    };
    write(&ctx.out_dir, "oracle.json", to_json(&report))?;
    Ok(if pass {
        Status::Success
    } else {
        Status::ChecksFailed
    })
}

fn load_profile(path: &Path) -> Result<DipoleProfile> {
    let (field, meta) = read_field(path)?;
    let meta = meta.ok_or_else(|| {
        anyhow!(
            "{} carries no profile metadata; use the CSV dump written by `solve`",
            path.display()
        )
    })?;
    Ok(DipoleProfile::from_field(
        field,
        meta.mode,
        meta.lambda,
        meta.w,
        meta.gamma,
    )?)
}

/// Profile named by `evolution.profile`, or a fresh solve from `[solver]`.
fn evolution_profile(ctx: &RunContext) -> Result<DipoleProfile> {
    match ctx.config.raw("evolution", "profile") {
        Some(path) => load_profile(Path::new(path)).context("evolution.profile"),
        None => {
            let profile = solve_dipole(&solve_config(ctx)?)?;
            if !profile.converged {
                eprintln!(
                    "warning: starting profile did not converge (residual {:.3e})",
                    profile.residual
                );
            }
            Ok(profile)
        }
    }
}

pub fn command_evolve(ctx: &RunContext) -> Result<Status> {
    let c = &ctx.config;
    let t_final = positive(
        "evolution",
        "t_final",
        c.get_or("evolution", "t_final", 5.0)?,
    )?;
    let dt = positive("evolution", "dt", c.get_or("evolution", "dt", 0.01)?)?;
    let mut run_cfg = RunConfig::new(t_final, dt);
    run_cfg.record_every = c.get_or("evolution", "record_every", 1)?;
    if run_cfg.record_every == 0 {
        bail!(Config::invalid(
            "evolution",
            "record_every",
            "0",
            "must be at least 1"
        ));
    }
    let particles_target: usize = c.get_or("evolution", "particles", 0)?;
    let initial = c.raw("evolution", "initial").unwrap_or("lamb").to_string();

    let (mut ensemble, contour, reference, default_p) = match initial.as_str() {
        "lamb" => {
            let params = lamb_params(c)?;
            let nx = c.get_or("evolution", "nx", 96)?;
            let ny = c.get_or("evolution", "ny", 48)?;
            let geom = oracle_geometry(&params, nx, ny).map_err(|e| {
                Config::invalid("evolution", "nx", &format!("{nx}x{ny}"), &e.to_string())
            })?;
            let profile = lamb_dipole(&params, &geom)?;
            let e = discretize(ParticleSource::Grid(&profile.field), particles_target)?;
            (e, None, Some(params.speed_u), 2.0)
        }
        "profile" => {
            let profile = evolution_profile(ctx)?;
            let e = discretize(ParticleSource::Grid(&profile.field), particles_target)?;
            (e, None, Some(profile.w), profile.p().unwrap_or(2.0))
        }
        "tailed" => {
            let profile = evolution_profile(ctx)?;
            if profile.mode != Mode::Patch {
                bail!(Config::invalid(
                    "evolution",
                    "initial",
                    "tailed",
                    "needs a patch-mode profile"
                ));
            }
            let base = patch_contour(&profile.field, profile.lambda)?;
            let bb = base
                .bounding_box()
                .ok_or_else(|| anyhow!("patch contour is empty"))?;
            let params = TailParams {
                epsilon: c.get_or("evolution", "epsilon", 0.01)?,
                tail_length: c.get_or("evolution", "tail_length", 2.0 * bb.x1)?,
                spike_center: c.get_or("evolution", "spike_center", 0.4 * bb.y1)?,
                spike_halfwidth: c.get_or("evolution", "spike_halfwidth", 0.003)?,
            };
            let tailed = build_tailed_contour(&base, &params)?;
            // widen the sampling grid so the spike fits with margin
            let g = profile.field.geometry();
            let tip = tailed
                .contour
                .bounding_box()
                .map_or(params.tail_length, |b| b.x1);
            let nx = 2 * ((1.3 * tip.max(params.tail_length) / g.cell) as usize + 2);
            let template = GridGeometry::symmetric(nx.max(g.nx), g.ny, g.height())?;
            let e = discretize(
                ParticleSource::Contour {
                    contour: &tailed.contour,
                    strength: profile.lambda,
                    template: &template,
                },
                particles_target,
            )?;
            write(
                &ctx.out_dir,
                "initial_contour.csv",
                contour_to_csv(&tailed.contour),
            )?;
            (e, Some(tailed.contour), Some(profile.w), 2.0)
        }
        other => bail!(Config::invalid(
            "evolution",
            "initial",
            other,
            "expected `lamb`, `profile` or `tailed`"
        )),
    };
    run_cfg.lp_exponent = c.get_or("evolution", "lp_exponent", default_p)?;
    if let Some(delta) = c.get::<f64>("evolution", "blob_radius")? {
        ensemble.blob_radius = positive("evolution", "blob_radius", delta)?;
    }
    run_cfg
        .validate()
        .map_err(|e| anyhow!("invalid evolution settings: {e}"))?;

    let series = run(&ensemble, &run_cfg, contour.as_ref())?;
    write(&ctx.out_dir, "diagnostics.csv", diagnostics_to_csv(&series))?;
    if let Some(fc) = &series.final_contour {
        write(&ctx.out_dir, "final_contour.csv", contour_to_csv(fc))?;
    }
    let fitted = estimate_shift(&series).ok().map(|(_, s)| s);
    let report = EvolveReport {
        initial,
        particles: ensemble.len(),
        blob_radius: ensemble.blob_radius,
        t_final: run_cfg.t_final,
        dt: series.config.dt,
        records: series.records.len(),
        mass_drift: series.drift(|r| r.mass),
        impulse_drift: series.drift(|r| r.impulse),
        energy_drift: series.drift(|r| r.energy),
        fitted_speed: fitted,
        reference_speed: reference,
        wall_clamps: series.final_state.wall_clamps,
        perimeter_initial: series.records.first().and_then(|r| r.perimeter),
        perimeter_final: series.records.last().and_then(|r| r.perimeter),
    };
    write(&ctx.out_dir, "evolve.json", to_json(&report))?;
    println!(
        "{} particles, blob radius {:.4e}, {} records",
        report.particles, report.blob_radius, report.records
    );
    println!(
        "drift: mass {:.2e} impulse {:.2e} energy {:.2e}",
        report.mass_drift, report.impulse_drift, report.energy_drift
    );
    match (fitted, reference) {
        (Some(s), Some(w)) => println!("fitted shift speed {s:.6} (profile speed {w:.6})"),
        (Some(s), None) => println!("fitted shift speed {s:.6}"),
        _ => println!("fitted shift speed unavailable (fewer than 3 records)"),
    }
    if let (Some(a), Some(b)) = (report.perimeter_initial, report.perimeter_final) {
        println!("perimeter {a:.6} -> {b:.6}");
    }
    Ok(Status::Success)
}

/// Random nonnegative field on a 16×8 grid, as used by the symmetrization checks.
pub fn random_field(rng: &mut ChaCha8Rng) -> GridField {
    let g = GridGeometry::symmetric(16, 8, 1.0).expect("fixed grid");
    let density: f64 = rng.gen_range(0.1..0.9);
    let values = (0..g.len())
        .map(|_| {
            if rng.gen_bool(density) {
                rng.gen_range(0.0..2.0)
            } else {
                0.0
            }
        })
        .collect();
    GridField::from_values(g, values).expect("finite values")
}

/// Whether symmetrization preserves the norms, raises the energy and is idempotent on `f`.
pub fn steiner_holds(f: &GridField) -> Result<bool> {
    let s = steiner_symmetrize(f)?;
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
    let norms = same(s.mass(), f.mass())
        && same(s.impulse(), f.impulse())
        && same(s.lp_power(2.0), f.lp_power(2.0));
    let energy = kinetic_energy(&s) >= kinetic_energy(f) * (1.0 - 1e-12);
    let idem = steiner_symmetrize(&s)? == s && is_steiner_symmetric(&even_part(&s)?);
    Ok(norms && energy && idem)
}

pub fn command_verify(ctx: &RunContext, dump: &Path) -> Result<Status> {
    let c = &ctx.config;
    let profile = load_profile(dump)?;
    let mut identities = profile_identities(&profile)?;
    let residual_ok = profile.residual < 1e-2;
    identities.push(IdentityReport::compare(
        "fixed_point_residual",
        profile.residual,
        0.0,
        1e-2,
        1.0,
    ));
    let sym = is_steiner_symmetric(&profile.field);
    identities.push(IdentityReport::compare(
        "steiner_symmetric",
        if sym { 1.0 } else { 0.0 },
        1.0,
        0.0,
        1.0,
    ));
    let seed: u64 = c.get_or("verify", "seed", 0)?;
    let count: usize = c.get_or("verify", "random_fields", 20)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0usize;
    for _ in 0..count {
        if !steiner_holds(&random_field(&mut rng))? {
            failures += 1;
        }
    }
    identities.push(IdentityReport::compare(
        "random_steiner_failures",
        failures as f64,
        0.0,
        0.0,
        1.0,
    ));
    let pass = residual_ok && identities.iter().all(|r| r.pass);
    let mut report_profile = ProfileReport::new(&profile, &identities);
    report_profile.converged = residual_ok;
    let report = VerifyReport {
        profile: report_profile,
        seed,
        random_fields: count,
        pass,
    };
    write(&ctx.out_dir, "verify.json", to_json(&report))?;
    for r in &identities {
        println!("{:<24} {}", r.name, if r.pass { "pass" } else { "FAIL" });
    }
    Ok(if pass {
        Status::Success
    } else {
        Status::ChecksFailed
    })
}
