//! Constrained energy maximization for traveling dipole profiles.
//!
//! A profile maximizes `E(ω) - (λ/p) ∫ (ω/λ)^p` (regular mode) or `E(ω)` over
//! `0 ≤ ω ≤ λ` (patch mode) among fields with impulse `μ` and mass at most
//! `ν`. Maximizers satisfy `ω = λ (ψ - W x2 - γ)₊^{1/(p-1)}`, respectively
//! `ω = λ 1{ψ - W x2 - γ > 0}`, with the speed `W` and flux constant `γ`
//! acting as Lagrange multipliers. The iteration maps the current stream
//! function through this relation, symmetrizes, and relaxes.

use alloc::vec::Vec;

use crate::energy::EnergyReport;
use crate::error::{Error, Result};
use crate::field::{GridField, GridGeometry};
use crate::kernel::{KernelKind, KernelTable};
use crate::math::{exp, powf, sqrt};
use crate::steiner::{even_part, steiner_symmetrize};

/// Admissible class of the maximization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    /// `L^p`-penalized energy with exponent `p > 1`.
    Regular { p: f64 },
    /// Vortex patches `ω = λ·1_A`.
    Patch,
}

impl Mode {
    pub fn exponent(&self) -> Option<f64> {
        match self {
            Mode::Regular { p } => Some(*p),
            Mode::Patch => None,
        }
    }

    /// At or below `p = 4/3` the impulse no longer controls the energy.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Mode::Regular { p } if *p <= 4.0 / 3.0)
    }
}

/// Grid resolution and optional fixed height. Width is `nx/ny` times height.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    /// `None` sizes the box from coarse trial solves.
    pub height: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nx: 128,
            ny: 64,
            height: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    pub mode: Mode,
    pub mu: f64,
    pub nu: f64,
    pub lambda: f64,
    pub grid: GridSpec,
    pub max_iter: usize,
    pub tol_field: f64,
    pub tol_multiplier: f64,
    pub relaxation: f64,
    /// Starting field; its grid overrides `grid`.
    pub initial: Option<GridField>,
}

impl SolveConfig {
    pub fn new(mode: Mode, mu: f64) -> Self {
        Self {
            mode,
            mu,
            nu: 1.0,
            lambda: 1.0,
            grid: GridSpec::default(),
            max_iter: 800,
            tol_field: 1e-6,
            tol_multiplier: 1e-6,
            relaxation: 0.5,
            initial: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if let Mode::Regular { p } = self.mode {
            if !(p > 1.0 && p.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "p",
                    reason: "must be finite and greater than 1",
                });
            }
        }
        if !positive(self.mu) {
            return Err(Error::InvalidParameter {
                name: "mu",
                reason: "must be positive and finite",
            });
        }
        if !positive(self.nu) {
            return Err(Error::InvalidParameter {
                name: "nu",
                reason: "must be positive and finite",
            });
        }
        if !positive(self.lambda) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: "must be positive and finite",
            });
        }
        if self.grid.nx < 8 || self.grid.ny < 4 || !self.grid.nx.is_multiple_of(2) {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: "need an even nx >= 8 and ny >= 4",
            });
        }
        if let Some(h) = self.grid.height {
            if !positive(h) {
                return Err(Error::InvalidParameter {
                    name: "height",
                    reason: "must be positive and finite",
                });
            }
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iter",
                reason: "must be at least 1",
            });
        }
        if !(self.tol_field > 0.0 && self.tol_multiplier > 0.0) {
            return Err(Error::InvalidParameter {
                name: "tol",
                reason: "tolerances must be positive",
            });
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "relaxation",
                reason: "must lie in (0, 1]",
            });
        }
        if let Some(f) = &self.initial {
            if !f.geometry().is_symmetric() {
                return Err(Error::InvalidParameter {
                    name: "initial",
                    reason: "initial field must sit on a grid centered on x1 = 0",
                });
            }
        }
        Ok(())
    }
}

/// Solver output.
#[derive(Clone, Debug, PartialEq)]
pub struct DipoleProfile {
    pub field: GridField,
    pub mode: Mode,
    pub lambda: f64,
    pub w: f64,
    pub gamma: f64,
    pub mu: f64,
    pub mass: f64,
    pub energy: EnergyReport,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl DipoleProfile {
    pub fn p(&self) -> Option<f64> {
        self.mode.exponent()
    }

    /// Rebuilds a profile from a stored field and its multipliers,
    /// recomputing impulse, mass, energies and the fixed-point residual.
    /// `iterations` is 0 and `converged` is set; judge it by `residual`.
    pub fn from_field(
        field: GridField,
        mode: Mode,
        lambda: f64,
        w: f64,
        gamma: f64,
    ) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: "must be positive and finite",
            });
        }
        if let Mode::Regular { p } = mode {
            if !(p > 1.0 && p.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "p",
                    reason: "must be finite and greater than 1",
                });
            }
        }
        let table = KernelTable::new(*field.geometry(), KernelKind::Green);
        let psi = StreamSamples::of_field(&table, &field);
        let energy = energy_from(&field, &psi, mode, lambda);
        let mut profile = DipoleProfile {
            mu: field.impulse(),
            mass: field.mass(),
            field,
            mode,
            lambda,
            w,
            gamma,
            energy,
            residual: f64::NAN,
            iterations: 0,
            converged: true,
        };
        profile.residual = residual_with(&table, &profile)?;
        Ok(profile)
    }
}

/// Stream function sampled at cell centers. Values may be any sign.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamSamples {
    pub geom: GridGeometry,
    pub values: Vec<f64>,
}

impl StreamSamples {
    pub fn from_fn<F: FnMut(crate::kernel::Point) -> f64>(geom: GridGeometry, mut f: F) -> Self {
        let mut values = Vec::with_capacity(geom.len());
        for j in 0..geom.ny {
            for i in 0..geom.nx {
                values.push(f(geom.center(i, j)));
            }
        }
        Self { geom, values }
    }

    /// `ψ = 𝒢[ω]` at every cell center.
    pub fn of_field(table: &KernelTable, field: &GridField) -> Self {
        Self {
            geom: *field.geometry(),
            values: table.apply(field.values()),
        }
    }

    fn blend(&self, other: &StreamSamples, r: f64) -> StreamSamples {
        StreamSamples {
            geom: self.geom,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (1.0 - r) * a + r * b)
                .collect(),
        }
    }
}

/// `ω = λ (ψ - W x2 - γ)₊^{1/(p-1)}` or, in patch mode, `λ` times the cell
/// fraction where `ψ - W x2 - γ > 0`.
///
/// Patch fractions use the bilinear interpolant of `ψ` through cell centers
/// and the wall (where `ψ = 0`), split into linear triangles on a 4×4
/// sub-grid and intersected exactly.
pub fn apply_vorticity_map(
    psi: &StreamSamples,
    w: f64,
    gamma: f64,
    mode: Mode,
    lambda: f64,
) -> GridField {
    let g = psi.geom;
    let values = match mode {
        Mode::Regular { p } => {
            let e = 1.0 / (p - 1.0);
            let mut out = Vec::with_capacity(g.len());
            for j in 0..g.ny {
                let shift = w * g.x2(j) + gamma;
                for &v in &psi.values[j * g.nx..(j + 1) * g.nx] {
                    let s = v - shift;
                    out.push(if s > 0.0 { lambda * power(s, e) } else { 0.0 });
                }
            }
            out
        }
        Mode::Patch => patch_fractions(psi, w, gamma)
            .into_iter()
            .map(|f| lambda * f)
            .collect(),
    };
    GridField::from_raw(g, values)
}

#[inline]
fn power(s: f64, e: f64) -> f64 {
    if e == 1.0 {
        s
    } else if e == 2.0 {
        s * s
    } else {
        powf(s, e)
    }
}

/// Nodal values of `ψ - W x2 - γ`: row 0 is the wall, rows 1..=ny the centers.
fn nodal_excess(psi: &StreamSamples, w: f64, gamma: f64) -> Vec<f64> {
    let g = psi.geom;
    let mut nodes = Vec::with_capacity((g.ny + 1) * g.nx);
    nodes.extend(core::iter::repeat_n(-gamma, g.nx));
    for j in 0..g.ny {
        let shift = w * g.x2(j) + gamma;
        nodes.extend(
            psi.values[j * g.nx..(j + 1) * g.nx]
                .iter()
                .map(|v| v - shift),
        );
    }
    nodes
}

const SUB: usize = 4;

fn patch_fractions(psi: &StreamSamples, w: f64, gamma: f64) -> Vec<f64> {
    let g = psi.geom;
    let (nx, ny) = (g.nx, g.ny);
    let nodes = nodal_excess(psi, w, gamma);
    let node = |i: isize, r: isize| -> f64 {
        let i = i.clamp(0, nx as isize - 1) as usize;
        let r = r.clamp(0, ny as isize) as usize;
        nodes[r * nx + i]
    };
    // excess at fractional position (u along columns, v along node rows)
    let interp = |u: f64, v: f64| -> f64 {
        let i0 = crate::math::floor(u);
        let r0 = crate::math::floor(v);
        let (fu, fv) = (u - i0, v - r0);
        let (i0, r0) = (i0 as isize, r0 as isize);
        let a = node(i0, r0);
        let b = node(i0 + 1, r0);
        let c = node(i0, r0 + 1);
        let d = node(i0 + 1, r0 + 1);
        (1.0 - fv) * ((1.0 - fu) * a + fu * b) + fv * ((1.0 - fu) * c + fu * d)
    };
    let mut out = alloc::vec![0.0; g.len()];
    let mut samples = [[0.0f64; SUB + 1]; SUB + 1];
    for j in 0..ny {
        for i in 0..nx {
            // every sample inside cell (i, j) interpolates nodes in this window
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for di in -1..=1isize {
                for r in [j as isize, j as isize + 1, j as isize + 2] {
                    let v = node(i as isize + di, r);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            if lo > 0.0 {
                out[g.index(i, j)] = 1.0;
                continue;
            }
            if hi <= 0.0 {
                continue;
            }
            for (a, row) in samples.iter_mut().enumerate() {
                // node row r sits at x2 = (r - ½)h for r ≥ 1, and the wall at x2 = 0
                let x2 = (j as f64 + a as f64 / SUB as f64) * g.cell;
                let v = x2_to_node_row(x2 / g.cell);
                for (b, s) in row.iter_mut().enumerate() {
                    let u = i as f64 + b as f64 / SUB as f64 - 0.5;
                    *s = interp(u, v);
                }
            }
            let mut frac = 0.0;
            for a in 0..SUB {
                for b in 0..SUB {
                    let (p00, p01) = (samples[a][b], samples[a][b + 1]);
                    let (p10, p11) = (samples[a + 1][b], samples[a + 1][b + 1]);
                    frac += triangle_positive_fraction(p00, p01, p11);
                    frac += triangle_positive_fraction(p00, p11, p10);
                }
            }
            out[g.index(i, j)] = frac / (2 * SUB * SUB) as f64;
        }
    }
    out
}

// Maps x2/h to the fractional node-row coordinate: rows 1..=ny are centers at
// (r - ½)h, row 0 is the wall at 0.
fn x2_to_node_row(t: f64) -> f64 {
    if t <= 0.5 {
        2.0 * t.max(0.0)
    } else {
        t + 0.5
    }
}

/// Fraction of a triangle where the linear interpolant of its vertex values
/// is positive.
pub fn triangle_positive_fraction(a: f64, b: f64, c: f64) -> f64 {
    let pos = (a > 0.0) as u8 + (b > 0.0) as u8 + (c > 0.0) as u8;
    match pos {
        0 => 0.0,
        3 => 1.0,
        1 => {
            let (p, n1, n2) = if a > 0.0 {
                (a, b, c)
            } else if b > 0.0 {
                (b, a, c)
            } else {
                (c, a, b)
            };
            p * p / ((p - n1) * (p - n2))
        }
        _ => {
            let (n, p1, p2) = if a <= 0.0 {
                (a, b, c)
            } else if b <= 0.0 {
                (b, a, c)
            } else {
                (c, a, b)
            };
            if n == 0.0 {
                1.0
            } else {
                1.0 - n * n / ((n - p1) * (n - p2))
            }
        }
    }
}

fn impulse_and_mass(f: &GridField) -> (f64, f64) {
    (f.impulse(), f.mass())
}

/// Multipliers found for one stream function.
#[derive(Clone, Debug, PartialEq)]
pub struct Multipliers {
    pub w: f64,
    pub gamma: f64,
    pub field: GridField,
}

const BISECTION_STEPS: usize = 200;

// Smallest W for which the mapped field vanishes near the left, right and top
// edges, and the largest W with a nonzero field.
fn speed_bracket(psi: &StreamSamples, gamma: f64, mode: Mode) -> (f64, f64) {
    let g = psi.geom;
    let ring = if mode == Mode::Patch { 2 } else { 1 };
    let mut w_lo = 0.0f64;
    let mut w_hi = 0.0f64;
    for j in 0..g.ny {
        let x2 = g.x2(j);
        for i in 0..g.nx {
            let v = (psi.values[g.index(i, j)] - gamma) / x2;
            w_hi = w_hi.max(v);
            let edge = i < ring || i + ring >= g.nx || j + ring >= g.ny;
            if edge {
                w_lo = w_lo.max(v);
            }
        }
    }
    (w_lo, w_hi.max(w_lo))
}

// Bisection on W for impulse μ at fixed γ.
fn solve_speed(psi: &StreamSamples, gamma: f64, config: &SolveConfig) -> Result<(f64, GridField)> {
    let mode = config.mode;
    let (mut lo, mut hi) = speed_bracket(psi, gamma, mode);
    let at_lo = apply_vorticity_map(psi, lo, gamma, mode, config.lambda);
    let attainable = at_lo.impulse();
    if attainable < config.mu {
        return Err(Error::InfeasibleImpulse {
            mu: config.mu,
            attainable,
        });
    }
    let mut best = (lo, at_lo);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = apply_vorticity_map(psi, mid, gamma, mode, config.lambda);
        if f.impulse() >= config.mu {
            lo = mid;
            best = (mid, f);
        } else {
            hi = mid;
        }
    }
    let (w, f) = best;
    let imp = f.impulse();
    if imp <= 0.0 {
        return Err(Error::InfeasibleImpulse {
            mu: config.mu,
            attainable,
        });
    }
    // remove the residual bisection error by a uniform rescale
    Ok((w, f.scaled(config.mu / imp)))
}

/// Finds `W ≥ 0`, `γ ≥ 0` so that the mapped field has impulse `μ` and mass
/// at most `ν`, with `γ > 0` only when the mass constraint is active.
pub fn solve_multipliers(psi: &StreamSamples, config: &SolveConfig) -> Result<Multipliers> {
    if psi.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "psi",
            reason: "stream samples must be finite",
        });
    }
    let (w0, f0) = solve_speed(psi, 0.0, config)?;
    let (_, mass0) = impulse_and_mass(&f0);
    if mass0 <= config.nu {
        return Ok(Multipliers {
            w: w0,
            gamma: 0.0,
            field: f0,
        });
    }
    let psi_max = psi.values.iter().cloned().fold(0.0, f64::max);
    let (mut lo, mut hi) = (0.0, psi_max);
    let mut best: Option<(f64, f64, GridField)> = None;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match solve_speed(psi, mid, config) {
            Ok((w, f)) => {
                if f.mass() > config.nu {
                    lo = mid;
                } else {
                    hi = mid;
                    best = Some((w, mid, f));
                }
            }
            Err(Error::InfeasibleImpulse { .. }) => hi = mid,
            Err(e) => return Err(e),
        }
    }
    match best {
        Some((w, gamma, field)) => Ok(Multipliers { w, gamma, field }),
        None => Err(Error::InfeasibleImpulse {
            mu: config.mu,
            attainable: 0.0,
        }),
    }
}

fn penalty_of(field: &GridField, mode: Mode, lambda: f64) -> f64 {
    match mode {
        Mode::Regular { p } => lambda / p * field.lp_power(p) / powf(lambda, p),
        Mode::Patch => 0.0,
    }
}

fn energy_from(field: &GridField, psi: &StreamSamples, mode: Mode, lambda: f64) -> EnergyReport {
    let kinetic = 0.5
        * field
            .values()
            .iter()
            .zip(&psi.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
        * field.geometry().cell_area();
    EnergyReport::new(kinetic, penalty_of(field, mode, lambda))
}

/// `‖ω - map(𝒢[ω], W, γ)‖₁ / ‖ω‖₁` for a profile.
pub fn fixed_point_residual(profile: &DipoleProfile) -> Result<f64> {
    let table = KernelTable::new(*profile.field.geometry(), KernelKind::Green);
    residual_with(&table, profile)
}

pub(crate) fn residual_with(table: &KernelTable, profile: &DipoleProfile) -> Result<f64> {
    let mass = profile.field.mass();
    if mass <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let psi = StreamSamples::of_field(table, &profile.field);
    let mapped = apply_vorticity_map(&psi, profile.w, profile.gamma, profile.mode, profile.lambda);
    Ok(profile.field.l1_distance(&mapped)? / mass)
}

/// Rough support radius used to size the first trial box.
pub fn length_scale_guess(mode: Mode, mu: f64, lambda: f64) -> f64 {
    match mode {
        Mode::Patch => powf(1.5 * mu / lambda, 1.0 / 3.0),
        Mode::Regular { p } => {
            // Lamb-like balance ω ~ λ (ω L²/c)^α with α = 1/(p-1), c = j₁₁², μ ~ ω L³/2
            let alpha = 1.0 / (p - 1.0);
            let c = 14.68197064212389;
            if (alpha - 1.0).abs() < 1e-9 {
                sqrt(c / lambda)
            } else {
                let e = (3.0 - alpha) / (1.0 - alpha);
                let k = powf(c, alpha / (1.0 - alpha)) / powf(lambda, 1.0 / (1.0 - alpha));
                powf(2.0 * mu * k, 1.0 / e)
            }
        }
    }
}

/// Gaussian bump centered at `(0, R/2)` rescaled to impulse `μ`.
pub fn initial_guess(geom: GridGeometry, radius: f64, mu: f64) -> Result<GridField> {
    let s = 0.35 * radius;
    let f = GridField::from_fn(geom, |x| {
        let d2 = x.x1 * x.x1 + (x.x2 - 0.5 * radius) * (x.x2 - 0.5 * radius);
        exp(-d2 / (2.0 * s * s))
    });
    let imp = f.impulse();
    if !(imp > 0.0) {
        return Err(Error::ZeroMass);
    }
    Ok(f.scaled(mu / imp))
}

/// Bilinear resampling of cell-center values onto another grid (zero outside).
pub fn resample(field: &GridField, target: GridGeometry) -> GridField {
    let g = field.geometry();
    GridField::from_fn(target, |x| {
        let u = (x.x1 - g.origin_x1) / g.cell - 0.5;
        let v = x.x2 / g.cell - 0.5;
        let (i0, j0) = (crate::math::floor(u), crate::math::floor(v));
        let (fu, fv) = (u - i0, v - j0);
        let at = |i: f64, j: f64| -> f64 {
            if i < 0.0 || j < 0.0 || i >= g.nx as f64 || j >= g.ny as f64 {
                0.0
            } else {
                field.get(i as usize, j as usize)
            }
        };
        (1.0 - fv) * ((1.0 - fu) * at(i0, j0) + fu * at(i0 + 1.0, j0))
            + fv * ((1.0 - fu) * at(i0, j0 + 1.0) + fu * at(i0 + 1.0, j0 + 1.0))
    })
}

/// Convergence trace of one solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveTrace {
    pub penalized_energy: Vec<f64>,
    pub residual: Vec<f64>,
    pub speed: Vec<f64>,
}

/// Runs the relaxed fixed-point iteration. Non-convergence is reported
/// through `converged = false`, not as an error.
pub fn solve_dipole(config: &SolveConfig) -> Result<DipoleProfile> {
    solve_dipole_traced(config).map(|(p, _)| p)
}

pub fn solve_dipole_traced(config: &SolveConfig) -> Result<(DipoleProfile, SolveTrace)> {
    config.validate()?;
    let start = match &config.initial {
        Some(f) => {
            let imp = f.impulse();
            if !(imp > 0.0) {
                return Err(Error::ZeroMass);
            }
            f.scaled(config.mu / imp)
        }
        None if is_scale_free(config.mode) => {
            // the scale is set by the strength afterwards
            let geom = GridGeometry::symmetric(config.grid.nx, config.grid.ny, 1.0)?;
            initial_guess(geom, 0.6, config.mu)?
        }
        None => {
            let geom = match config.grid.height {
                Some(h) => GridGeometry::symmetric(config.grid.nx, config.grid.ny, h)?,
                None => fit_domain(config)?,
            };
            seed_for(config, geom)?
        }
    };
    iterate_traced(config, start)
}

fn seed_for(config: &SolveConfig, geom: GridGeometry) -> Result<GridField> {
    let r = length_scale_guess(config.mode, config.mu, config.lambda).min(0.6 * geom.height());
    initial_guess(geom, r, config.mu)
}

// Coarse trial solves that adjust the box until the support fills a
// reasonable part of it without reaching the edges.
fn fit_domain(config: &SolveConfig) -> Result<GridGeometry> {
    let aspect = config.grid.nx / config.grid.ny;
    let (cnx, cny) = (32 * aspect, 32);
    let mut height = 2.0 * length_scale_guess(config.mode, config.mu, config.lambda);
    let mut trial = config.clone();
    trial.grid = GridSpec {
        nx: cnx,
        ny: cny,
        height: None,
    };
    trial.max_iter = 300;
    trial.tol_field = 1e-4;
    trial.tol_multiplier = 1e-4;
    for _ in 0..60 {
        let geom = GridGeometry::symmetric(cnx, cny, height)?;
        match iterate(&trial, seed_for(config, geom)?) {
            Err(Error::InfeasibleImpulse { .. }) => height *= 2.0,
            Err(e) => return Err(e),
            Ok(profile) => {
                let f = &profile.field;
                if !f.has_margin() {
                    height *= 2.0;
                    continue;
                }
                let Some((top, half)) = f.support_extent() else {
                    height *= 2.0;
                    continue;
                };
                let extent = (top + 0.5 * geom.cell).max(half + 0.5 * geom.cell);
                let target = 1.25 * extent;
                if extent < 0.4 * height || target > height {
                    height = target.max(4.0 * geom.cell);
                    if extent >= 0.4 * target {
                        return GridGeometry::symmetric(config.grid.nx, config.grid.ny, target);
                    }
                    continue;
                }
                return GridGeometry::symmetric(config.grid.nx, config.grid.ny, target);
            }
        }
    }
    Err(Error::NotConverged)
}

fn symmetrized(f: &GridField) -> Result<GridField> {
    even_part(&steiner_symmetrize(f)?)
}

fn iterate(config: &SolveConfig, start: GridField) -> Result<DipoleProfile> {
    iterate_traced(config, start).map(|(p, _)| p)
}

/// Target mean height `μ / mass` of the scale-free iteration, relative to
/// the box height.
const MEAN_HEIGHT_FRACTION: f64 = 0.3;

// For 4/3 < p < 2 the map is superlinear and the fixed-λ iteration drifts
// in scale: it either collapses onto a few cells or spreads to the box.
fn is_scale_free(mode: Mode) -> bool {
    matches!(mode, Mode::Regular { p } if p < 2.0 && !mode.is_degenerate())
}

// Map step with λ free: the speed pins the mean height, the amplitude the
// impulse. Returns (W, effective λ, field).
fn normalized_step(
    psi: &StreamSamples,
    mode: Mode,
    mu: f64,
    mean_height: f64,
) -> Result<(f64, f64, GridField)> {
    let (mut lo, mut hi) = speed_bracket(psi, 0.0, mode);
    let height = |f: &GridField| -> f64 {
        let m = f.mass();
        if m > 0.0 {
            f.impulse() / m
        } else {
            0.0
        }
    };
    let mut best = (lo, apply_vorticity_map(psi, lo, 0.0, mode, 1.0));
    if height(&best.1) > mean_height {
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let f = apply_vorticity_map(psi, mid, 0.0, mode, 1.0);
            if f.mass() > 0.0 && height(&f) >= mean_height {
                lo = mid;
                best = (mid, f);
            } else {
                hi = mid;
            }
        }
    }
    let (w, f) = best;
    let imp = f.impulse();
    if !(imp > 0.0) {
        return Err(Error::InfeasibleImpulse {
            mu,
            attainable: 0.0,
        });
    }
    let c = mu / imp;
    Ok((w, c, f.scaled(c)))
}

// Uses ω ↦ L⁻³ ω(·/L), which keeps μ and turns a solution with strength
// `from` into one with strength `to`; the grid is stretched by L.
fn rescale_to_strength(
    field: &GridField,
    w: f64,
    from: f64,
    to: f64,
    p: f64,
) -> Result<(GridField, f64)> {
    let alpha = 1.0 / (p - 1.0);
    let l = powf(to / from, 1.0 / (alpha - 3.0));
    let g = field.geometry();
    let geom = GridGeometry::new(g.origin_x1 * l, g.cell * l, g.nx, g.ny)?;
    let s = 1.0 / (l * l * l);
    let values = field.values().iter().map(|v| v * s).collect();
    Ok((GridField::from_values(geom, values)?, w / (l * l)))
}

fn iterate_scale_free(
    config: &SolveConfig,
    start: GridField,
) -> Result<(DipoleProfile, SolveTrace)> {
    let Mode::Regular { p } = config.mode else {
        return Err(Error::ModeMismatch);
    };
    let geom = *start.geometry();
    let table = KernelTable::new(geom, KernelKind::Green);
    let mean_height = MEAN_HEIGHT_FRACTION * geom.height();
    let mut omega = symmetrized(&start)?;
    let mut psi = StreamSamples::of_field(&table, &omega);
    let mut trace = SolveTrace::default();
    let mut w_prev = f64::NAN;
    let mut converged = false;
    let mut iterations = 0;
    let mut last = (0.0, 1.0, omega.clone());
    let r = config.relaxation;
    for k in 0..config.max_iter {
        iterations = k + 1;
        let (w, c, f) = normalized_step(&psi, config.mode, config.mu, mean_height)?;
        let target = symmetrized(&f)?;
        let res = omega.l1_distance(&target)? / omega.mass().max(f64::MIN_POSITIVE);
        let dw = (w - w_prev).abs() / w.abs().max(f64::MIN_POSITIVE);
        trace.residual.push(res);
        trace.speed.push(w);
        trace
            .penalized_energy
            .push(energy_from(&omega, &psi, config.mode, c).penalized);
        last = (w, c, target.clone());
        if res < config.tol_field && dw < config.tol_multiplier {
            converged = true;
            break;
        }
        w_prev = w;
        let psi_target = StreamSamples::of_field(&table, &target);
        omega = omega.blend(&target, r)?;
        psi = psi.blend(&psi_target, r);
    }
    let (w, c, field) = last;
    let (field, w) = rescale_to_strength(&field, w, c, config.lambda, p)?;
    let table = KernelTable::new(*field.geometry(), KernelKind::Green);
    let psi = StreamSamples::of_field(&table, &field);
    let mut profile = DipoleProfile {
        mass: field.mass(),
        energy: energy_from(&field, &psi, config.mode, config.lambda),
        field,
        mode: config.mode,
        lambda: config.lambda,
        w,
        gamma: 0.0,
        mu: config.mu,
        residual: f64::NAN,
        iterations,
        converged,
    };
    profile.residual = residual_with(&table, &profile)?;
    if profile.mass > config.nu {
        // the mass cap binds: continue at fixed λ with the flux multiplier
        let (mut capped, more) = iterate_fixed(config, profile.field)?;
        capped.iterations += iterations;
        let mut all = trace;
        all.residual.extend(more.residual);
        all.speed.extend(more.speed);
        all.penalized_energy.extend(more.penalized_energy);
        return Ok((capped, all));
    }
    Ok((profile, trace))
}

fn iterate_traced(config: &SolveConfig, start: GridField) -> Result<(DipoleProfile, SolveTrace)> {
    if is_scale_free(config.mode) {
        iterate_scale_free(config, start)
    } else {
        iterate_fixed(config, start)
    }
}

/// Number of past differences kept by the Anderson mixing.
const ANDERSON_DEPTH: usize = 5;
/// Residual growth, relative to the best so far, that triggers a restart.
const ANDERSON_REJECT: f64 = 2.0;

// Anderson mixing on the fixed-point map `x ↦ x + f(x)`. The relaxed
// iteration alone contracts very slowly along the free boundary.
struct Anderson {
    depth: usize,
    xs: Vec<Vec<f64>>,
    fs: Vec<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Self {
            depth,
            xs: Vec::new(),
            fs: Vec::new(),
        }
    }

    fn clear(&mut self) {
        self.xs.clear();
        self.fs.clear();
    }

    fn push(&mut self, x: &[f64], f: &[f64]) {
        if self.xs.len() > self.depth {
            self.xs.remove(0);
            self.fs.remove(0);
        }
        self.xs.push(x.to_vec());
        self.fs.push(f.to_vec());
    }

    /// `x_k + β f_k - Σ γ_i (Δx_i + β Δf_i)` with `γ` minimizing
    /// `|f_k - Σ γ_i Δf_i|`; `None` until two points are stored.
    fn extrapolate(&self, beta: f64) -> Option<Vec<f64>> {
        let n = self.xs.len();
        if n < 2 {
            return None;
        }
        let m = n - 1;
        let df: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                self.fs[i + 1]
                    .iter()
                    .zip(&self.fs[i])
                    .map(|(a, b)| a - b)
                    .collect()
            })
            .collect();
        let fk = &self.fs[m];
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut a = alloc::vec![0.0; m * m];
        let mut rhs = alloc::vec![0.0; m];
        for i in 0..m {
            for j in 0..m {
                a[i * m + j] = dot(&df[i], &df[j]);
            }
            rhs[i] = dot(&df[i], fk);
        }
        let scale = (0..m).map(|i| a[i * m + i]).fold(0.0, f64::max);
        if !(scale > 0.0) {
            return None;
        }
        for i in 0..m {
            a[i * m + i] += 1e-10 * scale;
        }
        let gamma = solve_small(&mut a, &mut rhs, m)?;
        let xk = &self.xs[m];
        let mut out: Vec<f64> = xk.iter().zip(fk).map(|(x, f)| x + beta * f).collect();
        for (i, g) in gamma.iter().enumerate() {
            for (t, o) in out.iter_mut().enumerate() {
                let dx = self.xs[i + 1][t] - self.xs[i][t];
                let dfv = df[i][t];
                *o -= g * (dx + beta * dfv);
            }
        }
        Some(out)
    }
}

// Gaussian elimination with partial pivoting on an `m × m` row-major system.
fn solve_small(a: &mut [f64], b: &mut [f64], m: usize) -> Option<Vec<f64>> {
    for c in 0..m {
        let piv = (c..m).max_by(|&i, &j| a[i * m + c].abs().total_cmp(&a[j * m + c].abs()))?;
        if a[piv * m + c] == 0.0 {
            return None;
        }
        if piv != c {
            for k in 0..m {
                a.swap(c * m + k, piv * m + k);
            }
            b.swap(c, piv);
        }
        for r in (c + 1)..m {
            let f = a[r * m + c] / a[c * m + c];
            for k in c..m {
                a[r * m + k] -= f * a[c * m + k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = alloc::vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = ((r + 1)..m).map(|k| a[r * m + k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r * m + r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn iterate_fixed(config: &SolveConfig, start: GridField) -> Result<(DipoleProfile, SolveTrace)> {
    let geom = *start.geometry();
    let table = KernelTable::new(geom, KernelKind::Green);
    let mode = config.mode;
    let mut omega = symmetrized(&start)?;
    let mut psi = StreamSamples::of_field(&table, &omega);
    let mut energy = energy_from(&omega, &psi, mode, config.lambda);
    let mut trace = SolveTrace::default();
    let mut w_prev = f64::NAN;
    let mut r = config.relaxation;
    let mut converged = false;
    let mut iterations = 0;
    let mut last = (0.0, 0.0);
    let mut mapped = omega.clone();
    let mut anderson = Anderson::new(ANDERSON_DEPTH);
    let mut best: Option<(f64, GridField, StreamSamples)> = None;
    for k in 0..config.max_iter {
        iterations = k + 1;
        let m = solve_multipliers(&psi, config)?;
        last = (m.w, m.gamma);
        let target = symmetrized(&m.field)?;
        mapped = target.clone();
        let res = omega.l1_distance(&target)? / omega.mass().max(f64::MIN_POSITIVE);
        let dw = (m.w - w_prev).abs() / m.w.abs().max(f64::MIN_POSITIVE);
        trace.residual.push(res);
        trace.speed.push(m.w);
        trace.penalized_energy.push(energy.penalized);
        if res < config.tol_field && dw < config.tol_multiplier {
            converged = true;
            break;
        }
        w_prev = m.w;
        match &best {
            // an extrapolated step made things worse: restart from the best
            // iterate with a plain relaxed step
            Some((b, f, p)) if res > ANDERSON_REJECT * b => {
                omega = f.clone();
                psi = p.clone();
                energy = energy_from(&omega, &psi, mode, config.lambda);
                anderson.clear();
                continue;
            }
            Some((b, _, _)) if res >= *b => {}
            _ => best = Some((res, omega.clone(), psi.clone())),
        }
        let diff: Vec<f64> = target
            .values()
            .iter()
            .zip(omega.values())
            .map(|(t, o)| t - o)
            .collect();
        anderson.push(omega.values(), &diff);
        if let Some(next) = anderson.extrapolate(r) {
            let cap = if mode == Mode::Patch {
                config.lambda
            } else {
                f64::INFINITY
            };
            let values: Vec<f64> = next.into_iter().map(|v| v.clamp(0.0, cap)).collect();
            let cand = GridField::from_raw(geom, values);
            let imp = cand.impulse();
            if imp > 0.0 {
                omega = cand.scaled(config.mu / imp);
                psi = StreamSamples::of_field(&table, &omega);
                energy = energy_from(&omega, &psi, mode, config.lambda);
                continue;
            }
            anderson.clear();
        }
        let psi_target = StreamSamples::of_field(&table, &target);
        // accept the relaxed step only if the penalized energy does not drop
        let mut step = r;
        loop {
            let cand = omega.blend(&target, step)?;
            let cand_psi = psi.blend(&psi_target, step);
            let e = energy_from(&cand, &cand_psi, mode, config.lambda);
            if e.penalized >= energy.penalized - 1e-9 * energy.penalized.abs() || step < 1.0 / 64.0
            {
                omega = cand;
                psi = cand_psi;
                energy = e;
                break;
            }
            step *= 0.5;
        }
        // shrink after a rejected step, recover slowly after accepted ones
        r = if step < r {
            step.max(1.0 / 64.0)
        } else {
            (1.25 * r).min(config.relaxation)
        };
    }
    // the last mapped field has the exact support and impulse of the
    // multipliers; the relaxed iterate keeps geometrically decaying tails
    // of every earlier iterate
    let omega = mapped;
    psi = StreamSamples::of_field(&table, &omega);
    let energy = energy_from(&omega, &psi, mode, config.lambda);
    let mut profile = DipoleProfile {
        mass: omega.mass(),
        field: omega,
        mode,
        lambda: config.lambda,
        w: last.0,
        gamma: last.1,
        mu: config.mu,
        energy,
        residual: f64::NAN,
        iterations,
        converged,
    };
    profile.residual = residual_with(&table, &profile)?;
    Ok((profile, trace))
}

/// [`solve_dipole_traced`] starting from a given field on its own grid.
pub fn solve_from(config: &SolveConfig, start: GridField) -> Result<(DipoleProfile, SolveTrace)> {
    config.validate()?;
    let imp = start.impulse();
    if !(imp > 0.0) {
        return Err(Error::ZeroMass);
    }
    iterate_traced(config, start.scaled(config.mu / imp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Point;

    fn grid() -> GridGeometry {
        GridGeometry::symmetric(32, 16, 2.0).unwrap()
    }

    #[test]
    fn map_vanishes_on_the_threshold() {
        let g = grid();
        let psi = StreamSamples::from_fn(g, |x| 0.7 * x.x2 + 0.2);
        let f = apply_vorticity_map(&psi, 0.7, 0.2 + 1e-12, Mode::Regular { p: 2.0 }, 1.0);
        assert!(f.is_zero());
        let f = apply_vorticity_map(&psi, 0.7, 0.2 + 1e-12, Mode::Patch, 1.0);
        assert!(f.is_zero());
    }

    #[test]
    fn unit_excess_maps_to_unit_value() {
        let g = grid();
        let inside = |x: Point| x.x1.abs() < 0.5 && x.x2 > 0.5 && x.x2 < 1.0;
        let psi =
            StreamSamples::from_fn(g, |x| 0.3 * x.x2 + 0.1 + if inside(x) { 1.0 } else { 0.0 });
        let f = apply_vorticity_map(&psi, 0.3, 0.1, Mode::Regular { p: 2.0 }, 1.0);
        for j in 0..g.ny {
            for i in 0..g.nx {
                let v = f.get(i, j);
                if inside(g.center(i, j)) {
                    assert!((v - 1.0).abs() < 1e-12);
                } else {
                    assert!(v.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn patch_fraction_of_a_linear_crossing() {
        let g = grid();
        // excess = x1 - 0.0371 crosses inside column 16
        let c = 0.0371;
        let psi = StreamSamples::from_fn(g, |x| 0.5 * x.x2 + 0.25 + (x.x1 - c));
        let f = apply_vorticity_map(&psi, 0.5, 0.25, Mode::Patch, 1.0);
        for j in 2..g.ny - 2 {
            for i in 2..g.nx - 2 {
                let r = g.rect(i, j);
                let exact = ((r.x1 - c.max(r.x0)) / (r.x1 - r.x0)).clamp(0.0, 1.0);
                assert!(
                    (f.get(i, j) - exact).abs() < 1e-3,
                    "{i},{j}: {} vs {exact}",
                    f.get(i, j)
                );
            }
        }
    }

    #[test]
    fn triangle_fractions() {
        assert_eq!(triangle_positive_fraction(1.0, 1.0, 1.0), 1.0);
        assert_eq!(triangle_positive_fraction(-1.0, -1.0, 0.0), 0.0);
        assert!((triangle_positive_fraction(1.0, -1.0, -1.0) - 0.25).abs() < 1e-15);
        assert!((triangle_positive_fraction(-1.0, 1.0, 1.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn impulse_decreases_with_speed() {
        let g = grid();
        let psi = StreamSamples::from_fn(g, |x| {
            x.x2 * (1.0
                + if x.x1.abs() < 0.5 && x.x2 < 0.8 {
                    1.0
                } else {
                    0.0
                })
        });
        for mode in [Mode::Regular { p: 2.0 }, Mode::Patch] {
            let a = apply_vorticity_map(&psi, 1.1, 0.0, mode, 1.0).impulse();
            let b = apply_vorticity_map(&psi, 1.5, 0.0, mode, 1.0).impulse();
            assert!(a > b && b > 0.0, "{mode:?}: {a} {b}");
        }
    }

    #[test]
    fn linear_stream_is_infeasible() {
        let g = grid();
        let psi = StreamSamples::from_fn(g, |x| x.x2);
        for mode in [Mode::Regular { p: 2.0 }, Mode::Patch] {
            let mut cfg = SolveConfig::new(mode, 0.1);
            cfg.grid = GridSpec {
                nx: 32,
                ny: 16,
                height: Some(2.0),
            };
            assert!(matches!(
                solve_multipliers(&psi, &cfg),
                Err(Error::InfeasibleImpulse { .. })
            ));
        }
    }

    #[test]
    fn slack_mass_gives_zero_flux() {
        let g = grid();
        let psi = StreamSamples::from_fn(g, |x| {
            let r2 = x.x1 * x.x1 + (x.x2 - 0.6).powi(2);
            x.x2 * (0.5 + 2.0 * exp(-4.0 * r2))
        });
        let mut cfg = SolveConfig::new(Mode::Regular { p: 2.0 }, 0.05);
        cfg.nu = 10.0;
        let m = solve_multipliers(&psi, &cfg).unwrap();
        assert_eq!(m.gamma, 0.0);
        assert!((m.field.impulse() - 0.05).abs() < 1e-12);
        assert!(m.field.mass() <= cfg.nu);

        // now cap the mass below what γ = 0 gives
        cfg.nu = 0.95 * m.field.mass();
        let m2 = solve_multipliers(&psi, &cfg).unwrap();
        assert!(m2.gamma > 0.0);
        assert!((m2.field.mass() - cfg.nu).abs() < 1e-6 * cfg.nu);
        assert!((m2.field.impulse() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn zero_field_residual_is_an_error() {
        let profile = DipoleProfile {
            field: GridField::zeros(grid()),
            mode: Mode::Patch,
            lambda: 1.0,
            w: 1.0,
            gamma: 0.0,
            mu: 1.0,
            mass: 0.0,
            energy: EnergyReport::new(0.0, 0.0),
            residual: 0.0,
            iterations: 0,
            converged: false,
        };
        assert_eq!(fixed_point_residual(&profile), Err(Error::ZeroMass));
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = SolveConfig::new(Mode::Regular { p: 1.0 }, 0.1);
        assert!(cfg.validate().is_err());
        cfg.mode = Mode::Patch;
        cfg.mu = -1.0;
        assert!(cfg.validate().is_err());
    }
}
