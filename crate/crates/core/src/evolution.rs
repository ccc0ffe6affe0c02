//! Vortex-blob evolution of upper-half vorticity with an image wall.
//!
//! Each particle carries a circulation `Γ ≥ 0` and an area. Its velocity
//! field is that of an algebraic blob of radius `δ` together with its
//! negative mirror image, which is the regularized stream function
//! `G_δ(x, y) = (1/4π) ln((|x - y*|² + δ²) / (|x - y|² + δ²))`.
//! The dynamics are Hamiltonian in `H = ½ Σ Γi Γj G_δ(xi, xj)`, so energy and
//! impulse `Σ Γ x2` are conserved up to time-stepping error.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{contour_perimeter, rasterize, ContourPolygon, GridField, GridGeometry};
use crate::identities::slope;
use crate::kernel::{Point, Velocity, VortexSource};
use crate::math::{ln, powf, sqrt, PI};

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    pub positions: Vec<Point>,
    pub circulations: Vec<f64>,
    /// Area represented by each particle, used for `L^p` norms.
    pub areas: Vec<f64>,
    pub blob_radius: f64,
    pub time: f64,
    /// Number of times a particle was pushed back across the wall.
    pub wall_clamps: usize,
}

/// Input to [`discretize`].
#[derive(Clone, Copy, Debug)]
pub enum ParticleSource<'a> {
    Grid(&'a GridField),
    /// Uniform patch of value `strength` inside the contour, sampled on `template`.
    Contour {
        contour: &'a ContourPolygon,
        strength: f64,
        template: &'a GridGeometry,
    },
}

/// Velocity at `x` of a unit blob at `y` plus its negative image.
#[inline]
fn pair_kernel(x: Point, y: Point, d2: f64) -> (f64, f64) {
    let dx = x.x1 - y.x1;
    let r2 = dx * dx + (x.x2 - y.x2) * (x.x2 - y.x2) + d2;
    let ri = dx * dx + (x.x2 + y.x2) * (x.x2 + y.x2) + d2;
    let u1 = ((y.x2 - x.x2) / r2 + (x.x2 + y.x2) / ri) / (2.0 * PI);
    let u2 = dx * (1.0 / r2 - 1.0 / ri) / (2.0 * PI);
    (u1, u2)
}

#[inline]
fn pair_green(x: Point, y: Point, d2: f64) -> f64 {
    let dx = x.x1 - y.x1;
    let r2 = dx * dx + (x.x2 - y.x2) * (x.x2 - y.x2) + d2;
    let ri = dx * dx + (x.x2 + y.x2) * (x.x2 + y.x2) + d2;
    ln(ri / r2) / (4.0 * PI)
}

/// Velocities induced at every particle, using the pair symmetries of the
/// kernel: the direct part is odd under swapping, the image `u1` even and
/// the image `u2` odd.
fn self_velocities(pos: &[Point], circ: &[f64], d2: f64) -> Vec<Velocity> {
    let n = pos.len();
    let mut u = vec![Velocity::default(); n];
    let c = 1.0 / (2.0 * PI);
    for i in 0..n {
        let x = pos[i];
        let gi = circ[i];
        // own image
        let s = 2.0 * x.x2;
        u[i].u1 += gi * c * s / (s * s + d2);
        for j in (i + 1)..n {
            let y = pos[j];
            let gj = circ[j];
            let dx = x.x1 - y.x1;
            let dd = x.x2 - y.x2;
            let sx = x.x2 + y.x2;
            let r2 = dx * dx + dd * dd + d2;
            let ri = dx * dx + sx * sx + d2;
            let inv_r = c / r2;
            let inv_i = c / ri;
            // direct: u1 = -dd/r2, u2 = dx/r2 at x; opposite at y
            let d1 = -dd * inv_r;
            let d2_ = dx * inv_r;
            let i1 = sx * inv_i;
            let i2 = -dx * inv_i;
            u[i].u1 += gj * (d1 + i1);
            u[i].u2 += gj * (d2_ + i2);
            u[j].u1 += gi * (-d1 + i1);
            u[j].u2 += gi * (-d2_ - i2);
        }
    }
    u
}

fn velocities_at(pos: &[Point], circ: &[f64], d2: f64, targets: &[Point]) -> Vec<Velocity> {
    targets
        .iter()
        .map(|&x| {
            let mut v = Velocity::default();
            for (&y, &g) in pos.iter().zip(circ) {
                let (a, b) = pair_kernel(x, y, d2);
                v.u1 += g * a;
                v.u2 += g * b;
            }
            if x.x2 == 0.0 {
                v.u2 = 0.0;
            }
            v
        })
        .collect()
}

impl VortexSource for ParticleEnsemble {
    fn velocity_at(&self, x: Point) -> Velocity {
        let d2 = self.blob_radius * self.blob_radius;
        velocities_at(&self.positions, &self.circulations, d2, &[x])[0]
    }
}

impl ParticleEnsemble {
    pub fn new(
        positions: Vec<Point>,
        circulations: Vec<f64>,
        areas: Vec<f64>,
        blob_radius: f64,
    ) -> Result<Self> {
        if positions.len() != circulations.len() || positions.len() != areas.len() {
            return Err(Error::InvalidParameter {
                name: "particles",
                reason: "positions, circulations and areas must have equal length",
            });
        }
        if !(blob_radius > 0.0 && blob_radius.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "blob_radius",
                reason: "must be positive and finite",
            });
        }
        if circulations.iter().any(|g| !(*g >= 0.0 && g.is_finite()))
            || areas.iter().any(|a| !(*a > 0.0 && a.is_finite()))
            || positions
                .iter()
                .any(|p| !(p.x2 >= 0.0 && p.x1.is_finite() && p.x2.is_finite()))
        {
            return Err(Error::InvalidParameter {
                name: "particles",
                reason: "need finite positions with x2 >= 0, circulations >= 0 and areas > 0",
            });
        }
        Ok(Self {
            positions,
            circulations,
            areas,
            blob_radius,
            time: 0.0,
            wall_clamps: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.circulations.iter().sum()
    }

    pub fn impulse(&self) -> f64 {
        self.positions
            .iter()
            .zip(&self.circulations)
            .map(|(x, g)| g * x.x2)
            .sum()
    }

    /// `‖ω‖_p` with each particle standing for a uniform value on its area.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let s: f64 = self
            .circulations
            .iter()
            .zip(&self.areas)
            .map(|(g, a)| a * powf(g / a, p))
            .sum();
        powf(s, 1.0 / p)
    }

    /// Regularized kinetic energy `H`.
    pub fn energy(&self) -> f64 {
        let d2 = self.blob_radius * self.blob_radius;
        let n = self.len();
        let mut e = 0.0;
        for i in 0..n {
            let x = self.positions[i];
            let gi = self.circulations[i];
            e += 0.5 * gi * gi * pair_green(x, x, d2);
            for j in (i + 1)..n {
                e += gi * self.circulations[j] * pair_green(x, self.positions[j], d2);
            }
        }
        e
    }

    /// Circulation-weighted mean of `x1`; zero for an empty ensemble.
    pub fn center_x1(&self) -> f64 {
        let m = self.mass();
        if m == 0.0 {
            return 0.0;
        }
        self.positions
            .iter()
            .zip(&self.circulations)
            .map(|(x, g)| g * x.x1)
            .sum::<f64>()
            / m
    }

    /// Velocities at all particles.
    pub fn velocities(&self) -> Vec<Velocity> {
        let d2 = self.blob_radius * self.blob_radius;
        self_velocities(&self.positions, &self.circulations, d2)
    }

    /// One classical RK4 step.
    pub fn step(&self, dt: f64) -> ParticleEnsemble {
        let k1 = self.velocities();
        self.step_with(dt, &k1, &mut [])
    }

    /// RK4 step with known first-stage velocities; `passive` points are
    /// carried along by the same stages.
    fn step_with(&self, dt: f64, k1: &[Velocity], passive: &mut [Point]) -> ParticleEnsemble {
        let d2 = self.blob_radius * self.blob_radius;
        let circ = &self.circulations;
        let x0 = &self.positions;
        let shift = |base: &[Point], k: &[Velocity], h: f64| -> Vec<Point> {
            base.iter()
                .zip(k)
                .map(|(p, v)| Point::new(p.x1 + h * v.u1, p.x2 + h * v.u2))
                .collect()
        };
        let p0: Vec<Point> = passive.to_vec();
        let q1 = velocities_at(x0, circ, d2, &p0);

        let x2 = shift(x0, k1, 0.5 * dt);
        let k2 = self_velocities(&x2, circ, d2);
        let p2 = shift(&p0, &q1, 0.5 * dt);
        let q2 = velocities_at(&x2, circ, d2, &p2);

        let x3 = shift(x0, &k2, 0.5 * dt);
        let k3 = self_velocities(&x3, circ, d2);
        let p3 = shift(&p0, &q2, 0.5 * dt);
        let q3 = velocities_at(&x3, circ, d2, &p3);

        let x4 = shift(x0, &k3, dt);
        let k4 = self_velocities(&x4, circ, d2);
        let p4 = shift(&p0, &q3, dt);
        let q4 = velocities_at(&x4, circ, d2, &p4);

        let combine = |p: Point, a: Velocity, b: Velocity, c: Velocity, d: Velocity| -> Point {
            Point::new(
                p.x1 + dt / 6.0 * (a.u1 + 2.0 * b.u1 + 2.0 * c.u1 + d.u1),
                p.x2 + dt / 6.0 * (a.u2 + 2.0 * b.u2 + 2.0 * c.u2 + d.u2),
            )
        };
        let mut clamps = self.wall_clamps;
        let positions = (0..x0.len())
            .map(|i| {
                let mut p = combine(x0[i], k1[i], k2[i], k3[i], k4[i]);
                if p.x2 < 0.0 {
                    p.x2 = -p.x2;
                    clamps += 1;
                }
                p
            })
            .collect();
        for (i, p) in passive.iter_mut().enumerate() {
            let mut q = combine(p0[i], q1[i], q2[i], q3[i], q4[i]);
            q.x2 = q.x2.max(0.0);
            *p = q;
        }
        ParticleEnsemble {
            positions,
            circulations: self.circulations.clone(),
            areas: self.areas.clone(),
            blob_radius: self.blob_radius,
            time: self.time + dt,
            wall_clamps: clamps,
        }
    }
}

/// Converts a field or patch into particles, one per occupied cell, or one
/// per `b × b` block of cells when there are more than `target_count`
/// occupied cells (`0` means full resolution). Blocks are aligned to the
/// grid center so symmetric fields give symmetric ensembles. Particles sit
/// at the vorticity centroid of their block, which preserves mass and
/// impulse exactly. The blob radius is twice the particle spacing.
pub fn discretize(source: ParticleSource<'_>, target_count: usize) -> Result<ParticleEnsemble> {
    let owned;
    let field = match source {
        ParticleSource::Grid(f) => f,
        ParticleSource::Contour {
            contour,
            strength,
            template,
        } => {
            if !(strength > 0.0 && strength.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "strength",
                    reason: "must be positive and finite",
                });
            }
            owned = rasterize(contour, template)?.scaled(strength);
            &owned
        }
    };
    let g = field.geometry();
    let occupied = field.values().iter().filter(|v| **v > 0.0).count();
    if occupied == 0 {
        return Err(Error::EmptySource);
    }
    let b = if target_count == 0 || occupied <= target_count {
        1
    } else {
        libm::ceil(sqrt(occupied as f64 / target_count as f64)) as usize
    };
    let h = g.cell;
    let half = (g.nx / 2) as isize;
    let block_col = |i: usize| (i as isize - half).div_euclid(b as isize);
    let col_lo = block_col(0);
    let ncols = (block_col(g.nx - 1) - col_lo + 1) as usize;
    let nrows = g.ny.div_ceil(b);
    // per block: Γ, Γ x1, Γ x2, occupied cells
    let mut acc = vec![[0.0f64; 4]; ncols * nrows];
    for j in 0..g.ny {
        for i in 0..g.nx {
            let v = field.get(i, j);
            if v <= 0.0 {
                continue;
            }
            let k = (j / b) * ncols + (block_col(i) - col_lo) as usize;
            let gam = v * h * h;
            let c = g.center(i, j);
            acc[k][0] += gam;
            acc[k][1] += gam * c.x1;
            acc[k][2] += gam * c.x2;
            acc[k][3] += 1.0;
        }
    }
    let mut positions = Vec::new();
    let mut circulations = Vec::new();
    let mut areas = Vec::new();
    for a in acc.iter().filter(|a| a[0] > 0.0) {
        positions.push(Point::new(a[1] / a[0], a[2] / a[0]));
        circulations.push(a[0]);
        areas.push(a[3] * h * h);
    }
    ParticleEnsemble::new(positions, circulations, areas, 2.0 * b as f64 * h)
}

/// Run settings echoed into the series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunConfig {
    pub t_final: f64,
    pub dt: f64,
    pub record_every: usize,
    /// Exponent of the recorded `L^p` norm.
    pub lp_exponent: f64,
}

impl RunConfig {
    pub fn new(t_final: f64, dt: f64) -> Self {
        Self {
            t_final,
            dt,
            record_every: 1,
            lp_exponent: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "t_final",
                reason: "must be positive and finite",
            });
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: "must be positive and finite",
            });
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter {
                name: "record_every",
                reason: "must be at least 1",
            });
        }
        if !(self.lp_exponent >= 1.0 && self.lp_exponent.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lp_exponent",
                reason: "must be at least 1",
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub mass: f64,
    pub impulse: f64,
    pub lp_norm: f64,
    pub energy: f64,
    /// Horizontal center of mass `a(t)`.
    pub center_x1: f64,
    /// `τ(t) = a(t) - a(0)`.
    pub shift_tau: f64,
    pub perimeter: Option<f64>,
    pub support_diameter: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsSeries {
    pub records: Vec<DiagnosticsRecord>,
    pub config: RunConfig,
    /// Contour at the final time, in contour mode.
    pub final_contour: Option<ContourPolygon>,
    pub final_state: ParticleEnsemble,
}

impl DiagnosticsSeries {
    /// Largest relative deviation of `f` from its initial value.
    pub fn drift(&self, f: impl Fn(&DiagnosticsRecord) -> f64) -> f64 {
        let Some(first) = self.records.first() else {
            return 0.0;
        };
        let f0 = f(first);
        self.records
            .iter()
            .map(|r| {
                let d = (f(r) - f0).abs();
                if f0 == 0.0 {
                    d
                } else {
                    d / f0.abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Diameter of a point set through its convex hull.
pub fn point_set_diameter(points: &[Point]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.x1, p.x2)).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    pts.dedup();
    if pts.len() < 2 {
        return 0.0;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Vec<(f64, f64)> = if pass == 0 {
            pts.clone()
        } else {
            pts.iter().rev().copied().collect()
        };
        for p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    let mut best = 0.0f64;
    for i in 0..hull.len() {
        for j in (i + 1)..hull.len() {
            let dx = hull[i].0 - hull[j].0;
            let dy = hull[i].1 - hull[j].1;
            best = best.max(dx * dx + dy * dy);
        }
    }
    sqrt(best)
}

fn record(
    state: &ParticleEnsemble,
    p: f64,
    a0: f64,
    contour: Option<&[Point]>,
) -> Result<DiagnosticsRecord> {
    let center = state.center_x1();
    let perimeter = match contour {
        Some(v) => Some(contour_perimeter(&ContourPolygon::new(v.to_vec()))?),
        None => None,
    };
    let mut pts: Vec<Point> = state
        .positions
        .iter()
        .zip(&state.circulations)
        .filter(|(_, g)| **g > 0.0)
        .map(|(x, _)| *x)
        .collect();
    if let Some(v) = contour {
        pts.extend_from_slice(v);
    }
    Ok(DiagnosticsRecord {
        time: state.time,
        mass: state.mass(),
        impulse: state.impulse(),
        lp_norm: state.lp_norm(p),
        energy: state.energy(),
        center_x1: center,
        shift_tau: center - a0,
        perimeter,
        support_diameter: point_set_diameter(&pts),
    })
}

/// Upper bound on the number of contour vertices after refinement.
const MAX_CONTOUR_VERTICES: usize = 400_000;

/// Splits every edge longer than twice its reference length by repeated
/// midpoint bisection; the pieces inherit the reference.
fn refine(verts: &mut Vec<Point>, reference: &mut Vec<f64>) {
    if verts.len() >= MAX_CONTOUR_VERTICES {
        return;
    }
    let n = verts.len();
    let mut out_v = Vec::with_capacity(n + n / 8);
    let mut out_r = Vec::with_capacity(n + n / 8);
    for k in 0..n {
        let a = verts[k];
        let b = verts[(k + 1) % n];
        let len = sqrt((b.x1 - a.x1) * (b.x1 - a.x1) + (b.x2 - a.x2) * (b.x2 - a.x2));
        let r = reference[k];
        let mut pieces = 1usize;
        while len / pieces as f64 > 2.0 * r && pieces < 1 << 10 {
            pieces *= 2;
        }
        for s in 0..pieces {
            let t = s as f64 / pieces as f64;
            out_v.push(Point::new(
                a.x1 + t * (b.x1 - a.x1),
                a.x2 + t * (b.x2 - a.x2),
            ));
            out_r.push(r);
        }
    }
    *verts = out_v;
    *reference = out_r;
}

/// Advances `initial` to `t_final`, recording every `record_every` steps and
/// at the end. A supplied contour is advected by the particle velocity with
/// the same stages. Fails if `max|u| · dt ≥ δ` at any step.
pub fn run(
    initial: &ParticleEnsemble,
    config: &RunConfig,
    contour: Option<&ContourPolygon>,
) -> Result<DiagnosticsSeries> {
    config.validate()?;
    let steps = {
        let s = config.t_final / config.dt;
        let r = libm::round(s);
        if (s - r).abs() < 1e-9 * s.max(1.0) {
            r as usize
        } else {
            libm::ceil(s) as usize
        }
    };
    let dt = config.t_final / steps as f64;
    let mut verts: Vec<Point> = contour.map(|c| c.vertices().to_vec()).unwrap_or_default();
    if contour.is_some() && verts.len() < 3 {
        return Err(Error::DegeneratePolygon {
            vertices: verts.len(),
        });
    }
    let mut reference: Vec<f64> = (0..verts.len())
        .map(|k| {
            let a = verts[k];
            let b = verts[(k + 1) % verts.len()];
            sqrt((b.x1 - a.x1) * (b.x1 - a.x1) + (b.x2 - a.x2) * (b.x2 - a.x2))
        })
        .collect();
    let contour_slice = |v: &Vec<Point>| {
        if contour.is_some() {
            Some(v.clone())
        } else {
            None
        }
    };

    let mut state = initial.clone();
    let a0 = state.center_x1();
    let p = config.lp_exponent;
    let mut records = vec![record(&state, p, a0, contour_slice(&verts).as_deref())?];
    for n in 1..=steps {
        let k1 = state.velocities();
        let vmax = k1
            .iter()
            .map(|v| sqrt(v.u1 * v.u1 + v.u2 * v.u2))
            .fold(0.0, f64::max);
        if vmax * dt >= state.blob_radius {
            return Err(Error::CflViolation {
                dt,
                max_speed: vmax,
                suggested_dt: 0.5 * state.blob_radius / vmax,
            });
        }
        state = state.step_with(dt, &k1, &mut verts);
        // exact final time
        if n == steps {
            state.time = config.t_final;
        }
        if contour.is_some() {
            refine(&mut verts, &mut reference);
        }
        if n % config.record_every == 0 || n == steps {
            records.push(record(&state, p, a0, contour_slice(&verts).as_deref())?);
        }
    }
    Ok(DiagnosticsSeries {
        records,
        config: *config,
        final_contour: contour.map(|_| ContourPolygon::new(verts)),
        final_state: state,
    })
}

/// `da/dt = Σ Γ u1 / Σ Γ`.
pub fn center_of_mass_rate(state: &ParticleEnsemble) -> Result<f64> {
    let m = state.mass();
    if m == 0.0 {
        return Err(Error::ZeroMass);
    }
    let u = state.velocities();
    Ok(u.iter()
        .zip(&state.circulations)
        .map(|(v, g)| g * v.u1)
        .sum::<f64>()
        / m)
}

/// `τ(t) = a(t) - a(0)` at each record and its least-squares slope.
pub fn estimate_shift(series: &DiagnosticsSeries) -> Result<(Vec<f64>, f64)> {
    let n = series.records.len();
    if n < 3 {
        return Err(Error::InsufficientSamples {
            needed: 3,
            found: n,
        });
    }
    if series.records.iter().any(|r| r.mass == 0.0) {
        return Err(Error::ZeroMass);
    }
    let a0 = series.records[0].center_x1;
    let t: Vec<f64> = series.records.iter().map(|r| r.time).collect();
    let tau: Vec<f64> = series.records.iter().map(|r| r.center_x1 - a0).collect();
    let speed = slope(&t, &tau);
    Ok((tau, speed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(x: Point, gamma: f64, delta: f64) -> ParticleEnsemble {
        ParticleEnsemble::new(vec![x], vec![gamma], vec![1e-4], delta).unwrap()
    }

    #[test]
    fn single_particle_drifts_with_image() {
        let e = single(Point::new(0.0, 1.0), 2.0, 1e-3);
        let u = e.velocities()[0];
        let exact = 2.0 / (4.0 * PI);
        assert!((u.u1 - exact).abs() / exact < 1e-6);
        assert_eq!(u.u2, 0.0);
        let dt = 0.1;
        let s = e.step(dt);
        assert!((s.positions[0].x2 - 1.0).abs() < 1e-15);
        assert!((s.positions[0].x1 - u.u1 * dt).abs() < 1e-14);
    }

    #[test]
    fn blob_at_height_pushes_wall_forward() {
        let e = single(Point::new(0.0, 1.0), 1.0, 0.1);
        let v = velocity_at_origin(&e);
        assert!(v.u1 > 0.0);
        assert_eq!(v.u2, 0.0);
    }

    fn velocity_at_origin(e: &ParticleEnsemble) -> Velocity {
        e.velocity_at(Point::new(0.0, 0.0))
    }

    #[test]
    fn empty_ensemble_steps_to_empty() {
        let e = ParticleEnsemble::new(vec![], vec![], vec![], 0.1).unwrap();
        let s = e.step(0.1);
        assert!(s.is_empty());
        assert!((s.time - 0.1).abs() < 1e-15);
    }

    #[test]
    fn pairwise_matches_direct_sum() {
        let pos = vec![
            Point::new(0.1, 0.3),
            Point::new(-0.4, 0.7),
            Point::new(0.9, 0.2),
        ];
        let e =
            ParticleEnsemble::new(pos.clone(), vec![1.0, 0.5, 2.0], vec![1.0; 3], 0.05).unwrap();
        let fast = e.velocities();
        for (i, x) in pos.iter().enumerate() {
            let v = e.velocity_at(*x);
            assert!((v.u1 - fast[i].u1).abs() < 1e-13);
            assert!((v.u2 - fast[i].u2).abs() < 1e-13);
        }
    }

    #[test]
    fn mirror_pair_is_reflection_equivariant() {
        // reflection x1 -> -x1 reverses the sense of rotation, so a
        // mirror-symmetric pair stepped forward is the mirror of the pair
        // stepped backward
        let e = ParticleEnsemble::new(
            vec![Point::new(-0.3, 0.5), Point::new(0.3, 0.5)],
            vec![1.0, 1.0],
            vec![0.01; 2],
            0.05,
        )
        .unwrap();
        let fwd = e.step(0.01);
        let bwd = e.step(-0.01);
        for (a, b) in fwd.positions.iter().zip(bwd.positions.iter().rev()) {
            assert!((a.x1 + b.x1).abs() < 1e-15, "{a:?} {b:?}");
            assert!((a.x2 - b.x2).abs() < 1e-15, "{a:?} {b:?}");
        }
        // impulse is a linear invariant, kept by every stage
        assert!((fwd.impulse() - e.impulse()).abs() < 1e-15);
    }

    #[test]
    fn image_method_matches_explicit_mirror() {
        // free-space blob dynamics of the odd extension
        let pos = [
            Point::new(0.1, 0.3),
            Point::new(-0.2, 0.6),
            Point::new(0.35, 0.45),
        ];
        let circ = [1.0, 0.7, 0.4];
        let delta = 0.08;
        let d2 = delta * delta;
        let e = ParticleEnsemble::new(pos.to_vec(), circ.to_vec(), vec![1.0; 3], delta).unwrap();
        let u = e.velocities();
        for (i, x) in pos.iter().enumerate() {
            let mut v = Velocity::default();
            for (y, g) in pos.iter().zip(circ) {
                for (yy, gg) in [(*y, g), (y.image(), -g)] {
                    let r2 = (x.x1 - yy.x1) * (x.x1 - yy.x1) + (x.x2 - yy.x2) * (x.x2 - yy.x2) + d2;
                    v.u1 += gg * -(x.x2 - yy.x2) / (2.0 * PI * r2);
                    v.u2 += gg * (x.x1 - yy.x1) / (2.0 * PI * r2);
                }
            }
            assert!((v.u1 - u[i].u1).abs() < 1e-13);
            assert!((v.u2 - u[i].u2).abs() < 1e-13);
        }
    }

    #[test]
    fn velocity_is_gradient_of_energy() {
        // u_i = (1/Γi) (∂H/∂x2_i, -∂H/∂x1_i)
        let pos = vec![Point::new(0.1, 0.3), Point::new(-0.2, 0.6)];
        let circ = vec![1.0, 0.7];
        let e = ParticleEnsemble::new(pos.clone(), circ.clone(), vec![1.0; 2], 0.1).unwrap();
        let u = e.velocities();
        let h = 1e-6;
        for i in 0..2 {
            let mut ep = e.clone();
            ep.positions[i].x2 += h;
            let mut em = e.clone();
            em.positions[i].x2 -= h;
            let dh = (ep.energy() - em.energy()) / (2.0 * h);
            assert!((dh / circ[i] - u[i].u1).abs() < 1e-6);
            let mut ep = e.clone();
            ep.positions[i].x1 += h;
            let mut em = e.clone();
            em.positions[i].x1 -= h;
            let dh = (ep.energy() - em.energy()) / (2.0 * h);
            assert!((-dh / circ[i] - u[i].u2).abs() < 1e-6);
        }
    }

    #[test]
    fn discretize_unit_square_exactly() {
        let g = GridGeometry::symmetric(16, 8, 2.0).unwrap();
        let f = GridField::from_fn(g, |x| {
            if x.x1.abs() < 0.5 && x.x2 > 0.5 && x.x2 < 1.5 {
                1.0
            } else {
                0.0
            }
        });
        let e = discretize(ParticleSource::Grid(&f), 0).unwrap();
        assert_eq!(e.len(), 16);
        assert!((e.mass() - 1.0).abs() < 1e-14);
        assert!((e.impulse() - f.impulse()).abs() < 1e-14);
        assert!((e.blob_radius - 0.5).abs() < 1e-15);
    }

    #[test]
    fn downsampling_preserves_integrals_and_symmetry() {
        let g = GridGeometry::symmetric(64, 32, 2.0).unwrap();
        let f = GridField::from_fn(g, |x| {
            (1.0 - x.x1 * x.x1 - (x.x2 - 0.8) * (x.x2 - 0.8)).max(0.0)
        });
        let e = discretize(ParticleSource::Grid(&f), 100).unwrap();
        assert!(e.len() <= 150, "{}", e.len());
        assert!((e.mass() - f.mass()).abs() / f.mass() < 1e-12);
        assert!((e.impulse() - f.impulse()).abs() / f.impulse() < 1e-12);
        assert!(e.center_x1().abs() < 1e-12);
    }

    #[test]
    fn zero_field_is_rejected() {
        let g = GridGeometry::symmetric(8, 4, 1.0).unwrap();
        let f = GridField::zeros(g);
        assert_eq!(
            discretize(ParticleSource::Grid(&f), 0).map(|_| ()),
            Err(Error::EmptySource)
        );
    }

    #[test]
    fn zero_circulation_run_is_frozen() {
        let e =
            ParticleEnsemble::new(vec![Point::new(0.0, 1.0)], vec![0.0], vec![0.1], 0.1).unwrap();
        let cfg = RunConfig::new(1.0, 0.25);
        let s = run(&e, &cfg, None).unwrap();
        assert_eq!(s.records.len(), 5);
        for r in &s.records {
            assert_eq!(
                (r.mass, r.impulse, r.energy, r.shift_tau),
                (0.0, 0.0, 0.0, 0.0)
            );
        }
        assert_eq!(s.final_state.positions, e.positions);
        assert!(s.records.windows(2).all(|w| w[1].time > w[0].time));
    }

    #[test]
    fn cfl_violation_suggests_step() {
        let e = single(Point::new(0.0, 0.1), 10.0, 0.01);
        let err = run(&e, &RunConfig::new(1.0, 0.5), None).unwrap_err();
        match err {
            Error::CflViolation {
                suggested_dt,
                max_speed,
                ..
            } => {
                assert!(suggested_dt * max_speed < 0.01);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shift_needs_three_records_and_ignores_offset() {
        let e = ParticleEnsemble::new(
            vec![Point::new(-0.1, 0.4), Point::new(0.1, 0.4)],
            vec![1.0, 1.0],
            vec![0.01; 2],
            0.05,
        )
        .unwrap();
        let cfg = RunConfig::new(0.2, 0.01);
        let s = run(&e, &cfg, None).unwrap();
        let (tau, speed) = estimate_shift(&s).unwrap();
        let mut moved = e.clone();
        for p in &mut moved.positions {
            p.x1 += 5.0;
        }
        let s2 = run(&moved, &cfg, None).unwrap();
        let (tau2, speed2) = estimate_shift(&s2).unwrap();
        for (a, b) in tau.iter().zip(&tau2) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((speed - speed2).abs() < 1e-10);
        let one = single(Point::new(0.0, 0.4), 1.0, 0.05);
        let s1 = run(&one, &cfg, None).unwrap();
        let rate = center_of_mass_rate(&one).unwrap();
        assert!((estimate_shift(&s1).unwrap().1 - rate).abs() < 1e-12);
        let short = DiagnosticsSeries {
            records: s.records[..2].to_vec(),
            ..s
        };
        assert_eq!(
            estimate_shift(&short).map(|_| ()),
            Err(Error::InsufficientSamples {
                needed: 3,
                found: 2
            })
        );
    }

    #[test]
    fn rate_is_homogeneous_and_translation_invariant() {
        let e = ParticleEnsemble::new(
            vec![Point::new(-0.1, 0.4), Point::new(0.2, 0.3)],
            vec![1.0, 0.5],
            vec![0.01; 2],
            0.05,
        )
        .unwrap();
        let r = center_of_mass_rate(&e).unwrap();
        let mut s = e.clone();
        s.circulations.iter_mut().for_each(|g| *g *= 3.0);
        assert!((center_of_mass_rate(&s).unwrap() - 3.0 * r).abs() < 1e-12);
        let mut t = e.clone();
        t.positions.iter_mut().for_each(|p| p.x1 -= 7.0);
        assert!((center_of_mass_rate(&t).unwrap() - r).abs() < 1e-12);
        let z =
            ParticleEnsemble::new(vec![Point::new(0.0, 1.0)], vec![0.0], vec![1.0], 0.1).unwrap();
        assert_eq!(center_of_mass_rate(&z), Err(Error::ZeroMass));
    }

    #[test]
    fn refinement_splits_long_edges() {
        let mut v = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        let mut r = vec![0.2, 1.0, 1.0];
        refine(&mut v, &mut r);
        assert_eq!(v.len(), 3 + 3);
        assert_eq!(v[1], Point::new(0.25, 0.0));
        assert_eq!(r.len(), v.len());
    }

    #[test]
    fn diameter_of_square() {
        let pts = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
            Point::new(0.5, 0.5),
        ];
        assert!((point_set_diameter(&pts) - sqrt(2.0)).abs() < 1e-15);
    }
}
