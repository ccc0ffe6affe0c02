//! The Chaplygin–Lamb dipole: the closed-form profile for `p = 2`, `γ = 0`.
//!
//! Inside the disc `r < a` the upper-half vorticity is
//! `ω = (2Uk/|J0(ka)|) J1(kr) sin θ` with `ka = j₁₁`, the first zero of `J1`.
//! It satisfies `ω = k² (ψ - U x2)₊`, so it is the `p = 2` profile with
//! `λ = k²` and speed `W = U`.

use alloc::vec::Vec;

use crate::bessel::{bessel_j0, bessel_j1, j1_first_zero};
use crate::energy::{kinetic_with, EnergyReport};
use crate::error::{Error, Result};
use crate::field::{GridField, GridGeometry};
use crate::identities::{pohozaev_report, touching_check, IdentityReport};
use crate::kernel::{KernelKind, KernelTable, Point};
use crate::math::{sqrt, PI};
use crate::quadrature::GaussLegendre;
use crate::solver::{residual_with, DipoleProfile, Mode};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambParams {
    pub speed_u: f64,
    pub radius_a: f64,
}

impl Default for LambParams {
    fn default() -> Self {
        Self {
            speed_u: 1.0,
            radius_a: 1.0,
        }
    }
}

impl LambParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed_u > 0.0 && self.speed_u.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "speed_u",
                reason: "must be positive and finite",
            });
        }
        if !(self.radius_a > 0.0 && self.radius_a.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "radius_a",
                reason: "must be positive and finite",
            });
        }
        Ok(())
    }

    /// Wavenumber `k = j₁₁ / a`.
    pub fn k(&self) -> f64 {
        j1_first_zero() / self.radius_a
    }

    /// Strength `λ = k²` of the linear vorticity function.
    pub fn lambda(&self) -> f64 {
        let k = self.k();
        k * k
    }

    fn amplitude(&self) -> f64 {
        let ka = j1_first_zero();
        2.0 * self.speed_u * self.k() / bessel_j0(ka).abs()
    }

    /// Upper-half impulse, `π U a²`.
    pub fn impulse(&self) -> f64 {
        PI * self.speed_u * self.radius_a * self.radius_a
    }

    /// Upper-half circulation `∫ ω`.
    pub fn mass(&self) -> f64 {
        // ∫_0^a r J1(kr) dr · ∫_0^π sin θ dθ
        let k = self.k();
        let rule = GaussLegendre::new(30);
        let radial = rule.integrate(0.0, self.radius_a, |r| r * bessel_j1(k * r));
        2.0 * self.amplitude() * radial
    }

    /// Lab-frame wall velocity at the origin, `U (1 + 1/|J0(j₁₁)|)`.
    pub fn center_velocity(&self) -> f64 {
        self.speed_u * (1.0 + 1.0 / bessel_j0(j1_first_zero()).abs())
    }

    /// Kinetic energy of the upper half, `U · μ`.
    pub fn kinetic_energy(&self) -> f64 {
        self.speed_u * self.impulse()
    }
}

/// Pointwise upper-half vorticity.
pub fn lamb_vorticity(params: &LambParams, x: Point) -> f64 {
    let r = sqrt(x.x1 * x.x1 + x.x2 * x.x2);
    if r >= params.radius_a || r == 0.0 || x.x2 <= 0.0 {
        return 0.0;
    }
    let v = params.amplitude() * bessel_j1(params.k() * r) * (x.x2 / r);
    v.max(0.0)
}

/// Cell-averaged Lamb dipole on `geom` packaged as a profile.
pub fn lamb_dipole(params: &LambParams, geom: &GridGeometry) -> Result<DipoleProfile> {
    let table = KernelTable::new(*geom, KernelKind::Green);
    lamb_dipole_with(params, &table)
}

fn lamb_field(params: &LambParams, geom: &GridGeometry) -> Result<GridField> {
    params.validate()?;
    let a = params.radius_a;
    let b = geom.bounds();
    if a + geom.cell > b.y1 || -a - geom.cell < b.x0 || a + geom.cell > b.x1 {
        return Err(Error::OutOfBounds);
    }
    let rule = GaussLegendre::new(4);
    let h = geom.cell;
    let mut values = alloc::vec![0.0; geom.len()];
    for j in 0..geom.ny {
        for i in 0..geom.nx {
            let r = geom.rect(i, j);
            let c = r.center();
            // left half copies the right so the field is exactly even
            if geom.is_symmetric() && c.x1 < 0.0 {
                continue;
            }
            let near = sqrt(c.x1 * c.x1 + c.x2 * c.x2) - h;
            if near >= a {
                continue;
            }
            let avg = rule.integrate_rect(r.x0, r.x1, r.y0, r.y1, |x1, x2| {
                lamb_vorticity(params, Point::new(x1, x2))
            }) / (h * h);
            values[geom.index(i, j)] = avg;
            if geom.is_symmetric() {
                values[geom.index(geom.mirror_column(i), j)] = avg;
            }
        }
    }
    GridField::from_values(*geom, values)
}

fn lamb_dipole_with(params: &LambParams, table: &KernelTable) -> Result<DipoleProfile> {
    let field = lamb_field(params, table.geometry())?;
    let lambda = params.lambda();
    let kinetic = kinetic_with(table, &field);
    let penalty = 0.5 * field.lp_power(2.0) / lambda;
    let mut profile = DipoleProfile {
        mu: field.impulse(),
        mass: field.mass(),
        field,
        mode: Mode::Regular { p: 2.0 },
        lambda,
        w: params.speed_u,
        gamma: 0.0,
        energy: EnergyReport::new(kinetic, penalty),
        residual: f64::NAN,
        iterations: 0,
        converged: true,
    };
    profile.residual = residual_with(table, &profile)?;
    Ok(profile)
}

/// Standard box for the oracle: height `1.5a`, centered, square cells.
pub fn oracle_geometry(params: &LambParams, nx: usize, ny: usize) -> Result<GridGeometry> {
    GridGeometry::symmetric(nx, ny, 1.5 * params.radius_a)
}

/// Oracle checks at one resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct LambValidation {
    pub nx: usize,
    pub ny: usize,
    pub residual: f64,
    pub reports: Vec<IdentityReport>,
}

/// Residual, Pohožaev and touching reports of the analytic profile at each
/// resolution, plus a report that the residual decreases under refinement.
pub fn lamb_validate(
    params: &LambParams,
    resolutions: &[(usize, usize)],
    residual_tol: f64,
    identity_tol: f64,
) -> Result<Vec<LambValidation>> {
    let mut out: Vec<LambValidation> = Vec::with_capacity(resolutions.len());
    for &(nx, ny) in resolutions {
        let geom = oracle_geometry(params, nx, ny)?;
        let table = KernelTable::new(geom, KernelKind::Green);
        let profile = lamb_dipole_with(params, &table)?;
        let mut reports = Vec::new();
        let mut res = IdentityReport::compare(
            "fixed_point_residual",
            profile.residual,
            0.0,
            residual_tol,
            1.0,
        );
        res.pass = profile.residual < residual_tol;
        reports.push(res);
        if let Some(prev) = out.last() {
            let mut dec =
                IdentityReport::greater("residual_decreasing", prev.residual, profile.residual);
            dec.name = alloc::format!(
                "residual_decreasing_{}x{}_to_{}x{}",
                prev.nx,
                prev.ny,
                nx,
                ny
            );
            reports.push(dec);
        }
        reports.push(pohozaev_report(&profile, identity_tol));
        reports.push(touching_check(&profile)?.report);
        out.push(LambValidation {
            nx,
            ny,
            residual: profile.residual,
            reports,
        });
    }
    Ok(out)
}
