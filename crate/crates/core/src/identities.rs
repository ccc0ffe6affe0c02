//! Checks of the identities and structural properties a profile must satisfy.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::GridField;
use crate::kernel::{velocity_eval, KernelKind, KernelTable, Point};
use crate::math::{ln, powf, sqrt};
use crate::solver::{DipoleProfile, Mode};

/// One measured-versus-predicted comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub pass: bool,
    pub tolerance: f64,
}

impl IdentityReport {
    /// Relative comparison, falling back to an absolute one against `scale`
    /// when `rhs` is negligible next to it.
    pub fn compare(name: &str, lhs: f64, rhs: f64, tolerance: f64, scale: f64) -> Self {
        let abs_err = (lhs - rhs).abs();
        let near_zero = rhs.abs() <= 1e-12 * scale.abs();
        let rel_err = if near_zero {
            abs_err / scale.abs().max(f64::MIN_POSITIVE)
        } else {
            abs_err / rhs.abs()
        };
        Self {
            name: String::from(name),
            lhs,
            rhs,
            abs_err,
            rel_err,
            pass: rel_err <= tolerance,
            tolerance,
        }
    }

    /// Strict inequality `lhs > rhs`.
    pub fn greater(name: &str, lhs: f64, rhs: f64) -> Self {
        let abs_err = (lhs - rhs).abs();
        Self {
            name: String::from(name),
            lhs,
            rhs,
            abs_err,
            rel_err: abs_err / rhs.abs().max(f64::MIN_POSITIVE),
            pass: lhs > rhs,
            tolerance: 0.0,
        }
    }
}

/// Coefficient of `Wμ` in the predicted penalized energy.
pub fn pohozaev_coefficient(mode: Mode) -> f64 {
    match mode {
        Mode::Regular { p } => (3.0 * p - 4.0) / (4.0 * p - 4.0),
        Mode::Patch => 0.75,
    }
}

/// `E_p = (3p-4)/(4p-4) Wμ + ½ γ ‖ω‖₁` (patch mode: `E = ¾ Wμ + ½ γ ‖ω‖₁`).
pub fn pohozaev_check(profile: &DipoleProfile, tol: f64) -> Result<IdentityReport> {
    if !profile.converged {
        return Err(Error::NotConverged);
    }
    Ok(pohozaev_report(profile, tol))
}

/// [`pohozaev_check`] without the convergence gate, for analytic profiles.
pub fn pohozaev_report(profile: &DipoleProfile, tol: f64) -> IdentityReport {
    let wmu = profile.w * profile.mu;
    let rhs = pohozaev_coefficient(profile.mode) * wmu + 0.5 * profile.gamma * profile.mass;
    IdentityReport::compare("pohozaev", profile.energy.penalized, rhs, tol, wmu)
}

/// `λ^{1-p} ‖ω‖_p^p = p/(2p-2) Wμ`, the companion relation in regular mode.
pub fn lp_relation_check(profile: &DipoleProfile, tol: f64) -> Result<IdentityReport> {
    let Mode::Regular { p } = profile.mode else {
        return Err(Error::ModeMismatch);
    };
    let lhs = powf(profile.lambda, 1.0 - p) * profile.field.lp_power(p);
    let rhs = p / (2.0 * p - 2.0) * profile.w * profile.mu;
    Ok(IdentityReport::compare(
        "lp_relation",
        lhs,
        rhs,
        tol,
        profile.w * profile.mu,
    ))
}

/// `W = (1/‖ω‖₁)(1/2π) ∬ (x2 + y2)/|x - y*|² ω(x) ω(y)`.
pub fn traveling_speed_formula(field: &GridField) -> Result<f64> {
    let mass = field.mass();
    if mass <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let table = KernelTable::new(*field.geometry(), KernelKind::ImageU1);
    Ok(table.bilinear(field.values(), field.values()) / mass)
}

/// Outcome of [`touching_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct TouchingReport {
    /// `u1(0,0)` against `2W`.
    pub report: IdentityReport,
    /// Largest `r` such that every cell center within `r` of the origin
    /// carries positive vorticity.
    pub radius: f64,
}

/// `u1(0, 0) > 2W`, the criterion for the two halves to touch.
pub fn touching_check(profile: &DipoleProfile) -> Result<TouchingReport> {
    let field = &profile.field;
    if field.mass() <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let u = velocity_eval(field, Point::new(0.0, 0.0));
    let mut report = IdentityReport::greater("touching", u.u1, 2.0 * profile.w);
    if profile.gamma > 0.0 {
        report.pass = false;
    }
    Ok(TouchingReport {
        radius: touching_radius(field),
        report,
    })
}

fn touching_radius(field: &GridField) -> f64 {
    let g = field.geometry();
    let mut r = f64::INFINITY;
    for j in 0..g.ny {
        for i in 0..g.nx {
            if field.get(i, j) <= 0.0 {
                let c = g.center(i, j);
                r = r.min(sqrt(c.x1 * c.x1 + c.x2 * c.x2));
            }
        }
    }
    if r.is_finite() {
        r
    } else {
        g.height()
    }
}

/// Compares two patch profiles with `W ∝ μ^{1/3}` and `E ∝ μ^{4/3}`.
/// Returns the speed report followed by the energy report.
pub fn scaling_check(
    a: &DipoleProfile,
    b: &DipoleProfile,
    tol: f64,
) -> Result<[IdentityReport; 2]> {
    if a.mode != Mode::Patch || b.mode != Mode::Patch {
        return Err(Error::ModeMismatch);
    }
    let ratio = a.mu / b.mu;
    let w = IdentityReport::compare("speed_scaling", a.w / b.w, powf(ratio, 1.0 / 3.0), tol, 1.0);
    let e = IdentityReport::compare(
        "energy_scaling",
        a.energy.kinetic / b.energy.kinetic,
        powf(ratio, 4.0 / 3.0),
        tol,
        1.0,
    );
    Ok([w, e])
}

/// Least-squares slope of `ln ω(0, s)` against `ln s` over the centers of
/// rows 2 through 9, i.e. `s ∈ [2h, 10h]`.
pub fn exponent_fit(profile: &DipoleProfile) -> Result<f64> {
    exponent_fit_field(&profile.field)
}

pub fn exponent_fit_field(field: &GridField) -> Result<f64> {
    let g = field.geometry();
    let (il, ir) = if g.nx.is_multiple_of(2) {
        (g.nx / 2 - 1, g.nx / 2)
    } else {
        (g.nx / 2, g.nx / 2)
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for j in 2..=9.min(g.ny.saturating_sub(1)) {
        let v = 0.5 * (field.get(il, j) + field.get(ir, j));
        if v > 0.0 {
            xs.push(ln(g.x2(j)));
            ys.push(ln(v));
        }
    }
    if xs.len() < 4 {
        return Err(Error::InsufficientSamples {
            needed: 4,
            found: xs.len(),
        });
    }
    Ok(slope(&xs, &ys))
}

pub(crate) fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}
