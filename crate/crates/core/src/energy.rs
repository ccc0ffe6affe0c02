//! Kinetic and penalized energies of grid fields.

use crate::error::{Error, Result};
use crate::field::GridField;
use crate::kernel::{KernelKind, KernelTable};
use crate::math::powf;

/// Kinetic energy, penalty term and their difference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyReport {
    pub kinetic: f64,
    pub penalty: f64,
    pub penalized: f64,
}

impl EnergyReport {
    pub fn new(kinetic: f64, penalty: f64) -> Self {
        Self {
            kinetic,
            penalty,
            penalized: kinetic - penalty,
        }
    }
}

/// `∬ G(x, y) f(x) g(y) dx dy`, with exact cell integrals near the diagonal.
pub fn interaction_energy(f: &GridField, g: &GridField) -> Result<f64> {
    if f.geometry() != g.geometry() {
        return Err(Error::GridMismatch);
    }
    if f.is_zero() || g.is_zero() {
        return Ok(0.0);
    }
    let table = KernelTable::new(*f.geometry(), KernelKind::Green);
    Ok(interaction_with(&table, f, g))
}

/// [`interaction_energy`] with a prebuilt Green table.
pub fn interaction_with(table: &KernelTable, f: &GridField, g: &GridField) -> f64 {
    // the cell-averaged kernel is symmetric, so put the sparser field inside
    let (a, b) = if nonzero(f) < nonzero(g) {
        (g, f)
    } else {
        (f, g)
    };
    table.bilinear(a.values(), b.values())
}

fn nonzero(f: &GridField) -> usize {
    f.values().iter().filter(|v| **v != 0.0).count()
}

/// `E(f) = ½ ∬ G f f`.
pub fn kinetic_energy(f: &GridField) -> f64 {
    if f.is_zero() {
        return 0.0;
    }
    let table = KernelTable::new(*f.geometry(), KernelKind::Green);
    kinetic_with(&table, f)
}

/// [`kinetic_energy`] with a prebuilt Green table.
pub fn kinetic_with(table: &KernelTable, f: &GridField) -> f64 {
    0.5 * table.bilinear(f.values(), f.values())
}

/// `(λ/p) ∫ (ω/λ)^p`.
pub fn penalty(f: &GridField, p: f64, lambda: f64) -> Result<f64> {
    check_exponent(p, lambda)?;
    Ok(lambda / p * f.lp_power(p) / powf(lambda, p))
}

fn check_exponent(p: f64, lambda: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: "penalty exponent must be finite and greater than 1",
        });
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            reason: "must be positive and finite",
        });
    }
    Ok(())
}

/// `E(ω) - (λ/p) ∫ (ω/λ)^p` together with its two parts.
pub fn penalized_energy(f: &GridField, p: f64, lambda: f64) -> Result<EnergyReport> {
    let pen = penalty(f, p, lambda)?;
    Ok(EnergyReport::new(kinetic_energy(f), pen))
}
