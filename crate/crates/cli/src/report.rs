//! JSON report documents.

use serde::Serialize;

use sadovskii_core::identities::IdentityReport;
use sadovskii_core::solver::{DipoleProfile, Mode};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityJson {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub pass: bool,
    pub tolerance: f64,
}

impl From<&IdentityReport> for IdentityJson {
    fn from(r: &IdentityReport) -> Self {
        Self {
            name: r.name.clone(),
            lhs: r.lhs,
            rhs: r.rhs,
            abs_err: r.abs_err,
            rel_err: r.rel_err,
            pass: r.pass,
            tolerance: r.tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridJson {
    pub nx: usize,
    pub ny: usize,
    pub origin_x1: f64,
    pub cell: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileReport {
    pub mode: &'static str,
    #[serde(rename = "W")]
    pub w: f64,
    pub gamma: f64,
    pub mu: f64,
    pub mass: f64,
    pub p: Option<f64>,
    pub lambda: f64,
    pub energy: f64,
    pub penalized_energy: f64,
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `p ≤ 4/3`: the impulse no longer controls the energy.
    pub degenerate: bool,
    pub grid: GridJson,
    pub identities: Vec<IdentityJson>,
}

impl ProfileReport {
    pub fn new(profile: &DipoleProfile, identities: &[IdentityReport]) -> Self {
        let g = profile.field.geometry();
        Self {
            mode: match profile.mode {
                Mode::Patch => "patch",
                Mode::Regular { .. } => "regular",
            },
            w: profile.w,
            gamma: profile.gamma,
            mu: profile.mu,
            mass: profile.mass,
            p: profile.p(),
            lambda: profile.lambda,
            energy: profile.energy.kinetic,
            penalized_energy: profile.energy.penalized,
            residual: profile.residual,
            converged: profile.converged,
            iterations: profile.iterations,
            degenerate: profile.mode.is_degenerate(),
            grid: GridJson {
                nx: g.nx,
                ny: g.ny,
                origin_x1: g.origin_x1,
                cell: g.cell,
            },
            identities: identities.iter().map(IdentityJson::from).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleResolution {
    pub nx: usize,
    pub ny: usize,
    pub residual: f64,
    pub identities: Vec<IdentityJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub speed_u: f64,
    pub radius_a: f64,
    pub resolutions: Vec<OracleResolution>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvolveReport {
    pub initial: String,
    pub particles: usize,
    pub blob_radius: f64,
    pub t_final: f64,
    pub dt: f64,
    pub records: usize,
    pub mass_drift: f64,
    pub impulse_drift: f64,
    pub energy_drift: f64,
    pub fitted_speed: Option<f64>,
    pub reference_speed: Option<f64>,
    pub wall_clamps: usize,
    pub perimeter_initial: Option<f64>,
    pub perimeter_final: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub profile: ProfileReport,
    pub seed: u64,
    pub random_fields: usize,
    pub pass: bool,
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}
