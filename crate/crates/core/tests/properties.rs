//! Invariants checked on random inputs.

use proptest::prelude::*;

use sadovskii_core::energy::kinetic_energy;
use sadovskii_core::evolution::{discretize, ParticleEnsemble, ParticleSource};
use sadovskii_core::field::{GridField, GridGeometry};
use sadovskii_core::kernel::{green_eval, green_pnorm_moment, velocity_eval, Point};
use sadovskii_core::solver::{apply_vorticity_map, Mode, StreamSamples};
use sadovskii_core::steiner::{even_part, is_steiner_symmetric, steiner_symmetrize};

const PI: f64 = std::f64::consts::PI;

fn upper_point() -> impl Strategy<Value = Point> {
    (-5.0..5.0f64, 0.01..5.0f64).prop_map(|(a, b)| Point::new(a, b))
}

fn field_16x8() -> impl Strategy<Value = GridField> {
    let g = GridGeometry::symmetric(16, 8, 1.0).unwrap();
    proptest::collection::vec(prop_oneof![Just(0.0), 0.0..3.0f64], g.len())
        .prop_map(move |v| GridField::from_values(g, v).unwrap())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn green_is_symmetric_and_bounded(x in upper_point(), y in upper_point()) {
        prop_assume!((x.x1 - y.x1).hypot(x.x2 - y.x2) > 1e-6);
        let gxy = green_eval(x, y).unwrap();
        let gyx = green_eval(y, x).unwrap();
        prop_assert!(close(gxy, gyx, 1e-12));
        let r2 = (x.x1 - y.x1).powi(2) + (x.x2 - y.x2).powi(2);
        prop_assert!(gxy > 0.0);
        prop_assert!(gxy <= x.x2 * y.x2 / (PI * r2) * (1.0 + 1e-12));
    }

    #[test]
    fn green_vanishes_on_the_wall(x1 in -5.0..5.0f64, y in upper_point()) {
        prop_assume!((x1 - y.x1).abs() > 1e-6);
        prop_assert_eq!(green_eval(Point::new(x1, 0.0), y).unwrap(), 0.0);
    }

    #[test]
    fn wall_is_a_streamline(f in field_16x8(), x1 in -2.0..2.0f64) {
        prop_assert_eq!(velocity_eval(&f, Point::new(x1, 0.0)).u2, 0.0);
    }

    #[test]
    fn symmetrization_keeps_norms_and_raises_energy(f in field_16x8()) {
        let s = steiner_symmetrize(&f).unwrap();
        prop_assert!(close(s.mass(), f.mass(), 1e-12) || f.mass() == 0.0);
        prop_assert!(close(s.impulse(), f.impulse(), 1e-12) || f.impulse() == 0.0);
        prop_assert!(close(s.lp_power(3.0), f.lp_power(3.0), 1e-12) || f.mass() == 0.0);
        prop_assert!(kinetic_energy(&s) >= kinetic_energy(&f) * (1.0 - 1e-12));
        prop_assert_eq!(steiner_symmetrize(&s).unwrap(), s.clone());
        prop_assert!(is_steiner_symmetric(&even_part(&s).unwrap()));
    }

    #[test]
    fn map_decreases_in_speed_and_flux(
        a in 0.1..2.0f64,
        w in 0.0..1.0f64,
        dw in 0.0..0.5f64,
        gamma in 0.0..0.3f64,
        dg in 0.0..0.3f64,
        patch in any::<bool>(),
    ) {
        let g = GridGeometry::symmetric(32, 16, 2.0).unwrap();
        let psi = StreamSamples::from_fn(g, |x| a * x.x2 * (-(x.x1 * x.x1 + x.x2 * x.x2)).exp() * 4.0);
        let mode = if patch { Mode::Patch } else { Mode::Regular { p: 1.8 } };
        let base = apply_vorticity_map(&psi, w, gamma, mode, 1.0);
        let faster = apply_vorticity_map(&psi, w + dw, gamma, mode, 1.0);
        let flux = apply_vorticity_map(&psi, w, gamma + dg, mode, 1.0);
        prop_assert!(faster.mass() <= base.mass() * (1.0 + 1e-12) + 1e-300);
        prop_assert!(faster.impulse() <= base.impulse() * (1.0 + 1e-12) + 1e-300);
        prop_assert!(flux.mass() <= base.mass() * (1.0 + 1e-12) + 1e-300);
        prop_assert!(base.values().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn discretization_keeps_mass_and_impulse(f in field_16x8(), target in 0usize..64) {
        prop_assume!(f.mass() > 0.0);
        let e = discretize(ParticleSource::Grid(&f), target).unwrap();
        prop_assert!(close(e.mass(), f.mass(), 1e-12));
        prop_assert!(close(e.impulse(), f.impulse(), 1e-12));
        prop_assert!(e.positions.iter().all(|p| p.x2 > 0.0));
    }

    #[test]
    fn particle_steps_keep_impulse(
        pts in proptest::collection::vec((-1.0..1.0f64, 0.1..1.0f64, 0.01..1.0f64), 1..12),
    ) {
        let positions = pts.iter().map(|&(a, b, _)| Point::new(a, b)).collect();
        let circ: Vec<f64> = pts.iter().map(|p| p.2).collect();
        let areas = vec![0.01; circ.len()];
        let e = ParticleEnsemble::new(positions, circ, areas, 0.1).unwrap();
        let next = e.step(1e-3);
        prop_assert!((next.impulse() - e.impulse()).abs() <= 1e-12 * e.impulse().max(1.0));
        prop_assert_eq!(next.circulations, e.circulations);
    }
}

#[test]
fn moment_scales_with_height_squared() {
    let reference = green_pnorm_moment(Point::new(0.0, 1.0), 3.0).unwrap();
    for &(x1, x2) in &[(3.0, 0.5), (-7.0, 2.0), (10.0, 1.5)] {
        let m = green_pnorm_moment(Point::new(x1, x2), 3.0).unwrap();
        assert!(close(m / (x2 * x2), reference, 1e-6), "{x1} {x2}");
    }
}
