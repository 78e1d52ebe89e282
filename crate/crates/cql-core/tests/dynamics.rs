//! Field formulations: cross-form vs polynomial expansion, tangency and
//! conservation, the latitude-holding feedback, and the planar split.

use cql_core::dynamics::{
    beta_lat, f_r_planar, fr_fields, free_energy, latitudinal_rhs, norm, planar_remainder, psi,
    reduced_rhs, reduced_rhs_poly, scaled_rhs, transfer_rhs,
};
use cql_core::params::{MaterialParams, Preset};
use cql_core::sampling::SplitMix64;
use cql_core::Integrator;
use proptest::prelude::*;

fn fig2() -> cql_core::DerivedParams {
    MaterialParams::preset(Preset::Fig2).derive().unwrap()
}

#[test]
fn cross_form_equals_polynomial_expansion() {
    let p = fig2();
    let mut rng = SplitMix64::new(41);
    for _ in 0..500 {
        let u = rng.unit3();
        let beta = rng.uniform(-0.1, 0.1);
        let a = reduced_rhs(u, beta, &p);
        let b = reduced_rhs_poly(u, beta, &p);
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() < 1e-14, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn equilibria_are_stationary_for_zero_current() {
    let p = fig2();
    for eq in [p.s_minus, p.s_plus] {
        assert!(norm(reduced_rhs(eq, 0.0, &p)) < 1e-16);
        assert!(norm(scaled_rhs(eq, 0.0, &p)) < 1e-16);
    }
}

#[test]
fn feedback_current_cancels_the_latitude_component_exactly() {
    let p = fig2();
    let k = p.k;
    let r = (1.0 - k * k).sqrt();
    for i in 0..50 {
        let th = 2.0 * std::f64::consts::PI * i as f64 / 50.0;
        let u = [0.6 * r * th.cos(), 0.6 * r * th.sin(), -k];
        let f = latitudinal_rhs(u, &p, k).unwrap();
        assert!(f[2].abs() < 1e-15, "latitude leak {:.3e}", f[2]);
        // The feedback field is the full field at the feedback current.
        let b = beta_lat([u[0], u[1]], &p, k).unwrap();
        let g = scaled_rhs(u, b, &p);
        for i in 0..3 {
            assert!((f[i] - g[i]).abs() < 1e-15);
        }
    }
}

#[test]
fn planar_transfer_field_matches_the_constrained_full_field() {
    let p = fig2();
    let k = p.k;
    // On the latitude circle the constrained feedback field splits exactly
    // into the planar model plus the lambda^2 remainder; the model field
    // drops only that last term.
    let r = (1.0 - k * k).sqrt();
    for i in 0..40 {
        let th = 2.0 * std::f64::consts::PI * i as f64 / 40.0;
        let v = [r * th.cos(), r * th.sin()];
        let f2 = transfer_rhs(v, &p, k);
        let f3 = latitudinal_rhs([v[0], v[1], -k], &p, k).unwrap();
        let rem = planar_remainder(v, &p, k);
        assert!(f3[2].abs() < 1e-15, "latitude leak {:.3e}", f3[2]);
        for i in 0..2 {
            let gap = f3[i] - f2[i] - p.lambda * p.lambda * rem[i];
            assert!(gap.abs() < 1e-13, "component {i}: gap {gap:.3e}");
        }
    }
}

#[test]
fn beta_lat_rejects_the_pole_band() {
    let p = fig2();
    assert!(beta_lat([0.0, 0.0], &p, p.k).is_err());
    assert!(beta_lat([1e-141, 0.0], &p, p.k).is_err());
    assert!(beta_lat([1e-9, -1e-9], &p, p.k).is_ok());
}

#[test]
fn free_energy_decreases_under_damped_free_relaxation() {
    let p = fig2();
    let ig = Integrator::default();
    let tilt = 0.3f64;
    let u0 = [
        p.s_plus[0] * tilt.cos() - p.s_plus[1] * tilt.sin(),
        p.s_plus[0] * tilt.sin() + p.s_plus[1] * tilt.cos(),
        0.0,
    ];
    let traj = ig
        .integrate(|_, u| scaled_rhs(u, 0.0, &p), 0.0, 400.0, u0)
        .unwrap();
    let mut prev = free_energy(u0, &p);
    for i in 1..=40 {
        let e = free_energy(traj.sample(400.0 * i as f64 / 40.0), &p);
        assert!(e <= prev + 1e-12, "free energy rose: {prev} -> {e}");
        prev = e;
    }
}

#[test]
fn on_circle_split_reproduces_the_planar_field_and_remainder() {
    let p = fig2();
    let k = p.k;
    let r = (1.0 - k * k).sqrt();
    for i in 0..100 {
        let th = 2.0 * std::f64::consts::PI * i as f64 / 100.0;
        let v = [r * th.cos(), r * th.sin()];
        let (f, rr) = fr_fields([v[0], v[1], -k], v, &p, k);
        let fp = f_r_planar(v, &p, k);
        let rem = planar_remainder(v, &p, k);
        assert!((f[0] + p.lambda * rr[0] - fp[0] - p.lambda * rem[0]).abs() < 1e-13);
        assert!((f[1] + p.lambda * rr[1] - fp[1] - p.lambda * rem[1]).abs() < 1e-13);
        assert!((f[2] + p.lambda * rr[2]).abs() < 1e-13);
    }
}

proptest! {
    /// The flow is tangent to every sphere: u . f = 0 and psi is conserved
    /// regardless of current.
    #[test]
    fn field_is_tangent_for_any_state_and_current(
        x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
        beta in -5.0f64..5.0,
    ) {
        let p = fig2();
        let n = (x * x + y * y + z * z).sqrt();
        prop_assume!(n > 0.1);
        let u = [x / n, y / n, z / n];
        let f = scaled_rhs(u, beta, &p);
        let dot = u[0] * f[0] + u[1] * f[1] + u[2] * f[2];
        prop_assert!(dot.abs() < 1e-12, "u.f = {dot:.3e}");
        prop_assert!((psi(u) - 1.0).abs() < 1e-12);
    }
}
