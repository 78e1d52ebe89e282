//! Attraction stage: certified basin geometry, relaxation audits, and the
//! admissible-parameter recipe.

use cql_core::attraction::{
    basin_contains, basin_spec, boundary_point, predicted_limit, rate_bracket_min,
    run_attraction, select_theorem_params,
};
use cql_core::dynamics::{norm, psi};
use cql_core::params::{MaterialParams, Preset};
use cql_core::Integrator;

fn fig4() -> cql_core::DerivedParams {
    MaterialParams::preset(Preset::Fig4).derive().unwrap()
}

#[test]
fn basin_geometry_matches_frozen_values() {
    let p = fig4();
    let spec = basin_spec(&p);
    assert!((p.gamma - 0.983685).abs() < 1e-6);
    assert!((spec.w_star - 1.75999399e-3).abs() / 1.75999399e-3 < 1e-6);
    assert!((spec.r_sm - 0.065857).abs() < 1e-6);
    assert!((spec.u1_cap - p.gamma / 4.0).abs() < 1e-15);
    assert!((spec.delta_a_max - (p.gamma / 4.0).powi(2)).abs() < 1e-15);
}

#[test]
fn membership_enforces_the_defect_range() {
    let p = fig4();
    // At the target with matching sphere: inside.
    assert!(basin_contains([0.0, 0.0, 0.0], &p, 0.0).unwrap());
    // Sphere mismatch: outside.
    assert!(!basin_contains([0.0, 0.0, 0.0], &p, 0.01).unwrap());
    // Defect beyond the certified window: an error, not a boolean.
    assert!(basin_contains([0.0, 0.0, 0.0], &p, 0.1).is_err());
}

#[test]
fn boundary_points_sit_on_the_level_set_and_sphere() {
    let p = fig4();
    let spec = basin_spec(&p);
    for delta_a in [0.0, 0.05] {
        for i in 0..12 {
            let th = 2.0 * std::f64::consts::PI * i as f64 / 12.0;
            let u = boundary_point(th, delta_a, &p);
            let w = 0.5 * (p.d21 * u[1] * u[1] + p.d31 * u[2] * u[2]);
            assert!((w - spec.w_star).abs() < 1e-15);
            let abs = [u[0] + p.s_plus[0], u[1] + p.s_plus[1], u[2] + p.s_plus[2]];
            assert!((psi(abs) - (1.0 + delta_a)).abs() < 1e-12);
            assert!(u[0].abs() <= spec.u1_cap);
        }
    }
}

#[test]
fn relaxation_reaches_the_defect_adjusted_limit() {
    let p = fig4();
    let ig = Integrator::with_tolerances(1e-12, 1e-14);

    let res0 = run_attraction(boundary_point(0.0, 0.0, &p), &p, None, &ig).unwrap();
    assert!(res0.converged);
    assert!(res0.max_w_increase <= 1e-12);
    assert!(res0.limit_error < 1e-6);
    assert!(res0.t_converged.unwrap() <= 1800.0);
    assert_eq!(res0.within_lemma_range, Some(true));
    assert!(!res0.w_series.is_empty());

    // Large defect: outside the certified delta_a window, still convergent,
    // and the limit formula still predicts the endpoint.
    let da = 0.1;
    let res1 = run_attraction(boundary_point(1.0, da, &p), &p, None, &ig).unwrap();
    assert!(res1.converged);
    assert_eq!(res1.within_lemma_range, None);
    assert!(res1.limit_error < 1e-6);
    let lim = predicted_limit(da, &p);
    assert!(norm(res1.u_infinity) <= da / (2.0 * p.gamma) + 1e-6);
    assert!((lim[0] - (-p.gamma + (p.gamma * p.gamma + da).sqrt())).abs() < 1e-15);
}

#[test]
fn decrease_rate_bracket_stays_clear_of_zero() {
    let p = fig4();
    assert!(rate_bracket_min(&p, 4_000, 99) > 0.9);
}

#[test]
fn recipe_constants_and_contraction_radius_shrink_with_scale() {
    let tp = select_theorem_params(0.0411, 0.8527, 0.006006).unwrap();
    let rel = |got: f64, want: f64| (got - want).abs() / want.abs();
    assert!(rel(tp.r_minus, 4.639383e-6) < 1e-4);
    assert!(rel(tp.theta, 20.482167) < 1e-4);
    assert!(rel(tp.m_e, 86.616944) < 1e-4);
    // The recipe's own capture angle pins the compatibility ratio to the
    // algebraic constant 25/24 regardless of inputs; it is reported as a
    // diagnostic (the literal <= 1 reading would reject every input).
    assert!(rel(tp.compat_ratio, 25.0 / 24.0) < 1e-12);
    assert!(tp.compat_ok);
    assert!(tp.compat_ratio > 1.0);

    let tp_half = select_theorem_params(0.0411, 0.8527, 0.003003).unwrap();
    assert!(tp_half.r_minus < tp.r_minus);
    assert!(rel(tp_half.compat_ratio, 25.0 / 24.0) < 1e-12);
}
