//! Transfer stage: normal-form coefficients, the corrected closed-form
//! plan, stage timing, and the certificate constants.

use cql_core::dynamics::norm;
use cql_core::params::{MaterialParams, Preset};
use cql_core::sampling::SplitMix64;
use cql_core::transfer::{
    approx_transfer_solution, homological_residual, initial_normal_coords,
    normal_form_coefficients, plan_transfer, rho_tr_minus, transfer_time,
};
use num_complex::Complex64;

fn fig2() -> cql_core::DerivedParams {
    MaterialParams::preset(Preset::Fig2).derive().unwrap()
}

const W0: [f64; 2] = [-0.9, -0.1];

#[test]
fn coefficients_match_frozen_values() {
    let p = fig2();
    let c = normal_form_coefficients(&p, p.k).unwrap();
    let close = |got: Complex64, re: f64, im: f64| {
        (got - Complex64::new(re, im)).norm() < 1e-10
    };
    assert!(close(c.get(1, (2, 0)), 0.0, 5.712641564703e-1));
    assert!(close(c.get(1, (1, 1)), 0.0, 5.976256630462e-1));
    assert!(close(c.get(1, (0, 2)), 0.0, -8.787168858656e-3));
    assert!(close(c.get(1, (3, 0)), 4.030345043597, 0.0));
    assert!(close(c.get(1, (1, 2)), 4.030345043597, 0.0));
    assert!(close(c.get(1, (2, 1)), 0.0, 0.0));
    assert!(close(c.get(1, (0, 3)), 0.0, 0.0));
    // Second component mirrors the first under conjugation + index swap.
    assert!(close(c.get(2, (1, 1)), 0.0, -5.976256630462e-1));
    assert_eq!(c.get(2, (0, 2)), c.get(1, (2, 0)).conj());
    assert_eq!(c.get(2, (0, 3)), c.get(1, (3, 0)).conj());
}

#[test]
fn mixed_coefficient_sits_near_its_published_magnitude() {
    // Ballpark agreement only: the published value carries a sign/derivation
    // slip, so just the magnitude is cross-checked.
    let p = fig2();
    let c = normal_form_coefficients(&p, p.k).unwrap();
    assert!((c.get(1, (1, 1)).norm() - 0.57055).abs() < 0.05);
}

#[test]
fn defining_equation_is_satisfied_and_is_sensitive() {
    let p = fig2();
    let c = normal_form_coefficients(&p, p.k).unwrap();
    let mut rng = SplitMix64::new(17);
    let pts: Vec<(Complex64, Complex64)> = (0..100)
        .map(|_| {
            (
                Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)),
                Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)),
            )
        })
        .collect();
    assert!(homological_residual(&c, &p, p.k, &pts) < 1e-12);
    // A 1e-3 nudge of a single coefficient must be loudly visible.
    let mut bad = c.clone();
    bad.c[0][0] += Complex64::new(1e-3, 0.0);
    assert!(homological_residual(&bad, &p, p.k, &pts) > 1e-6);
}

#[test]
fn stage_timing_matches_frozen_and_published_values() {
    let p = fig2();
    let t = transfer_time(W0, &p, p.k).unwrap();
    assert!((t.a_m - -0.905051264855).abs() < 1e-9);
    assert!((t.phi - 0.105701384395).abs() < 1e-9);
    assert!((t.t_tr - 54.0439834246).abs() < 1e-7);
    assert!(t.k_sq_small);
    // Published example numbers drift in the 4th decimal (rounding).
    assert!((t.a_m - -0.905055).abs() < 1e-4);
    assert!((t.phi - 0.105693).abs() < 1e-4);
    assert!((t.t_tr - 54.045).abs() < 2e-3);
}

#[test]
fn overshooting_endpoints_are_rejected() {
    let p = fig2();
    // Amplitude far too small to ever reach the meridian offset.
    assert!(transfer_time([-0.01, 0.0], &p, 0.2).is_err());
}

#[test]
fn corrected_normal_coordinates_match_frozen_values() {
    let p = fig2();
    let c = normal_form_coefficients(&p, p.k).unwrap();
    let (xa, xb) = initial_normal_coords(W0, &c, &p, p.lambda);
    assert!((xa - -0.461792365122).abs() < 1e-9);
    assert!((xb - -0.051861326995).abs() < 1e-9);
    // At lambda = 0 the corrections vanish and the coordinates reduce to
    // the bare ellipse parametrization (published rounding is 5e-5 coarse).
    let (xa0, xb0) = initial_normal_coords(W0, &c, &p, 0.0);
    assert!((xa0 - W0[0] / (2.0 * p.sigma)).abs() < 1e-15);
    assert!((xb0 - W0[1] / 2.0).abs() < 1e-15);
    assert!((xa0 - -0.47131).abs() < 5e-5);
}

#[test]
fn closed_form_returns_to_the_start_at_second_order() {
    let p = fig2();
    let c = normal_form_coefficients(&p, p.k).unwrap();
    let (xa, xb) = initial_normal_coords(W0, &c, &p, p.lambda);
    let w_at0 = approx_transfer_solution(0.0, xa, xb, &p, p.k, p.lambda);
    let gap = norm([w_at0[0] - W0[0], w_at0[1] - W0[1], 0.0]);
    assert!((gap - 1.070735e-3).abs() < 1e-8, "round-trip gap {gap:.6e}");
    let bound = 10.0 * p.lambda * p.lambda * norm([W0[0], W0[1], 0.0]);
    assert!(gap <= bound, "{gap:.6e} > {bound:.6e}");
}

#[test]
fn leading_order_orbit_conserves_the_ellipse_and_lands_on_target() {
    let p = fig2();
    let c = normal_form_coefficients(&p, p.k).unwrap();
    let (xa0, xb0) = initial_normal_coords(W0, &c, &p, 0.0);
    let timing = transfer_time(W0, &p, p.k).unwrap();
    let g = |w: [f64; 2]| w[0] * w[0] + p.sigma * p.sigma * w[1] * w[1];
    let g0 = g(approx_transfer_solution(0.0, xa0, xb0, &p, p.k, 0.0));
    for i in 0..=50 {
        let t = timing.t_tr * i as f64 / 50.0;
        let w = approx_transfer_solution(t, xa0, xb0, &p, p.k, 0.0);
        assert!((g(w) - g0).abs() < 1e-12);
    }
    // Endpoint identities of the timing equation.
    let w_end = approx_transfer_solution(timing.t_tr, xa0, xb0, &p, p.k, 0.0);
    let k = p.k;
    assert!((w_end[0] - (-timing.a_m - k * k)).abs() < 1e-9);
    let w2_pred =
        -(2.0 * timing.a_m.abs() * k * k - k.powi(4)).sqrt() / p.sigma;
    assert!((w_end[1] - w2_pred).abs() < 1e-9, "{} vs {w2_pred}", w_end[1]);
}

#[test]
fn certificate_constants_match_frozen_values() {
    let p = fig2();
    let plan = plan_transfer(W0, &p).unwrap();
    let th = &plan.thresholds;
    let rel = |got: f64, want: f64| (got - want).abs() / want.abs();
    // Frozen constants were estimated with finite-difference rows; the
    // analytic rows used here agree to ~1%.
    assert!(rel(th.m_tr, 23.83718330) < 1e-2);
    assert!(rel(th.k_w, 1.91143113) < 1e-2);
    assert!(rel(th.lambda_tr, 1.636050e-6) < 1e-2);
    assert!(rel(th.theta, 30.370121) < 1e-2);
    assert!((plan.rho_plus - p.k / (8.0 * p.lambda)).abs() < 1e-12);
    assert!(
        (plan.rho_tr_minus - rho_tr_minus(plan.rho_plus, th.theta)).abs() < 1e-12
    );
    // The contraction statement requires theta * rho_plus / (4 (1+theta)).
    let expect = th.theta * plan.rho_plus / (4.0 * (1.0 + th.theta));
    assert!((plan.rho_tr_minus - expect).abs() < 1e-12);
}

#[test]
fn certificate_closes_only_at_tiny_scale_separation() {
    // At figure-scale separation the contraction constant is far above 1;
    // on the same family at lambda = 1e-6 the certificate regime is reached.
    let p = fig2();
    let native = plan_transfer(W0, &p).unwrap();
    assert!(native.thresholds.theta > 1.0);
    assert!(p.lambda > native.thresholds.lambda_tr);

    let tiny = MaterialParams::new(
        0.0411,
        0.0411 + 6.51e-6,
        0.8527,
        2.0,
        1e-6,
        0.0676,
        3.0,
        0.07,
    )
    .unwrap()
    .derive()
    .unwrap();
    let plan = plan_transfer(W0, &tiny).unwrap();
    assert!(plan.thresholds.theta < 1.0);
    assert!(tiny.lambda <= plan.thresholds.lambda_tr);
}

#[test]
fn plan_state_is_the_closed_form() {
    let p = fig2();
    let plan = plan_transfer(W0, &p).unwrap();
    for t in [0.0, 10.0, 37.5] {
        let a = plan.plan_state(t, &p);
        let b = approx_transfer_solution(t, plan.x_a, plan.x_b, &p, p.k, p.lambda);
        assert_eq!(a, b);
    }
}
