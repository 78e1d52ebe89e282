//! Expulsion stage: closed-form spiral, propagator structure, certificate
//! constants, and the inclusion property of the certified start ball.

use cql_core::dynamics::{norm, scaled_rhs};
use cql_core::expulsion::{
    expm_closed, expulsion_system, expulsion_time, gronwall_envelope, jacobian_v,
    lemma1_thresholds, plan_expulsion, xi_prime,
};
use cql_core::params::{MaterialParams, Preset};
use cql_core::sampling::halton;
use cql_core::Integrator;
use num_complex::Complex64;

fn fig2() -> cql_core::DerivedParams {
    MaterialParams::preset(Preset::Fig2).derive().unwrap()
}

#[test]
fn stage_durations_match_frozen_values() {
    assert!((expulsion_time(0.07, 0.03).unwrap() - 2.33716135).abs() < 1e-8);
    let p = fig2();
    assert!((expulsion_time(p.k, p.beta_e).unwrap() - 2.1249888812).abs() < 1e-8);
    // Experiment-scale pairing: tighter separation, stronger current.
    let p6 = MaterialParams::new(0.0411, 0.0411 + 6.51 * 0.002, 0.8527, 2.0, 0.002, 0.1036, 15.0, 0.0308)
        .unwrap()
        .derive()
        .unwrap();
    assert!((expulsion_time(p6.k, p6.beta_e).unwrap() - 1.02699159).abs() < 1e-7);
}

#[test]
fn unreachable_or_undriven_latitudes_error() {
    assert!(expulsion_time(0.8, 0.03).is_err()); // sqrt(2) k > 1
    assert!(expulsion_time(0.07, 0.0).is_err());
    assert!(expulsion_time(0.07, -0.01).is_err());
}

#[test]
fn spiral_endpoint_hits_the_latitude_exactly() {
    let p = fig2();
    let (_, _, a_bar, b_bar) = expulsion_system(&p, p.beta_e);
    let t_e = expulsion_time(p.k, p.beta_e).unwrap();
    let xi = xi_prime(t_e, p.lambda, p.beta_e, a_bar, b_bar);
    assert!((p.lambda * xi[2] + p.k).abs() < 1e-15);
    // Closed form of the endpoint in terms of the latitude overshoot factor.
    let kk = ((1.0 - 2.0 * p.k * p.k).sqrt() - 1.0) / (2.0 * p.beta_e * p.lambda);
    assert!((xi[0] - kk * a_bar).abs() < 1e-9 * xi[0].abs());
    assert!((xi[1] - kk * b_bar).abs() < 1e-9 * xi[1].abs());
}

#[test]
fn linear_endpoint_matches_frozen_state_and_tracks_the_nonlinear_flow() {
    let p = fig2();
    let plan = plan_expulsion(&p, 1.0, 100).unwrap();
    let frozen = [-0.9915385228, -0.1223903226, -0.07];
    for i in 0..3 {
        assert!((plan.u_end[i] - frozen[i]).abs() < 1e-8, "component {i}");
    }
    assert_eq!(plan.approx_state(0.0, &p), p.s_minus);
    assert_eq!(plan.approx_state(plan.t_e, &p), plan.u_end);

    let ig = Integrator::with_tolerances(1e-12, 1e-14);
    let traj = ig
        .integrate(|_, u| scaled_rhs(u, p.beta_e_t, &p), 0.0, plan.t_e, p.s_minus)
        .unwrap();
    let err = {
        let u = traj.final_state();
        norm([
            u[0] - plan.u_end[0],
            u[1] - plan.u_end[1],
            u[2] - plan.u_end[2],
        ])
    };
    // First-order plan, so the gap is O(lambda^2) in the state.
    assert!(err < 0.02, "nonlinear-vs-plan endpoint gap {err:.3e}");
}

#[test]
fn system_matrix_has_the_spectral_structure() {
    let p = fig2();
    let (l, _, a_bar, b_bar) = expulsion_system(&p, p.beta_e);
    let s = std::f64::consts::SQRT_2 * p.beta_e;
    let i = Complex64::i();
    // Eigenpairs: (-is, +is, 0) with explicit eigenvectors.
    let c1 = [
        Complex64::new(1.0, 0.0),
        Complex64::new(b_bar / a_bar, 0.0),
        -i * s / a_bar,
    ];
    let c2 = [c1[0], c1[1], i * s / a_bar];
    let c3 = [
        Complex64::new(1.0, 0.0),
        Complex64::new(-p.gamma / p.omega_cap, 0.0),
        Complex64::new(0.0, 0.0),
    ];
    for (vec, lam) in [(c1, -i * s), (c2, i * s), (c3, Complex64::new(0.0, 0.0))] {
        for r in 0..3 {
            let mut lv = Complex64::new(0.0, 0.0);
            for c in 0..3 {
                lv += l[r][c] * vec[c];
            }
            let defect = (lv - lam * vec[r]).norm();
            assert!(defect < 1e-12, "row {r}: defect {defect:.3e}");
        }
    }
    // The eigen-identity behind the kernel row.
    assert!((a_bar * p.gamma + b_bar * p.omega_cap + p.beta_e).abs() < 1e-15);
}

#[test]
fn propagator_is_volume_preserving() {
    let p = fig2();
    let (l, _, _, _) = expulsion_system(&p, p.beta_e);
    for tau in [-30.0, 7.0, 100.0] {
        let m = expm_closed(&l, tau, p.beta_e);
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        assert!((det - 1.0).abs() < 1e-12, "tau={tau}: det={det}");
    }
}

#[test]
fn deviation_jacobian_matches_frozen_probes() {
    let p = fig2();
    let probes: [([f64; 3], [[f64; 3]; 3]); 2] = [
        (
            [0.3, -0.2, 0.4],
            [
                [0.01325156, 0.30625271, -0.59237975],
                [-0.32526647, -0.12837754, 6.2440352],
                [-0.01991486, -6.45947871, -1.61299916],
            ],
        ),
        (
            [1.3, -0.7, 2.1],
            [
                [0.07023925, 1.56568817, -0.98891976],
                [-1.7065284, -0.06840946, 5.41133654],
                [-0.06217025, -6.35046335, -1.57892375],
            ],
        ),
    ];
    for (xi, expected) in probes {
        let j = jacobian_v(xi, &p, p.beta_e_t);
        for r in 0..3 {
            for c in 0..3 {
                assert!(
                    (j[r][c] - expected[r][c]).abs() < 1e-6,
                    "xi={xi:?} [{r}][{c}]: {} vs {}",
                    j[r][c],
                    expected[r][c]
                );
            }
        }
    }
}

#[test]
fn certificate_constants_match_frozen_values() {
    let p = fig2();
    let th = lemma1_thresholds(&p, p.k, p.beta_e_t, 1.0, 120_000).unwrap();
    let rel = |got: f64, want: f64| (got - want).abs() / want.abs();
    assert!(rel(th.r_star, 192.95646849) < 1e-8);
    assert!(rel(th.m1, 1.838063e6) < 1e-3);
    assert!(rel(th.m2, 2.688670e4) < 1e-3);
    assert!(rel(th.m_e, 45.32580203) < 1e-6);
    assert!(rel(th.lambda_e, 1.412139e-9) < 1e-3);
}

#[test]
fn envelope_is_finite_early_and_saturates_late() {
    // The a-priori envelope is astronomically loose at figure-scale
    // constants: finite (and already > 0.1) at tau = 1e-6, overflowing to
    // infinity well before T_e. Domination checks stay valid either way.
    let p = fig2();
    let th = lemma1_thresholds(&p, p.k, p.beta_e_t, 1.0, 2_000).unwrap();
    let early = gronwall_envelope(th.m_e, th.m1, th.m2, p.lambda, 1e-6);
    let late = gronwall_envelope(th.m_e, th.m1, th.m2, p.lambda, th.t_e);
    assert!(early.is_finite() && early > 0.0);
    assert!(late.is_infinite());
}

#[test]
fn certified_start_ball_contracts_into_the_target_ball() {
    let p = fig2();
    let plan = plan_expulsion(&p, 1.0, 2_000).unwrap();
    let m_e = plan.thresholds.m_e;
    let r_in = p.lambda / (4.0 * m_e);
    let r_out = p.lambda; // rho_e = 1
    let ig = Integrator::with_tolerances(1e-11, 1e-13);
    let mut worst = 0.0f64;
    for row in halton(50, 2, 20) {
        let cos_t = 2.0 * row[0] - 1.0;
        let sin_t = (1.0 - cos_t * cos_t).sqrt();
        let phi = 2.0 * std::f64::consts::PI * row[1];
        let u0 = [
            p.s_minus[0] + r_in * sin_t * phi.cos(),
            p.s_minus[1] + r_in * sin_t * phi.sin(),
            p.s_minus[2] + r_in * cos_t,
        ];
        let traj = ig
            .integrate(|_, u| scaled_rhs(u, p.beta_e_t, &p), 0.0, plan.t_e, u0)
            .unwrap();
        let u = traj.final_state();
        worst = worst.max(norm([
            u[0] - plan.u_end[0],
            u[1] - plan.u_end[1],
            u[2] - plan.u_end[2],
        ]));
    }
    assert!(worst <= r_out, "max endpoint spread {worst:.3e} > {r_out:.3e}");
}
