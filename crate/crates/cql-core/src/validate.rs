//! The acceptance suite: twelve quantitative checks covering every stage of
//! the switching machinery, shared between the CLI `validate` subcommand and
//! the integration tests.
//!
//! Each check is self-contained (fixed parameter sets, deterministic
//! sampling) and returns a [`CriterionOutcome`] instead of panicking, so the
//! CLI can print one line per criterion and exit nonzero on any failure
//! while the test harness can assert on the same outcomes.

use num_complex::Complex64;

use crate::attraction::{boundary_point, run_attraction};
use crate::dynamics::{
    f_r_planar, fr_fields, latitudinal_rhs, lls_rhs, norm, planar_matrix, planar_remainder, psi,
    reduced_rhs, scaled_rhs,
};
use crate::expulsion::{
    expm_closed, expm_series, expulsion_system, expulsion_time, gronwall_envelope, jacobian_v,
    lemma1_thresholds, plan_expulsion, residual_field_v, xi_prime,
};
use crate::integrate::Integrator;
use crate::params::{MaterialParams, Preset};
use crate::pipeline::{ballistic_baseline, plan_switching, run_switching, stress_test, SwitchingReport};
use crate::sampling::SplitMix64;
use crate::transfer::{
    approx_transfer_with_rate, homological_residual, initial_normal_coords,
    normal_form_coefficients, transfer_time,
};
use crate::Result;

/// Outcome of one acceptance criterion.
#[derive(Clone, Debug)]
pub struct CriterionOutcome {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub details: String,
}

fn wrap(id: u32, name: &'static str, body: Result<(bool, String)>) -> CriterionOutcome {
    match body {
        Ok((pass, details)) => CriterionOutcome {
            id,
            name,
            pass,
            details,
        },
        Err(e) => CriterionOutcome {
            id,
            name,
            pass: false,
            details: format!("errored: {e}"),
        },
    }
}

/// Material family used by the scaling checks: outer anisotropies fixed,
/// gap tied to the scale separation.
fn family(
    lambda: f64,
    alpha_t: f64,
    omega_cap: f64,
    beta_e_t: f64,
    k: f64,
) -> Result<crate::params::DerivedParams> {
    MaterialParams::new(
        0.0411,
        0.0411 + 6.51 * lambda,
        0.8527,
        alpha_t,
        lambda,
        omega_cap,
        beta_e_t,
        k,
    )?
    .derive()
}

/// Experiment-scale pairing of the Fig6/Fig7 scenario: tighter separation,
/// stronger expulsion current (reproduces the quoted stage timings).
fn caption_fig6() -> Result<crate::params::DerivedParams> {
    family(0.002, 2.0, 0.1036, 15.0, 0.0308)
}

/// 1. The expulsion stage duration at the quoted working point.
pub fn check_01() -> CriterionOutcome {
    wrap(1, "expulsion-time-caption", (|| {
        let t = expulsion_time(0.07, 0.03)?;
        let pass = (t - 2.3372).abs() <= 1e-3;
        Ok((pass, format!("expulsion_time(0.07, 0.03) = {t:.8} vs 2.3372 (tol 1e-3)")))
    })())
}

/// 2. Closed-form stage propagator against a scaling-and-squaring series
/// oracle, plus the semigroup property.
pub fn check_02() -> CriterionOutcome {
    wrap(2, "matrix-exponential-equivalence", (|| {
        let p = MaterialParams::preset(Preset::Fig2).derive()?;
        let (l, _, _, _) = expulsion_system(&p, p.beta_e);
        let mut rng = SplitMix64::new(2);
        let mut worst_series = 0.0f64;
        for _ in 0..200 {
            let tau = rng.uniform(-100.0, 100.0);
            let a = expm_closed(&l, tau, p.beta_e);
            let b = expm_series(&l, tau);
            for i in 0..3 {
                for j in 0..3 {
                    worst_series = worst_series.max((a[i][j] - b[i][j]).abs());
                }
            }
        }
        let mut worst_semi = 0.0f64;
        for _ in 0..100 {
            let t1 = rng.uniform(-50.0, 50.0);
            let t2 = rng.uniform(-50.0, 50.0);
            let e1 = expm_closed(&l, t1, p.beta_e);
            let e2 = expm_closed(&l, t2, p.beta_e);
            let e12 = expm_closed(&l, t1 + t2, p.beta_e);
            for i in 0..3 {
                for j in 0..3 {
                    let mut prod = 0.0;
                    for (m, e2m) in e2.iter().enumerate() {
                        prod += e1[i][m] * e2m[j];
                    }
                    worst_semi = worst_semi.max((prod - e12[i][j]).abs());
                }
            }
        }
        let pass = worst_series < 1e-12 && worst_semi < 1e-11;
        Ok((pass, format!(
            "closed vs series max |diff| = {worst_series:.3e} (tol 1e-12); \
             semigroup max |diff| = {worst_semi:.3e} (tol 1e-11)"
        )))
    })())
}

/// 3. The change-of-variables coefficients solve their defining equation
/// exactly (polynomial identity at random complex points).
pub fn check_03() -> CriterionOutcome {
    wrap(3, "homological-identity", (|| {
        let p = MaterialParams::preset(Preset::Fig2).derive()?;
        let coeffs = normal_form_coefficients(&p, p.k)?;
        let mut rng = SplitMix64::new(3);
        let pts: Vec<(Complex64, Complex64)> = (0..100)
            .map(|_| {
                (
                    Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)),
                    Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)),
                )
            })
            .collect();
        let res = homological_residual(&coeffs, &p, p.k, &pts);
        Ok((res < 1e-12, format!("max residual = {res:.3e} (tol 1e-12)")))
    })())
}

/// 4. Closing the loop with the latitude-holding feedback keeps the
/// trajectory on the working latitude to integrator precision.
pub fn check_04() -> CriterionOutcome {
    wrap(4, "latitudinal-exactness", (|| {
        let p = MaterialParams::preset(Preset::Fig2).derive()?;
        let ep = plan_expulsion(&p, 1.0, 200)?;
        let w0 = [ep.u_end[0], ep.u_end[1]];
        let t_tr = transfer_time(w0, &p, p.k)?.t_tr;
        let u0 = [w0[0], w0[1], -p.k];
        let ig = Integrator::with_tolerances(1e-10, 1e-12);
        let traj = ig.integrate(
            |_, u| latitudinal_rhs(u, &p, p.k).unwrap_or([f64::NAN; 3]),
            0.0,
            t_tr,
            u0,
        )?;
        let mut worst = 0.0f64;
        for i in 0..800 {
            let t = t_tr * i as f64 / 799.0;
            worst = worst.max((traj.sample(t)[2] + p.k).abs());
        }
        Ok((worst < 1e-8, format!(
            "max |u3 + K| = {worst:.3e} over [0, {t_tr:.2}] (tol 1e-8)"
        )))
    })())
}

/// 5. Under the synthesized open-loop control the latitude excursion scales
/// at first order: ordered across scale separations, halving ratio in
/// [0.3, 0.7]. Fixed physical expulsion current so the handoff state is
/// scale-independent.
pub fn check_05() -> CriterionOutcome {
    wrap(5, "open-loop-drift-scaling", (|| {
        let ig = Integrator::with_tolerances(1e-12, 1e-14);
        let drift = |lambda: f64| -> Result<f64> {
            let p = family(lambda, 2.0, 0.0676, 0.033 / lambda, 0.08)?;
            let plans = plan_switching(&p, 1.0, 100)?;
            let (report, _) = run_switching(p.s_minus, &plans, &p, Some(0.0), &ig)?;
            Ok(report.max_u3_plus_k_during_transfer)
        };
        let d1 = drift(0.0055)?;
        let d2 = drift(0.005)?;
        let d3 = drift(0.001)?;
        let d4 = drift(0.0005)?;
        let ratio = d4 / d3;
        let ordered = d1 > d2 && d2 > d3;
        let pass = ordered && (0.3..=0.7).contains(&ratio);
        Ok((pass, format!(
            "max|u3+K|: {d1:.4e} (lam 0.0055) > {d2:.4e} (0.005) > {d3:.4e} (0.001): {ordered}; \
             halving ratio {ratio:.4} in [0.3, 0.7]"
        )))
    })())
}

/// 6. The closed-form transfer plan satisfies the planar model up to a
/// second-order defect: quartering the defect when the separation halves.
pub fn check_06() -> CriterionOutcome {
    wrap(6, "normal-form-residual-order", (|| {
        let w0 = [-0.9, -0.1];
        let k = 0.07;
        let residual_sup = |lambda: f64| -> Result<f64> {
            let p = family(lambda, 2.0, 0.0676, 3.0, k)?;
            let coeffs = normal_form_coefficients(&p, k)?;
            let (xa, xb) = initial_normal_coords(w0, &coeffs, &p, lambda);
            let t_tr = transfer_time(w0, &p, k)?.t_tr;
            let lm = planar_matrix(&p);
            let mut sup = 0.0f64;
            for i in 0..400 {
                let t = t_tr * i as f64 / 399.0;
                let (w, dw) = approx_transfer_with_rate(t, xa, xb, &p, k, lambda);
                let f = f_r_planar(w, &p, k);
                let r1 = dw[0] - lm[0][0] * w[0] - lm[0][1] * w[1] - lambda * f[0];
                let r2 = dw[1] - lm[1][0] * w[0] - lm[1][1] * w[1] - lambda * f[1];
                sup = sup.max((r1 * r1 + r2 * r2).sqrt());
            }
            Ok(sup)
        };
        let lams = [0.011, 0.0055, 0.00275, 0.001375];
        let sups = [
            residual_sup(lams[0])?,
            residual_sup(lams[1])?,
            residual_sup(lams[2])?,
            residual_sup(lams[3])?,
        ];
        let ratios = [sups[0] / sups[1], sups[1] / sups[2], sups[2] / sups[3]];
        let pass = ratios.iter().all(|r| (3.0..=5.0).contains(r));
        Ok((pass, format!(
            "sup defects {:.3e} / {:.3e} / {:.3e} / {:.3e}; halving ratios \
             {:.3}, {:.3}, {:.3} (window [3, 5])",
            sups[0], sups[1], sups[2], sups[3], ratios[0], ratios[1], ratios[2]
        )))
    })())
}

/// 7. The linearized expulsion spiral tracks the nonlinear flow: endpoint
/// deviation shrinks with the separation, and the deviation is dominated
/// by the certified envelope at every sample.
pub fn check_07() -> CriterionOutcome {
    wrap(7, "expulsion-approximation-envelope", (|| {
        let ig = Integrator::with_tolerances(1e-12, 1e-14);
        let k = 0.07;
        let beta_e = 0.03;
        let t_e = expulsion_time(k, beta_e)?;
        let mut endpoint = Vec::new();
        let mut dominated = true;
        let mut detail = String::new();
        for &lambda in &[0.006, 0.004, 0.001] {
            let p = family(lambda, 2.0, 0.0676, beta_e / lambda, k)?;
            let (_, _, a_bar, b_bar) = expulsion_system(&p, beta_e);
            let traj = ig.integrate(
                |_, u| scaled_rhs(u, beta_e / lambda, &p),
                0.0,
                t_e,
                p.s_minus,
            )?;
            let th = lemma1_thresholds(&p, k, beta_e / lambda, 1.0, 40_000)?;
            let mut ds = Vec::with_capacity(101);
            for i in 0..=100 {
                let tau = t_e * i as f64 / 100.0;
                let u = traj.sample(tau);
                let xi = xi_prime(tau, lambda, beta_e, a_bar, b_bar);
                let d = [
                    (u[0] - p.s_minus[0]) / lambda - xi[0],
                    (u[1] - p.s_minus[1]) / lambda - xi[1],
                    (u[2] - p.s_minus[2]) / lambda - xi[2],
                ];
                ds.push((tau, norm(d)));
            }
            for &(tau, d) in &ds[1..] {
                let env = gronwall_envelope(th.m_e, th.m1, th.m2, lambda, tau);
                if d > env + 1e-30 {
                    dominated = false;
                }
            }
            let end_u = lambda * ds.last().unwrap().1;
            endpoint.push(end_u);
            detail.push_str(&format!("lam={lambda}: |u-u_c|(T_e)={end_u:.3e}; "));
        }
        let monotone = endpoint[0] >= endpoint[1] - 1e-15 && endpoint[1] >= endpoint[2] - 1e-15;
        let pass = monotone && dominated;
        Ok((pass, format!(
            "{detail}endpoint monotone non-increasing: {monotone}; \
             envelope dominates all samples: {dominated}"
        )))
    })())
}

/// 8. Trapping-function decrease and the defect-adjusted limit point from
/// boundary starts of the certified basin.
pub fn check_08() -> CriterionOutcome {
    wrap(8, "lyapunov-decrease-and-limit", (|| {
        let p = MaterialParams::preset(Preset::Fig4).derive()?;
        let ig = Integrator::with_tolerances(1e-12, 1e-14);
        let mut detail = String::new();
        let mut pass = true;
        for &da in &[0.0, 0.1] {
            let mut worst_inc = f64::NEG_INFINITY;
            let mut worst_limit = 0.0f64;
            let mut worst_norm = 0.0f64;
            for j in 0..20 {
                let theta = 2.0 * std::f64::consts::PI * j as f64 / 20.0;
                let u0 = boundary_point(theta, da, &p);
                let res = run_attraction(u0, &p, None, &ig)?;
                worst_inc = worst_inc.max(res.max_w_increase);
                worst_limit = worst_limit.max(res.limit_error);
                worst_norm = worst_norm.max(norm(res.u_infinity));
            }
            let bound = da / (2.0 * p.gamma);
            let ok = worst_inc <= 1e-12 && worst_limit <= 1e-6 && worst_norm <= bound + 1e-6;
            pass = pass && ok;
            detail.push_str(&format!(
                "da={da}: max W-increase={worst_inc:.2e} (tol 1e-12), \
                 max limit error={worst_limit:.3e} (tol 1e-6), \
                 max |U_inf|={worst_norm:.6} vs {bound:.6}+1e-6; "
            ));
        }
        Ok((pass, detail))
    })())
}

/// Bundle of everything the full-switching criterion measures, exposed so
/// the test harness can assert its clauses in sequence.
pub struct Criterion9Data {
    pub report: SwitchingReport,
    /// Certified success radius `f r` for this start.
    pub allowed: f64,
    /// Geometric floor on the final distance for this start: the flow
    /// conserves `|u|^2`, so no trajectory from this sphere can end closer
    /// to the target than the defect-adjusted limit point.
    pub limit_floor: f64,
}

/// Execute the full-switching experiment behind criteria 9.
pub fn criterion_09_run() -> Result<Criterion9Data> {
    let p = caption_fig6()?;
    let plans = plan_switching(&p, 1.0, 200)?;
    let v = [-0.1, 0.05, 0.0];
    let u0 = [
        p.s_minus[0] + p.lambda * v[0],
        p.s_minus[1] + p.lambda * v[1],
        p.s_minus[2] + p.lambda * v[2],
    ];
    let r = p.lambda * norm(v);
    let ig = Integrator::with_tolerances(1e-12, 1e-14);
    let (report, _) = run_switching(u0, &plans, &p, None, &ig)?;
    let delta_a = psi(u0) - 1.0;
    Ok(Criterion9Data {
        allowed: p.f_factor * r,
        limit_floor: (p.gamma * p.gamma + delta_a).sqrt() - p.gamma,
        report,
    })
}

/// 9. Full switching at the certified radius. The conservation clause
/// holds; the distance clause is reported exactly as measured.
pub fn check_09() -> CriterionOutcome {
    wrap(9, "full-switching-certified-radius", (|| {
        let d = criterion_09_run()?;
        let rep = &d.report;
        let psi_ok = rep.psi_drift < 1e-8;
        let dist_ok = rep.dist_to_s_plus <= d.allowed;
        let pass = psi_ok && dist_ok;
        Ok((pass, format!(
            "dist = {:.6e} vs allowed f*r = {:.6e} (ratio {:.4}): {}; \
             psi drift = {:.3e} (tol 1e-8): {}; conserved-sphere floor on the \
             final distance = {:.6e} for this start (limit point reached to \
             {:.3e}), which already exceeds f*r — the distance clause cannot \
             close at this offset, independent of integration accuracy",
            rep.dist_to_s_plus,
            d.allowed,
            rep.dist_to_s_plus / d.allowed,
            if dist_ok { "pass" } else { "FAIL" },
            rep.psi_drift,
            if psi_ok { "pass" } else { "FAIL" },
            d.limit_floor,
            rep.predicted_limit_dist,
        )))
    })())
}

/// 10. Timing-error robustness: scaled expulsion durations still switch.
pub fn check_10() -> CriterionOutcome {
    wrap(10, "stress-robustness", (|| {
        let p = caption_fig6()?;
        let plans = plan_switching(&p, 1.0, 200)?;
        let ig = Integrator::with_tolerances(1e-12, 1e-14);
        let lo = stress_test(&plans, &p, p.s_minus, 0.98, None, &ig)?;
        let hi = stress_test(&plans, &p, p.s_minus, 1.02, None, &ig)?;
        let pass = lo.te_scaled.success && hi.te_scaled.success;
        Ok((pass, format!(
            "j=0.98: dist = {:.3e}, success = {}; j=1.02: dist = {:.3e}, success = {} \
             (zero-offset start, absolute tol 1e-6)",
            lo.te_scaled.dist_to_s_plus,
            lo.te_scaled.success,
            hi.te_scaled.dist_to_s_plus,
            hi.te_scaled.success
        )))
    })())
}

/// 11. Residual ringing after switch-off: feedforward run vs the
/// constant-current baseline at the same start.
pub fn check_11() -> CriterionOutcome {
    wrap(11, "ringing-comparison", (|| {
        let p = family(0.002, 4.0, 0.1036, 15.0, 0.0308)?;
        let u0 = [p.s_minus[0] + p.lambda, p.s_minus[1], p.s_minus[2]];
        let ig = Integrator::with_tolerances(1e-12, 1e-14);
        let plans = plan_switching(&p, 1.0, 200)?;
        let (cql, _) = run_switching(u0, &plans, &p, Some(300.0), &ig)?;
        let (bal, _) = ballistic_baseline(u0, &p, 10.0, 100.0, 300.0, &ig)?;
        let ring_cql = cql.post_ringing_u1.unwrap_or(f64::NAN);
        let ring_bal = bal.post_ringing_u1.unwrap_or(f64::NAN);
        let switched = bal.dist_to_s_plus < 0.5;
        let pass = ring_cql < ring_bal && switched;
        Ok((pass, format!(
            "feedforward ring p2p(u1) = {ring_cql:.6e} < ballistic {ring_bal:.6e}: {}; \
             ballistic end distance {:.3e} < 0.5 (did switch): {switched}",
            ring_cql < ring_bal,
            bal.dist_to_s_plus
        )))
    })())
}

/// 12. Consistency of the field formulations, the on-latitude planar
/// reduction, and the analytic deviation Jacobian.
pub fn check_12() -> CriterionOutcome {
    wrap(12, "field-consistency-chain", (|| {
        let p = MaterialParams::preset(Preset::Fig2).derive()?;
        let mut rng = SplitMix64::new(12);

        // (a) three formulations agree on the sphere.
        let mut worst_forms = 0.0f64;
        for _ in 0..1000 {
            let u = rng.unit3();
            let bt = rng.uniform(-5.0, 5.0);
            let f_lls = lls_rhs(
                u,
                [0.0, p.h2, 0.0],
                p.alpha,
                bt * p.lambda,
                [0.0, 0.0, 1.0],
                [p.d1, p.d2, p.d3],
            );
            let f_red = reduced_rhs(u, bt * p.lambda, &p);
            let f_sc = scaled_rhs(u, bt, &p);
            for i in 0..3 {
                worst_forms = worst_forms
                    .max((f_lls[i] - f_red[i]).abs())
                    .max((f_red[i] - f_sc[i]).abs())
                    .max((f_lls[i] - f_sc[i]).abs());
            }
        }

        // (b) on the working latitude the drift splits into the planar model
        // plus its displayed remainder, exactly.
        let r = (1.0 - p.k * p.k).sqrt();
        let mut worst_circle = 0.0f64;
        for _ in 0..200 {
            let th = rng.uniform(0.0, 2.0 * std::f64::consts::PI);
            let v = [r * th.cos(), r * th.sin()];
            let (f, rr) = fr_fields([v[0], v[1], -p.k], v, &p, p.k);
            let fp = f_r_planar(v, &p, p.k);
            let rem = planar_remainder(v, &p, p.k);
            let total = [
                f[0] + p.lambda * rr[0] - fp[0] - p.lambda * rem[0],
                f[1] + p.lambda * rr[1] - fp[1] - p.lambda * rem[1],
                f[2] + p.lambda * rr[2],
            ];
            for t in total {
                worst_circle = worst_circle.max(t.abs());
            }
        }

        // (c) analytic deviation Jacobian vs central differences.
        let mut worst_jac = 0.0f64;
        for _ in 0..100 {
            let xi = [
                rng.uniform(-3.0, 3.0),
                rng.uniform(-3.0, 3.0),
                rng.uniform(-3.0, 3.0),
            ];
            let j = jacobian_v(xi, &p, p.beta_e_t);
            let h = 1e-6;
            for b in 0..3 {
                let mut hi = xi;
                let mut lo = xi;
                hi[b] += h;
                lo[b] -= h;
                let vp = residual_field_v(hi, &p, p.beta_e_t);
                let vm = residual_field_v(lo, &p, p.beta_e_t);
                for a in 0..3 {
                    worst_jac = worst_jac.max((j[a][b] - (vp[a] - vm[a]) / (2.0 * h)).abs());
                }
            }
        }

        let pass = worst_forms < 1e-13 && worst_circle < 1e-13 && worst_jac < 1e-6;
        Ok((pass, format!(
            "formulation agreement max |diff| = {worst_forms:.3e} (tol 1e-13); \
             planar-reduction defect = {worst_circle:.3e} (tol 1e-13); \
             Jacobian vs differences = {worst_jac:.3e} (tol 1e-6)"
        )))
    })())
}

/// Run all twelve criteria in order.
pub fn run_all() -> Vec<CriterionOutcome> {
    vec![
        check_01(),
        check_02(),
        check_03(),
        check_04(),
        check_05(),
        check_06(),
        check_07(),
        check_08(),
        check_09(),
        check_10(),
        check_11(),
        check_12(),
    ]
}
