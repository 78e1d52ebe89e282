//! Attraction stage: free relaxation into the target equilibrium.
//!
//! Once the transfer deposits the state near the `u1 > 0` equilibrium the
//! current is switched off and the damped precession takes over. In
//! coordinates translated by the target equilibrium, the quadratic form
//! `W = (d21 U2^2 + d31 U3^2) / 2` is conserved by the undamped part of the
//! field and strictly dissipated by the damping, so its sublevel sets trap
//! trajectories. [`basin_spec`] sizes the certified trapping region,
//! [`run_attraction`] executes and audits a relaxation run, and
//! [`select_theorem_params`] runs the end-to-end constant recipe that
//! produces an admissible parameter set from the scale separation alone.

use serde::{Deserialize, Serialize};

use crate::dynamics::reduced_rhs;
use crate::expulsion::{expulsion_system, expulsion_time, lemma1_thresholds, xi_prime};
use crate::integrate::Integrator;
use crate::params::{DerivedParams, MaterialParams};
use crate::sampling::SplitMix64;
use crate::transfer::{
    initial_normal_coords, lemma2_thresholds, normal_form_coefficients, transfer_time,
};
use crate::{Error, Result};

/// Free (current-off) field in coordinates translated by the target
/// equilibrium: `U' = reduced_rhs(U + s_plus)` with zero applied current.
pub fn attraction_rhs(u: [f64; 3], p: &DerivedParams) -> [f64; 3] {
    reduced_rhs(
        [
            u[0] + p.s_plus[0],
            u[1] + p.s_plus[1],
            u[2] + p.s_plus[2],
        ],
        0.0,
        p,
    )
}

/// Undamped part of the translated field. `W` is constant along this field,
/// which is what makes it a Lyapunov candidate for the damped flow.
pub fn g1(u: [f64; 3], p: &DerivedParams) -> [f64; 3] {
    [
        p.d31 * u[2] * (u[1] - p.omega_cap) - p.d21 * u[1] * u[2],
        -p.d31 * u[2] * (p.gamma + u[0]),
        p.d21 * u[1] * (p.gamma + u[0]),
    ]
}

/// Trapping Lyapunov function `W(U) = (d21 U2^2 + d31 U3^2) / 2`.
pub fn lyapunov_w(u2: f64, u3: f64, p: &DerivedParams) -> f64 {
    0.5 * (p.d21 * u2 * u2 + p.d31 * u3 * u3)
}

/// Geometry of the certified attraction basin.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BasinSpec {
    /// Largest certified `W` sublevel: `W <= w_star` traps.
    pub w_star: f64,
    /// Radius of the in-plane disk contained in the `w_star` sublevel.
    pub r_sm: f64,
    /// Largest sphere-defect magnitude the limit formula covers.
    pub delta_a_max: f64,
    /// Cap on the axial offset `|U1|` inside the basin.
    pub u1_cap: f64,
}

/// Size the certified basin from the anisotropy gaps alone.
pub fn basin_spec(p: &DerivedParams) -> BasinSpec {
    let w_star = (p.d21 * p.gamma).powi(2) / (32.0 * p.d31 * p.omega_cap.powi(2));
    BasinSpec {
        w_star,
        r_sm: p.gamma * p.d21 / (4.0 * p.omega_cap.abs() * p.d31),
        delta_a_max: (p.gamma / 4.0).powi(2),
        u1_cap: p.gamma / 4.0,
    }
}

/// Membership test for the certified basin at sphere defect `delta_a`:
/// small axial offset, trapped `W`, and the right invariant sphere.
pub fn basin_contains(u: [f64; 3], p: &DerivedParams, delta_a: f64) -> Result<bool> {
    let spec = basin_spec(p);
    if delta_a.abs() > spec.delta_a_max {
        return Err(Error::Attraction(format!(
            "sphere defect {delta_a} outside certified range +-{}",
            spec.delta_a_max
        )));
    }
    let abs = [
        u[0] + p.s_plus[0],
        u[1] + p.s_plus[1],
        u[2] + p.s_plus[2],
    ];
    let psi = abs[0] * abs[0] + abs[1] * abs[1] + abs[2] * abs[2];
    Ok(u[0].abs() <= spec.u1_cap
        && lyapunov_w(u[1], u[2], p) <= spec.w_star
        && (psi - (1.0 + delta_a)).abs() < 1e-9)
}

/// Limit point of the relaxation on the sphere of defect `delta_a`,
/// in translated coordinates: `(-gamma + sqrt(gamma^2 + delta_a), 0, 0)`.
/// Its norm is at most `delta_a / (2 gamma)`.
pub fn predicted_limit(delta_a: f64, p: &DerivedParams) -> [f64; 3] {
    [-p.gamma + (p.gamma * p.gamma + delta_a).sqrt(), 0.0, 0.0]
}

/// Point on the `W = w_star` boundary at angle `theta`, lifted onto the
/// sphere of defect `delta_a` (translated coordinates).
pub fn boundary_point(theta: f64, delta_a: f64, p: &DerivedParams) -> [f64; 3] {
    let spec = basin_spec(p);
    let u2 = (2.0 * spec.w_star / p.d21).sqrt() * theta.cos();
    let u3 = (2.0 * spec.w_star / p.d31).sqrt() * theta.sin();
    let u1 = -p.gamma
        + (1.0 + delta_a - (u2 - p.omega_cap).powi(2) - u3 * u3).sqrt();
    [u1, u2, u3]
}

/// Audited outcome of a relaxation run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttractionResult {
    /// Final translated state.
    pub u_infinity: [f64; 3],
    /// Whether the field norm dropped below 1e-9 and stayed there.
    pub converged: bool,
    /// First monitored time with the field norm below 1e-9 for three
    /// consecutive accepted nodes.
    pub t_converged: Option<f64>,
    /// Lyapunov samples `(t, W)` at accepted integrator nodes.
    pub w_series: Vec<(f64, f64)>,
    /// Largest increase of `W` between consecutive nodes (should be <= 0
    /// up to roundoff).
    pub max_w_increase: f64,
    /// Distance from the final state to the predicted limit.
    pub limit_error: f64,
    /// Whether the starting point satisfied the certified membership test
    /// (`None` when the sphere defect is outside the certified range and
    /// the test does not apply).
    pub within_lemma_range: Option<bool>,
}

/// Integrate the free relaxation from translated IC `u0` and audit it:
/// `W` must be nonincreasing along accepted nodes, and the run converges
/// when the field norm stays below 1e-9 for three consecutive nodes.
pub fn run_attraction(
    u0: [f64; 3],
    p: &DerivedParams,
    t_max: Option<f64>,
    integ: &Integrator,
) -> Result<AttractionResult> {
    let t_max = t_max.unwrap_or(50.0 / (p.alpha_t * p.lambda));
    let abs0 = [
        u0[0] + p.s_plus[0],
        u0[1] + p.s_plus[1],
        u0[2] + p.s_plus[2],
    ];
    let delta_a = abs0[0] * abs0[0] + abs0[1] * abs0[1] + abs0[2] * abs0[2] - 1.0;
    let spec = basin_spec(p);
    let within_lemma_range = if delta_a.abs() <= spec.delta_a_max {
        Some(basin_contains(u0, p, delta_a)?)
    } else {
        None
    };

    let mut w_series: Vec<(f64, f64)> = vec![(0.0, lyapunov_w(u0[1], u0[2], p))];
    let mut max_w_increase = f64::NEG_INFINITY;
    let mut prev_w = w_series[0].1;
    let mut quiet_run = 0u32;
    let mut quiet_start: Option<f64> = None;
    let mut t_converged: Option<f64> = None;

    let traj = integ.integrate_monitored(
        |_, u| attraction_rhs(u, p),
        0.0,
        t_max,
        u0,
        |t, u| {
            let w = lyapunov_w(u[1], u[2], p);
            max_w_increase = max_w_increase.max(w - prev_w);
            prev_w = w;
            w_series.push((t, w));
            let f = attraction_rhs(u, p);
            let fnorm = (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt();
            if fnorm < 1e-9 {
                if quiet_run == 0 {
                    quiet_start = Some(t);
                }
                quiet_run += 1;
            } else {
                quiet_run = 0;
                quiet_start = None;
            }
            if quiet_run >= 3 && t_converged.is_none() {
                t_converged = quiet_start;
            }
            quiet_run >= 3
        },
    )?;

    if max_w_increase > 1e-12 {
        return Err(Error::Attraction(format!(
            "Lyapunov function increased by {max_w_increase:.3e} between accepted nodes"
        )));
    }

    let u_inf = traj.final_state();
    let pred = predicted_limit(delta_a, p);
    let limit_error = ((u_inf[0] - pred[0]).powi(2)
        + (u_inf[1] - pred[1]).powi(2)
        + (u_inf[2] - pred[2]).powi(2))
    .sqrt();
    Ok(AttractionResult {
        u_infinity: u_inf,
        converged: t_converged.is_some(),
        t_converged,
        w_series,
        max_w_increase: if max_w_increase.is_finite() {
            max_w_increase
        } else {
            0.0
        },
        limit_error,
        within_lemma_range,
    })
}

/// Monte-Carlo lower bound on the dissipation-rate bracket that controls
/// `dW/dt <= -c W` inside the basin: positive means strict decay.
pub fn rate_bracket_min(p: &DerivedParams, n: usize, seed: u64) -> f64 {
    let eps0 = p.d21 * p.gamma / (4.0 * p.omega_cap);
    let mu0 = p.gamma / 4.0;
    let g = p.gamma;
    let mut rng = SplitMix64::new(seed);
    let mut min = f64::INFINITY;
    for _ in 0..n {
        let x = rng.next_f64();
        let th = rng.uniform(0.0, 2.0 * std::f64::consts::PI);
        let (s2, c2) = (th.sin().powi(2), th.cos().powi(2));
        let br = 1.0
            + 2.0 * mu0 * x * (s2 + c2 / g)
            + (mu0 * x).powi(2) * (s2 + c2 / (g * g))
            - 2.0 * p.omega_cap * eps0 / g * (1.0 / p.d21 - 1.0 / p.d31) * th.cos() * s2
            + eps0 * eps0 / (g * g) * (p.d31 - p.d21).powi(2) / (p.d21 * p.d31).powi(2)
                * s2
                * c2;
        min = min.min(br);
    }
    min
}

/// Output of the end-to-end parameter recipe.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TheoremParams {
    /// Material parameters produced by the recipe (with the recipe's
    /// working latitude installed as the target).
    pub material: MaterialParams,
    /// Recipe anisotropy gap `d2 - d1 = 6.51 lambda`.
    pub d21: f64,
    /// Recipe field strength: `Omega^2 = (52/75)(d21/d31)`.
    pub omega_cap: f64,
    /// Recipe working latitude `K_bar = (gamma/4) sqrt(d21/d31)`.
    pub k_bar: f64,
    /// Per-scale applied field `h2 / lambda`.
    pub h2_t: f64,
    /// Success-radius conversion factor `1 / (2 gamma)`.
    pub f_factor: f64,
    /// Entry radius certified by the chained stage constants.
    pub r_minus: f64,
    /// Expulsion spiral duration under the recipe plan.
    pub t_e: f64,
    /// Transfer duration under the recipe plan.
    pub t_tr: f64,
    /// In-plane transfer start under the recipe plan.
    pub w0: [f64; 2],
    /// Certified stage constants used by the chain.
    pub m_e: f64,
    pub theta: f64,
    /// Consistency flag: the recipe's own compatibility ratio
    /// `50 K^2 d31 / (3 gamma^2 d21)` equals 25/24, slightly above the
    /// unit-ratio form in which the constraint is usually quoted; kept as
    /// a diagnostic rather than an error.
    pub compat_ok: bool,
    pub compat_ratio: f64,
}

/// Construct an admissible parameter set from the outer anisotropies and
/// the scale separation alone, then chain the stage certificates to size
/// the certified entry radius `r_minus`.
pub fn select_theorem_params(d1: f64, d3: f64, lambda: f64) -> Result<TheoremParams> {
    if !(d1 > 0.0 && d3 > d1 && lambda > 0.0) {
        return Err(Error::InvalidParams(format!(
            "recipe needs 0 < d1 < d3 and lambda > 0; got d1={d1}, d3={d3}, lambda={lambda}"
        )));
    }
    let d21 = 6.51 * lambda;
    let d31 = d3 - d1;
    let om2 = (52.0 / 75.0) * (d21 / d31);
    if om2 >= 1.0 {
        return Err(Error::InvalidParams(format!(
            "recipe field strength Omega^2 = {om2} >= 1; lambda too large for this gap"
        )));
    }
    let omega_cap = om2.sqrt();
    let gamma = (1.0 - om2).sqrt();
    let k_bar = (gamma / 4.0) * (d21 / d31).sqrt();
    let compat_ratio = 50.0 * k_bar * k_bar * d31 / (3.0 * gamma * gamma * d21);
    let compat_ok = (compat_ratio - 25.0 / 24.0).abs() < 1e-12;

    let material = MaterialParams::new(d1, d1 + d21, d3, 2.0, lambda, omega_cap, 3.0, k_bar)?;
    let p = material.derive()?;

    // Chain the stage certificates along the recipe's own nominal plan.
    let t_e = expulsion_time(k_bar, p.beta_e)?;
    let l1 = lemma1_thresholds(&p, k_bar, p.beta_e_t, 1.0, 40_000)?;
    let (_, _, a_bar, b_bar) = expulsion_system(&p, p.beta_e);
    let xi_end = xi_prime(t_e, lambda, p.beta_e, a_bar, b_bar);
    let w0 = [
        p.s_minus[0] + lambda * xi_end[0],
        p.s_minus[1] + lambda * xi_end[1],
    ];
    let coeffs = normal_form_coefficients(&p, k_bar)?;
    let (x_a, x_b) = initial_normal_coords(w0, &coeffs, &p, lambda);
    let timing = transfer_time(w0, &p, k_bar)?;
    let l2 = lemma2_thresholds(&p, k_bar, x_a, x_b, timing.t_tr, lambda);
    let theta = l2.theta;
    let r_minus = theta * k_bar / (128.0 * l1.m_e * (1.0 + theta));

    Ok(TheoremParams {
        material,
        d21,
        omega_cap,
        k_bar,
        h2_t: -6.51 * omega_cap,
        f_factor: 1.0 / (2.0 * gamma),
        r_minus,
        t_e,
        t_tr: timing.t_tr,
        w0,
        m_e: l1.m_e,
        theta,
        compat_ok,
        compat_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Preset;

    fn fig4() -> DerivedParams {
        MaterialParams::preset(Preset::Fig4).derive().unwrap()
    }

    #[test]
    fn undamped_field_matches_zero_damping_translated_flow() {
        // At alpha = 0 the translated reduced field is exactly g1.
        let mut mp = MaterialParams::preset(Preset::Fig4);
        mp.alpha_t = 1e-300; // derive() requires alpha_t > 0; effectively zero
        let p = mp.derive().unwrap();
        let mut rng = SplitMix64::new(42);
        for _ in 0..200 {
            let u = [
                rng.uniform(-0.3, 0.3),
                rng.uniform(-0.3, 0.3),
                rng.uniform(-0.3, 0.3),
            ];
            let f = attraction_rhs(u, &p);
            let g = g1(u, &p);
            for i in 0..3 {
                assert!((f[i] - g[i]).abs() < 1e-12, "component {i}");
            }
        }
    }

    #[test]
    fn lyapunov_is_conserved_by_undamped_field() {
        let p = fig4();
        let mut rng = SplitMix64::new(7);
        for _ in 0..200 {
            let u = [
                rng.uniform(-0.5, 0.5),
                rng.uniform(-0.5, 0.5),
                rng.uniform(-0.5, 0.5),
            ];
            let f = g1(u, &p);
            let w_rate = p.d21 * u[1] * f[1] + p.d31 * u[2] * f[2];
            assert!(w_rate.abs() < 1e-15);
        }
    }

    #[test]
    fn basin_disk_sits_inside_trapping_level() {
        let p = fig4();
        let spec = basin_spec(&p);
        assert!((spec.w_star - 1.75999399e-3).abs() / spec.w_star < 1e-6);
        assert!((spec.r_sm - 0.065857).abs() < 1e-5);
        let mut wmax = 0.0f64;
        for i in 0..10_000 {
            let t = 2.0 * std::f64::consts::PI * i as f64 / 9999.0;
            wmax = wmax.max(lyapunov_w(spec.r_sm * t.cos(), spec.r_sm * t.sin(), &p));
        }
        assert!(wmax <= spec.w_star + 1e-18);
    }

    #[test]
    fn boundary_points_have_trapping_energy_and_right_sphere() {
        let p = fig4();
        let spec = basin_spec(&p);
        for da in [0.0, 0.02] {
            for j in 0..20 {
                let th = 2.0 * std::f64::consts::PI * j as f64 / 20.0;
                let u = boundary_point(th, da, &p);
                let w = lyapunov_w(u[1], u[2], &p);
                assert!((w - spec.w_star).abs() < 1e-15 * (1.0 + spec.w_star));
                let abs = [
                    u[0] + p.s_plus[0],
                    u[1] + p.s_plus[1],
                    u[2] + p.s_plus[2],
                ];
                let psi = abs[0] * abs[0] + abs[1] * abs[1] + abs[2] * abs[2];
                assert!((psi - (1.0 + da)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rate_bracket_stays_positive() {
        let p = fig4();
        let min = rate_bracket_min(&p, 10_000, 1234);
        assert!(min > 0.95, "bracket min {min}");
    }

    #[test]
    fn recipe_reproduces_reference_constants() {
        let tp = select_theorem_params(0.0411, 0.8527, 0.006006).unwrap();
        assert!((tp.omega_cap - 0.18276085).abs() < 1e-7);
        assert!((tp.k_bar - 0.05394798).abs() < 1e-7);
        assert!((tp.h2_t - (-0.007145778 / 0.006006)).abs() < 1e-6);
        assert!((tp.f_factor - 0.50856557).abs() < 1e-7);
        assert!((tp.compat_ratio - 25.0 / 24.0).abs() < 1e-12);
        assert!(tp.compat_ok);
        assert!((tp.t_e - 2.99702828).abs() < 1e-7);
    }

    #[test]
    fn recipe_rejects_oversized_scale() {
        // Omega^2 >= 1 when the gap d31 is too small for the separation.
        assert!(select_theorem_params(0.0411, 0.05, 0.01).is_err());
    }
}
