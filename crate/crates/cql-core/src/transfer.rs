//! Transfer stage: quasi-latitudinal crossing of the equator.
//!
//! On the latitude `u3 = -k` the in-plane state precesses elliptically with
//! frequency `omega = k sqrt(d32 d31)` and aspect `sigma = sqrt(d32 / d31)`,
//! perturbed by an `O(lambda)` drift. In complex coordinates diagonalizing
//! the rotation, a near-identity change of variables removes the
//! non-resonant part of the drift at first order; the change is a cubic
//! polynomial whose coefficients solve a homological equation term by term
//! ([`normal_form_coefficients`], checked by [`homological_residual`]).
//! The corrected initial coordinates ([`initial_normal_coords`]) then give a
//! closed-form trajectory prediction [`approx_transfer_solution`], from which
//! the feedforward control waveform is synthesized and the stage duration
//! [`transfer_time`] is read off. [`lemma2_thresholds`] certifies how small
//! `lambda` must be for the plan to track the true flow.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::params::DerivedParams;
use crate::sampling::halton;
use crate::{Error, Result};

/// Monomial exponents `(n1, n2)` of the cubic normal-form basis, in the
/// order the coefficient table is stored.
pub const MONOMIALS: [(u32, u32); 7] = [(2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)];

/// Coefficients of the near-identity change of variables, one row per
/// conjugate component, one column per [`MONOMIALS`] entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalFormCoefficients {
    pub c: [[Complex64; 7]; 2],
}

impl NormalFormCoefficients {
    /// Coefficient of `x1^n1 x2^n2` in component `j` (1-based, `j` in {1, 2}).
    pub fn get(&self, j: usize, nu: (u32, u32)) -> Complex64 {
        let col = MONOMIALS.iter().position(|&m| m == nu).expect("basis monomial");
        self.c[j - 1][col]
    }

    /// Evaluate component `j` at `(x1, x2)`.
    pub fn eval(&self, j: usize, x1: Complex64, x2: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (col, &(n1, n2)) in MONOMIALS.iter().enumerate() {
            acc += self.c[j - 1][col] * x1.powu(n1) * x2.powu(n2);
        }
        acc
    }

    /// Gradient `(d/dx1, d/dx2)` of component `j` at `(x1, x2)`.
    pub fn grad(&self, j: usize, x1: Complex64, x2: Complex64) -> (Complex64, Complex64) {
        let mut d1 = Complex64::new(0.0, 0.0);
        let mut d2 = Complex64::new(0.0, 0.0);
        for (col, &(n1, n2)) in MONOMIALS.iter().enumerate() {
            let c = self.c[j - 1][col];
            if n1 > 0 {
                d1 += c * n1 as f64 * x1.powu(n1 - 1) * x2.powu(n2);
            }
            if n2 > 0 {
                d2 += c * n2 as f64 * x1.powu(n1) * x2.powu(n2 - 1);
            }
        }
        (d1, d2)
    }
}

/// Closed-form solution of the first-order homological equation on the
/// latitude `u3 = -k`. Errors when the precession frequency vanishes
/// (`k = 0`), since every denominator carries a factor `omega`.
pub fn normal_form_coefficients(p: &DerivedParams, k: f64) -> Result<NormalFormCoefficients> {
    let (s, o, h, d) = (p.sigma, p.omega, p.h2_t, p.d21_t);
    if !(o > 0.0) || !(k > 0.0) {
        return Err(Error::Transfer(format!(
            "normal form needs a positive precession frequency; omega = {o}, k = {k}"
        )));
    }
    let rho = 1.0 / (1.0 - k * k);
    let i = Complex64::new(0.0, 1.0);
    let re = |x: f64| Complex64::new(x, 0.0);
    let zero = Complex64::new(0.0, 0.0);

    let c_res = re(d * k * rho * s / (2.0 * o));
    let mut c = [[zero; 7]; 2];
    // Component 1: basis order (2,0), (1,1), (0,2), (3,0), (2,1), (1,2), (0,3).
    c[0][0] = -i * h * k * rho * (s * s + 1.0) / (2.0 * s * o);
    c[0][1] = -i * h * k * rho / (s * o);
    c[0][2] = -i * h * k * rho * (s * s - 1.0) / (6.0 * s * o);
    c[0][3] = c_res;
    c[0][4] = zero;
    c[0][5] = c_res;
    c[0][6] = zero;
    // Component 2: conjugate-mirrored.
    c[1][0] = i * h * k * rho * (s * s - 1.0) / (6.0 * s * o);
    c[1][1] = i * h * k * rho / (s * o);
    c[1][2] = i * h * k * rho * (s * s + 1.0) / (2.0 * s * o);
    c[1][3] = zero;
    c[1][4] = c_res;
    c[1][5] = zero;
    c[1][6] = c_res;
    Ok(NormalFormCoefficients { c })
}

/// First-order drift in the complex diagonalizing coordinates:
/// `g_j(x1, x2)` with `w = (sigma (x1 + x2), -i x1 + i x2)`.
fn drift_in_normal_coords(
    x1: Complex64,
    x2: Complex64,
    p: &DerivedParams,
    k: f64,
) -> (Complex64, Complex64) {
    let (s, h, d) = (p.sigma, p.h2_t, p.d21_t);
    let rho = 1.0 / (1.0 - k * k);
    let i = Complex64::new(0.0, 1.0);
    let w1 = s * (x1 + x2);
    let w2 = -i * x1 + i * x2;
    let f1 = -rho * k * w2 * (h * w2 + d * w1 * w1);
    let f2 = rho * k * w1 * (h * w2 - d * w2 * w2);
    ((f1 / s + i * f2) / 2.0, (f1 / s - i * f2) / 2.0)
}

/// Worst-case defect of the homological equation over the probe points:
/// `max_j max_x |i omega (x1 dC_j/dx1 - x2 dC_j/dx2 -(+) C_j) - g_j(x)|`.
/// Vanishes (to roundoff) for the correct coefficient table.
pub fn homological_residual(
    coeffs: &NormalFormCoefficients,
    p: &DerivedParams,
    k: f64,
    pts: &[(Complex64, Complex64)],
) -> f64 {
    let i = Complex64::new(0.0, 1.0);
    let mut worst = 0.0f64;
    for &(x1, x2) in pts {
        let (g1, g2) = drift_in_normal_coords(x1, x2, p, k);
        for (j, gj, sgn) in [(1usize, g1, 1.0), (2usize, g2, -1.0)] {
            let cv = coeffs.eval(j, x1, x2);
            let (d1, d2) = coeffs.grad(j, x1, x2);
            let res = i * p.omega * (x1 * d1 - x2 * d2 - sgn * cv) - gj;
            worst = worst.max(res.norm());
        }
    }
    worst
}

/// Complex normal coordinates of an in-plane starting point, corrected to
/// first order by the near-identity change of variables.
pub fn normal_coords_full(
    w0: [f64; 2],
    coeffs: &NormalFormCoefficients,
    p: &DerivedParams,
    lambda: f64,
) -> (Complex64, Complex64) {
    let s = p.sigma;
    let x0_1 = Complex64::new(w0[0] / (2.0 * s), w0[1] / 2.0);
    let x0_2 = Complex64::new(w0[0] / (2.0 * s), -w0[1] / 2.0);
    let c1 = coeffs.eval(1, x0_1, x0_2);
    let c2 = coeffs.eval(2, x0_1, x0_2);
    (x0_1 - lambda * c1, x0_2 - lambda * c2)
}

/// Real and imaginary parts `(X_a, X_b)` of the first corrected normal
/// coordinate; the second is its conjugate.
pub fn initial_normal_coords(
    w0: [f64; 2],
    coeffs: &NormalFormCoefficients,
    p: &DerivedParams,
    lambda: f64,
) -> (f64, f64) {
    let (x1, _) = normal_coords_full(w0, coeffs, p, lambda);
    (x1.re, x1.im)
}

/// Closed-form first-order transfer trajectory `w(t)` from the corrected
/// normal coordinates `(x_a, x_b)`.
pub fn approx_transfer_solution(
    t: f64,
    x_a: f64,
    x_b: f64,
    p: &DerivedParams,
    k: f64,
    lambda: f64,
) -> [f64; 2] {
    approx_transfer_with_rate(t, x_a, x_b, p, k, lambda).0
}

/// Same as [`approx_transfer_solution`], also returning the exact time
/// derivative of the closed form (used by residual checks).
pub fn approx_transfer_with_rate(
    t: f64,
    x_a: f64,
    x_b: f64,
    p: &DerivedParams,
    k: f64,
    lambda: f64,
) -> ([f64; 2], [f64; 2]) {
    let (s, o, h, d) = (p.sigma, p.omega, p.h2_t, p.d21_t);
    let rho = 1.0 / (1.0 - k * k);
    let (c1, s1) = ((o * t).cos(), (o * t).sin());
    let (c2, s2) = ((2.0 * o * t).cos(), (2.0 * o * t).sin());
    let (c3, s3) = ((3.0 * o * t).cos(), (3.0 * o * t).sin());
    let r2 = x_a * x_a + x_b * x_b;
    let cub_a = x_a * (3.0 * x_b * x_b - x_a * x_a);
    let cub_b = x_b * (x_b * x_b - 3.0 * x_a * x_a);
    let lead = lambda / o * k * rho;

    let base1 = x_a * c1 - x_b * s1;
    let base2 = x_b * c1 + x_a * s1;
    let w1 = 2.0 * s * base1
        + lead
            * (d * s * s * r2 * base1
                + (2.0 / 3.0) * h * (s * s + 2.0) * (2.0 * x_a * x_b * c2 - (x_b * x_b - x_a * x_a) * s2)
                - d * s * s * (cub_a * c3 - cub_b * s3));
    let w2 = 2.0 * base2
        + lead
            * (-d * s * r2 * base2
                + (2.0 / 3.0) * h * (2.0 * s * s + 1.0) / s
                    * ((x_b * x_b - x_a * x_a) * c2 + 2.0 * x_a * x_b * s2)
                - d * s * (cub_b * c3 + cub_a * s3)
                - 2.0 * h * r2 / s);

    // d/dt of every harmonic: cos(n o t) -> -n o sin, sin(n o t) -> n o cos.
    let dbase1 = o * (-x_a * s1 - x_b * c1);
    let dbase2 = o * (-x_b * s1 + x_a * c1);
    let dw1 = 2.0 * s * dbase1
        + lead
            * (d * s * s * r2 * dbase1
                + (2.0 / 3.0) * h * (s * s + 2.0)
                    * (2.0 * o) * (-2.0 * x_a * x_b * s2 - (x_b * x_b - x_a * x_a) * c2)
                - d * s * s * (3.0 * o) * (-cub_a * s3 - cub_b * c3));
    let dw2 = 2.0 * dbase2
        + lead
            * (-d * s * r2 * dbase2
                + (2.0 / 3.0) * h * (2.0 * s * s + 1.0) / s
                    * (2.0 * o) * (-(x_b * x_b - x_a * x_a) * s2 + 2.0 * x_a * x_b * c2)
                - d * s * (3.0 * o) * (-cub_b * s3 + cub_a * c3));

    ([w1, w2], [dw1, dw2])
}

/// Stage duration and the harmonic parameters of the leading-order plan.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TransferTiming {
    /// Time for the leading-order plan to reach `w1 = |A_m| - k^2`.
    pub t_tr: f64,
    /// Signed amplitude `w0_1 sqrt(1 + (sigma w0_2 / w0_1)^2)` (negative).
    pub a_m: f64,
    /// Phase of the leading-order cosine.
    pub phi: f64,
    /// Diagnostic: `k^2 < |w0_1| / 10`, i.e. the endpoint offset is small
    /// relative to the starting amplitude.
    pub k_sq_small: bool,
}

/// Solve `A_m cos(omega t + phi) = -A_m - k^2` for the first positive root
/// and verify the leading-order plan does not cross the target early.
pub fn transfer_time(w0: [f64; 2], p: &DerivedParams, k: f64) -> Result<TransferTiming> {
    if w0[0] >= 0.0 {
        return Err(Error::Transfer(format!(
            "invalid start: transfer must begin in the w1 < 0 half-plane, got w1 = {}",
            w0[0]
        )));
    }
    let (s, o) = (p.sigma, p.omega);
    if !(o > 0.0) {
        return Err(Error::Transfer("precession frequency vanishes (k = 0)".into()));
    }
    let a_m = w0[0] * (1.0 + (s * w0[1] / w0[0]).powi(2)).sqrt();
    let phi = (s * w0[1] / w0[0]).atan();
    let arg = -1.0 - k * k / a_m;
    if !(-1.0..=1.0).contains(&arg) {
        return Err(Error::Transfer(format!(
            "target overshoot: endpoint offset k^2 = {} exceeds the plan amplitude 2|A_m| = {}",
            k * k,
            2.0 * a_m.abs()
        )));
    }
    let t_tr = (arg.acos() - phi) / o;
    if !(t_tr > 0.0) {
        return Err(Error::Transfer(format!(
            "nonpositive transfer time t_tr = {t_tr}"
        )));
    }
    // First-crossing guard: the leading-order w1 must stay below the target
    // until the nominal time.
    let target = -a_m - k * k;
    let mut prev_sign = (a_m * phi.cos() - target).signum();
    for i in 1..2000 {
        let t = t_tr * 0.999 * i as f64 / 1999.0;
        let g = a_m * (o * t + phi).cos() - target;
        if g.signum() != prev_sign && g != 0.0 {
            return Err(Error::Transfer(format!(
                "plan crosses the target radius before the nominal time (near t = {t})"
            )));
        }
        prev_sign = g.signum();
    }
    Ok(TransferTiming {
        t_tr,
        a_m,
        phi,
        k_sq_small: k * k < w0[0].abs() / 10.0,
    })
}

/// Certified constants for the transfer tracking bound.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Lemma2Thresholds {
    /// Bound (with 25% headroom, plus 1) on the row-sum norm of the drift
    /// Jacobian along the plan.
    pub m_tr: f64,
    /// Bound (plus 1) on the plan magnitude.
    pub k_w: f64,
    /// Largest `lambda` for which the transfer tracking certificate closes.
    pub lambda_tr: f64,
    /// Contraction factor of the certified radius map.
    pub theta: f64,
}

/// Sample-based evaluation of the transfer certificate constants along the
/// closed-form plan `w(t)` on `[0, t_tr]`.
pub fn lemma2_thresholds(
    p: &DerivedParams,
    k: f64,
    x_a: f64,
    x_b: f64,
    t_tr: f64,
    lambda: f64,
) -> Lemma2Thresholds {
    // Probe cloud: scaled Halton cube filtered to the ball of radius 2.
    let pts: Vec<[f64; 3]> = halton(3000, 3, 20)
        .into_iter()
        .map(|r| [2.0 * (2.0 * r[0] - 1.0), 2.0 * (2.0 * r[1] - 1.0), 2.0 * (2.0 * r[2] - 1.0)])
        .filter(|u| (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt() <= 2.0)
        .collect();

    let mut m_tr = 0.0f64;
    for it in 0..24 {
        let t = t_tr * it as f64 / 23.0;
        let w = approx_transfer_solution(t, x_a, x_b, p, k, lambda);
        let rho_v = 1.0 / (w[0] * w[0] + w[1] * w[1]);
        let b0 = crate::dynamics::beta0_hat(w, p, k, rho_v);
        for u in &pts {
            // Rows of the Jacobian of the order-lambda drift F(u; w) in u.
            let r1 = (u[2] * b0 + p.alpha_t * p.d31 * u[2] * u[2]).abs()
                + (p.h2_t + u[0] * b0 + 2.0 * p.alpha_t * p.d31 * u[0] * u[2]).abs();
            let r2 = (u[2] * b0 + p.alpha_t * p.d32 * u[2] * u[2]).abs()
                + (2.0 * p.alpha_t * p.d32 * u[1] * u[2] + u[1] * b0).abs();
            m_tr = m_tr.max(r1).max(r2);
        }
    }
    let m_tr = 1.0 + 1.25 * m_tr;

    let mut k_w = 0.0f64;
    for it in 0..400 {
        let t = t_tr * it as f64 / 399.0;
        let w = approx_transfer_solution(t, x_a, x_b, p, k, lambda);
        k_w = k_w.max((w[0] * w[0] + w[1] * w[1]).sqrt());
    }
    let k_w = 1.0 + k_w;

    let lambda_tr = p.omega * p.omega / (4.0 * std::f64::consts::PI.powi(2) * k_w * m_tr);
    let theta = 0.5
        * (4.0 * std::f64::consts::PI * m_tr * lambda / p.omega
            + p.omega / (std::f64::consts::PI * k_w));
    Lemma2Thresholds {
        m_tr,
        k_w,
        lambda_tr,
        theta,
    }
}

/// Certified shrink of the tube radius across one transfer pass:
/// an entry tube of radius `rho_plus` exits with radius at most
/// `theta rho_plus / (4 (1 + theta))`.
pub fn rho_tr_minus(rho_plus: f64, theta: f64) -> f64 {
    theta * rho_plus / (4.0 * (1.0 + theta))
}

/// Fully worked transfer stage.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransferPlan {
    pub k: f64,
    pub omega: f64,
    pub sigma: f64,
    pub rho: f64,
    pub lambda: f64,
    /// In-plane starting point (the expulsion endpoint).
    pub w0: [f64; 2],
    /// Corrected normal coordinates of `w0`.
    pub x_a: f64,
    pub x_b: f64,
    pub a_m: f64,
    pub phi: f64,
    pub t_tr: f64,
    pub k_sq_small: bool,
    pub coeffs: NormalFormCoefficients,
    pub thresholds: Lemma2Thresholds,
    /// Canonical entry tube radius `k / (8 lambda)`.
    pub rho_plus: f64,
    /// Certified exit tube radius for `rho_plus`.
    pub rho_tr_minus: f64,
}

impl TransferPlan {
    /// Closed-form planned in-plane state at stage time `t`.
    pub fn plan_state(&self, t: f64, p: &DerivedParams) -> [f64; 2] {
        approx_transfer_solution(t, self.x_a, self.x_b, p, self.k, self.lambda)
    }
}

/// Plan the transfer stage from in-plane start `w0` at the parameter set's
/// own target latitude.
pub fn plan_transfer(w0: [f64; 2], p: &DerivedParams) -> Result<TransferPlan> {
    let k = p.k;
    let coeffs = normal_form_coefficients(p, k)?;
    let (x_a, x_b) = initial_normal_coords(w0, &coeffs, p, p.lambda);
    let timing = transfer_time(w0, p, k)?;
    let thresholds = lemma2_thresholds(p, k, x_a, x_b, timing.t_tr, p.lambda);
    let rho_plus = k / (8.0 * p.lambda);
    Ok(TransferPlan {
        k,
        omega: p.omega,
        sigma: p.sigma,
        rho: p.rho,
        lambda: p.lambda,
        w0,
        x_a,
        x_b,
        a_m: timing.a_m,
        phi: timing.phi,
        t_tr: timing.t_tr,
        k_sq_small: timing.k_sq_small,
        coeffs,
        thresholds,
        rho_plus,
        rho_tr_minus: rho_tr_minus(rho_plus, thresholds.theta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{MaterialParams, Preset};

    fn fig2() -> DerivedParams {
        MaterialParams::preset(Preset::Fig2).derive().unwrap()
    }

    #[test]
    fn coefficients_conjugate_mirror() {
        let p = fig2();
        let c = normal_form_coefficients(&p, p.k).unwrap();
        // Component 2 at (n2, n1) is the conjugate of component 1 at (n1, n2).
        for &(n1, n2) in MONOMIALS.iter() {
            let a = c.get(1, (n1, n2));
            let b = c.get(2, (n2, n1));
            assert!((a.conj() - b).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_latitude_is_rejected() {
        let mut mp = MaterialParams::preset(Preset::Fig2);
        mp.k_target = 0.0;
        let p = mp.derive().unwrap();
        assert!(normal_form_coefficients(&p, p.k).is_err());
    }

    #[test]
    fn normal_coords_are_conjugate_pair() {
        let p = fig2();
        let c = normal_form_coefficients(&p, p.k).unwrap();
        let (x1, x2) = normal_coords_full([-0.9, -0.1], &c, &p, p.lambda);
        assert!((x1.conj() - x2).norm() < 1e-12);
    }

    #[test]
    fn closed_form_rate_matches_finite_difference() {
        let p = fig2();
        let c = normal_form_coefficients(&p, p.k).unwrap();
        let (xa, xb) = initial_normal_coords([-0.9, -0.1], &c, &p, p.lambda);
        let h = 1e-6;
        for i in 0..20 {
            let t = 2.7 * i as f64;
            let (_, dw) = approx_transfer_with_rate(t, xa, xb, &p, p.k, p.lambda);
            let wp = approx_transfer_solution(t + h, xa, xb, &p, p.k, p.lambda);
            let wm = approx_transfer_solution(t - h, xa, xb, &p, p.k, p.lambda);
            for j in 0..2 {
                let fd = (wp[j] - wm[j]) / (2.0 * h);
                assert!((dw[j] - fd).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn transfer_time_rejects_bad_starts() {
        let p = fig2();
        assert!(transfer_time([0.5, -0.1], &p, p.k).is_err());
        // Tiny amplitude vs k^2 offset: overshoot.
        assert!(transfer_time([-1e-4, 0.0], &p, 0.07).is_err());
    }
}
