//! Expulsion stage: constant-current escape from the source equilibrium.
//!
//! With the current held at `beta_e` the linearization of the rescaled
//! deviation `xi = (u - s_minus) / lambda` is `xi' = L xi + f` with a
//! rank-deficient `L` satisfying `L^3 = -2 beta_e^2 L`, so the matrix
//! exponential has a three-term closed form and the driven spiral `xi'(tau)`
//! is explicit. The stage ends at the first time the spiral reaches the
//! transfer latitude `u3 = -k`, which is also explicit
//! ([`expulsion_time`]). [`lemma1_thresholds`] bounds the nonlinear
//! remainder and packages the certified smallness threshold for `lambda`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{norm, scaled_jacobian, scaled_rhs};
use crate::params::DerivedParams;
use crate::sampling::ball_samples;
use crate::{Error, Result};

/// `a * b` for 3x3 matrices.
pub fn mat3_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for (kk, bk) in b.iter().enumerate() {
                c[i][j] += a[i][kk] * bk[j];
            }
        }
    }
    c
}

/// `a * v` for a 3x3 matrix and a 3-vector.
pub fn mat3_vec(a: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2];
    }
    out
}

/// Largest entry magnitude; convenient for equivalence tests.
pub fn mat3_max_abs(a: &[[f64; 3]; 3]) -> f64 {
    a.iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Spectral (operator 2-) norm of a 3x3 matrix via the largest eigenvalue
/// of `A^T A`, computed with the trigonometric closed form for symmetric
/// 3x3 eigenvalues.
pub fn spectral_norm(a: &[[f64; 3]; 3]) -> f64 {
    // m = A^T A, symmetric positive semidefinite.
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for r in a.iter() {
                m[i][j] += r[i] * r[j];
            }
        }
    }
    let p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
    let eig_max = if p1 == 0.0 {
        m[0][0].max(m[1][1]).max(m[2][2])
    } else {
        let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
        let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = [
            [(m[0][0] - q) / p, m[0][1] / p, m[0][2] / p],
            [m[0][1] / p, (m[1][1] - q) / p, m[1][2] / p],
            [m[0][2] / p, m[1][2] / p, (m[2][2] - q) / p],
        ];
        let detb = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
            - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
            + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
        let r = (detb / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        q + 2.0 * p * phi.cos()
    };
    eig_max.max(0.0).sqrt()
}

/// Linearized expulsion system at `s_minus` for physical current `beta_e`:
/// returns `(L, f, a_bar, b_bar)` with
/// `a_bar = -d32 omega_cap - beta_e gamma`, `b_bar = d32 gamma - beta_e omega_cap`.
/// Identity: `a_bar gamma + b_bar omega_cap = -beta_e`.
pub fn expulsion_system(
    p: &DerivedParams,
    beta_e: f64,
) -> ([[f64; 3]; 3], [f64; 3], f64, f64) {
    let a_bar = -p.d32 * p.omega_cap - beta_e * p.gamma;
    let b_bar = p.d32 * p.gamma - beta_e * p.omega_cap;
    let l = [
        [0.0, 0.0, a_bar],
        [0.0, 0.0, b_bar],
        [2.0 * beta_e * p.gamma, 2.0 * beta_e * p.omega_cap, 0.0],
    ];
    let f = [0.0, 0.0, -beta_e / p.lambda];
    (l, f, a_bar, b_bar)
}

/// Closed-form `exp(L tau)` using `L^3 = -2 beta_e^2 L`:
/// `I + sin(s tau)/s L + (1 - cos(s tau))/s^2 L^2`, `s = sqrt(2) beta_e`.
pub fn expm_closed(l: &[[f64; 3]; 3], tau: f64, beta_e: f64) -> [[f64; 3]; 3] {
    let s = std::f64::consts::SQRT_2 * beta_e;
    let l2 = mat3_mul(l, l);
    let c1 = (s * tau).sin() / s;
    let c2 = (1.0 - (s * tau).cos()) / (s * s);
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (if i == j { 1.0 } else { 0.0 }) + c1 * l[i][j] + c2 * l2[i][j];
        }
    }
    out
}

/// Reference matrix exponential by scaling-and-squaring Taylor series.
/// Structure-agnostic; exists to validate [`expm_closed`].
pub fn expm_series(l: &[[f64; 3]; 3], tau: f64) -> [[f64; 3]; 3] {
    let mut a = *l;
    for row in &mut a {
        for x in row {
            *x *= tau;
        }
    }
    // Scale until the max-norm is moderate, run the series to machine
    // precision, square back. The threshold trades series length against
    // roundoff amplification in the squaring phase (a factor ~2 per level).
    let mut scale = 0u32;
    while mat3_max_abs(&a) > 2.5 {
        for row in &mut a {
            for x in row {
                *x *= 0.5;
            }
        }
        scale += 1;
    }
    let mut result = [[0.0; 3]; 3];
    let mut term = [[0.0; 3]; 3];
    for i in 0..3 {
        result[i][i] = 1.0;
        term[i][i] = 1.0;
    }
    for n in 1..=60 {
        term = mat3_mul(&term, &a);
        let inv = 1.0 / n as f64;
        for row in &mut term {
            for x in row {
                *x *= inv;
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                result[i][j] += term[i][j];
            }
        }
        if mat3_max_abs(&term) < 1e-22 * mat3_max_abs(&result).max(1.0) {
            break;
        }
    }
    for _ in 0..scale {
        result = mat3_mul(&result, &result);
    }
    result
}

/// First time the driven spiral reaches the latitude `u3 = -k`:
/// `arcsin(sqrt(2) k) / (sqrt(2) beta_e)`. Errors when the current is not
/// positive or the latitude is beyond the spiral's vertical reach.
pub fn expulsion_time(k: f64, beta_e: f64) -> Result<f64> {
    if beta_e <= 0.0 {
        return Err(Error::Expulsion(format!(
            "expulsion current must be positive, got beta_e = {beta_e}"
        )));
    }
    let arg = std::f64::consts::SQRT_2 * k;
    if !(0.0..=1.0).contains(&arg) {
        return Err(Error::Expulsion(format!(
            "target latitude unreachable: need sqrt(2) k in [0, 1], got {arg}"
        )));
    }
    Ok(arg.asin() / (std::f64::consts::SQRT_2 * beta_e))
}

/// Explicit solution of the linearized expulsion `xi' = L xi + f`, `xi(0) = 0`.
pub fn xi_prime(tau: f64, lambda: f64, beta_e: f64, a_bar: f64, b_bar: f64) -> [f64; 3] {
    let s = std::f64::consts::SQRT_2 * beta_e;
    let pref = 1.0 / (2.0 * beta_e * lambda);
    let c = (s * tau).cos();
    [
        pref * a_bar * (c - 1.0),
        pref * b_bar * (c - 1.0),
        pref * (-s * (s * tau).sin()),
    ]
}

/// Nonlinear remainder of the expulsion linearization, defined by the exact
/// decomposition `d xi/dt = L xi + f + lambda V(xi)` of the full field at
/// `u = s_minus + lambda xi` under constant rescaled current `beta_t`.
pub fn residual_field_v(xi: [f64; 3], p: &DerivedParams, beta_t: f64) -> [f64; 3] {
    let beta_e = beta_t * p.lambda;
    let (l, f, _, _) = expulsion_system(p, beta_e);
    let u = [
        p.s_minus[0] + p.lambda * xi[0],
        p.s_minus[1] + p.lambda * xi[1],
        p.s_minus[2] + p.lambda * xi[2],
    ];
    let du = scaled_rhs(u, beta_t, p);
    let lx = mat3_vec(&l, xi);
    [
        (du[0] / p.lambda - lx[0] - f[0]) / p.lambda,
        (du[1] / p.lambda - lx[1] - f[1]) / p.lambda,
        (du[2] / p.lambda - lx[2] - f[2]) / p.lambda,
    ]
}

/// Jacobian of [`residual_field_v`]: `(J_scaled(s_minus + lambda xi) - L) / lambda`.
pub fn jacobian_v(xi: [f64; 3], p: &DerivedParams, beta_t: f64) -> [[f64; 3]; 3] {
    let beta_e = beta_t * p.lambda;
    let (l, _, _, _) = expulsion_system(p, beta_e);
    let u = [
        p.s_minus[0] + p.lambda * xi[0],
        p.s_minus[1] + p.lambda * xi[1],
        p.s_minus[2] + p.lambda * xi[2],
    ];
    let j = scaled_jacobian(u, beta_t, p);
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for c in 0..3 {
            out[i][c] = (j[i][c] - l[i][c]) / p.lambda;
        }
    }
    out
}

/// Certified constants for the expulsion error bound.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Lemma1Thresholds {
    /// Radius of the `xi`-ball the linearized spiral stays in.
    pub r_star: f64,
    /// Bound (with 25% headroom) on `|V|` over the `r_star` ball.
    pub m1: f64,
    /// Bound (with 25% headroom) on the row-sum norm of `DV` over the
    /// enlarged ball of radius `r_star + rho_e`.
    pub m2: f64,
    /// Bound (with 1% headroom, floored at 1) on `|exp(L tau)|_2` over one
    /// oscillation period.
    pub m_e: f64,
    /// Largest `lambda` for which the expulsion error certificate closes.
    pub lambda_e: f64,
    pub t_e: f64,
}

/// Sample-based evaluation of the expulsion certificate constants.
///
/// `n` controls the sample-cloud size (the certified constants were frozen
/// at `n = 120_000`); `rho_e` is the tube radius around the spiral on which
/// the Gronwall bound is closed.
pub fn lemma1_thresholds(
    p: &DerivedParams,
    k: f64,
    beta_t: f64,
    rho_e: f64,
    n: usize,
) -> Result<Lemma1Thresholds> {
    let beta_e = beta_t * p.lambda;
    let t_e = expulsion_time(k, beta_e)?;
    let r_star = (1.0 / (2.0 * beta_e * p.lambda))
        * (4.0 * k * k
            + (p.d32 * p.d32 + beta_e * beta_e) * ((1.0 - 2.0 * k * k).sqrt() - 1.0).powi(2))
        .sqrt();

    let mut m1 = 0.0f64;
    for xi in ball_samples(r_star, n) {
        m1 = m1.max(norm(residual_field_v(xi, p, beta_t)));
    }
    let m1 = m1 * 1.25 / p.lambda;

    let mut m2 = 0.0f64;
    for xi in ball_samples(r_star + rho_e, n) {
        let dv = jacobian_v(xi, p, beta_t);
        for row in &dv {
            m2 = m2.max(row[0].abs() + row[1].abs() + row[2].abs());
        }
    }
    let m2 = m2 * 1.25 / p.lambda;

    let (l, _, _, _) = expulsion_system(p, beta_e);
    let period = 2.0 * std::f64::consts::PI / (std::f64::consts::SQRT_2 * beta_e);
    let mut m_e = 0.0f64;
    for i in 0..2001 {
        let tau = period * i as f64 / 2000.0;
        m_e = m_e.max(spectral_norm(&expm_closed(&l, tau, beta_e)));
    }
    let m_e = (m_e * 1.01).max(1.0);

    let lambda_e = (1.0 / (t_e * m_e)) * (rho_e / (4.0 * m1)).min(std::f64::consts::LN_2 / m2);
    Ok(Lemma1Thresholds {
        r_star,
        m1,
        m2,
        m_e,
        lambda_e,
        t_e,
    })
}

/// A-priori envelope for the deviation between the nonlinear expulsion and
/// the linearized spiral: `M_e lambda M1 tau exp(lambda M_e M2 tau)`.
pub fn gronwall_envelope(m_e: f64, m1: f64, m2: f64, lambda: f64, tau: f64) -> f64 {
    m_e * lambda * m1 * tau * (lambda * m_e * m2 * tau).exp()
}

/// Fully worked expulsion stage: linear system, closed-form endpoint, and
/// certificate constants.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpulsionPlan {
    /// Rescaled expulsion current.
    pub beta_e_t: f64,
    /// Physical expulsion current `beta_e_t * lambda`.
    pub beta_e: f64,
    /// Stage duration: first arrival at the latitude `u3 = -k`.
    pub t_e: f64,
    pub a_bar: f64,
    pub b_bar: f64,
    pub l: [[f64; 3]; 3],
    pub f: [f64; 3],
    /// Linearized deviation at the end of the stage.
    pub xi_end: [f64; 3],
    /// Predicted state at the end of the stage, `s_minus + lambda xi_end`.
    pub u_end: [f64; 3],
    pub lambda: f64,
    pub rho_e: f64,
    pub thresholds: Lemma1Thresholds,
}

impl ExpulsionPlan {
    /// Linearized spiral at stage time `tau` (measured from stage start).
    pub fn approx_xi(&self, tau: f64) -> [f64; 3] {
        xi_prime(tau, self.lambda, self.beta_e, self.a_bar, self.b_bar)
    }

    /// Predicted state on the spiral, `s_minus + lambda xi'(tau)`.
    pub fn approx_state(&self, tau: f64, p: &DerivedParams) -> [f64; 3] {
        let xi = self.approx_xi(tau);
        [
            p.s_minus[0] + self.lambda * xi[0],
            p.s_minus[1] + self.lambda * xi[1],
            p.s_minus[2] + self.lambda * xi[2],
        ]
    }
}

/// Plan the expulsion stage for the parameter set's own `beta_e_t` and
/// `k_target`. `n_samples` sizes the certificate clouds.
pub fn plan_expulsion(p: &DerivedParams, rho_e: f64, n_samples: usize) -> Result<ExpulsionPlan> {
    let beta_e = p.beta_e;
    let t_e = expulsion_time(p.k, beta_e)?;
    let (l, f, a_bar, b_bar) = expulsion_system(p, beta_e);
    let thresholds = lemma1_thresholds(p, p.k, p.beta_e_t, rho_e, n_samples)?;
    let xi_end = xi_prime(t_e, p.lambda, beta_e, a_bar, b_bar);
    let u_end = [
        p.s_minus[0] + p.lambda * xi_end[0],
        p.s_minus[1] + p.lambda * xi_end[1],
        p.s_minus[2] + p.lambda * xi_end[2],
    ];
    Ok(ExpulsionPlan {
        beta_e_t: p.beta_e_t,
        beta_e,
        t_e,
        a_bar,
        b_bar,
        l,
        f,
        xi_end,
        u_end,
        lambda: p.lambda,
        rho_e,
        thresholds,
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
    fn system_identity_holds() {
        let p = fig2();
        let (_, _, a_bar, b_bar) = expulsion_system(&p, p.beta_e);
        assert!((a_bar * p.gamma + b_bar * p.omega_cap + p.beta_e).abs() < 1e-15);
        assert!(
            (a_bar * a_bar + b_bar * b_bar - (p.d32 * p.d32 + p.beta_e * p.beta_e)).abs() < 1e-15
        );
    }

    #[test]
    fn cayley_hamilton_cubes_back() {
        let p = fig2();
        let (l, _, _, _) = expulsion_system(&p, p.beta_e);
        let l3 = mat3_mul(&mat3_mul(&l, &l), &l);
        let s2 = 2.0 * p.beta_e * p.beta_e;
        for i in 0..3 {
            for j in 0..3 {
                assert!((l3[i][j] + s2 * l[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn spiral_reaches_latitude_at_t_e() {
        let p = fig2();
        let (_, _, a_bar, b_bar) = expulsion_system(&p, p.beta_e);
        let t_e = expulsion_time(p.k, p.beta_e).unwrap();
        let xi = xi_prime(t_e, p.lambda, p.beta_e, a_bar, b_bar);
        assert!((p.lambda * xi[2] + p.k).abs() < 1e-14);
    }

    #[test]
    fn unreachable_latitude_is_an_error() {
        assert!(expulsion_time(0.8, 0.03).is_err());
        assert!(expulsion_time(0.07, 0.0).is_err());
        assert!(expulsion_time(0.07, -1.0).is_err());
    }

    #[test]
    fn spectral_norm_of_identity_and_diag() {
        let eye = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!((spectral_norm(&eye) - 1.0).abs() < 1e-12);
        let d = [[3.0, 0.0, 0.0], [0.0, -7.0, 0.0], [0.0, 0.0, 2.0]];
        assert!((spectral_norm(&d) - 7.0).abs() < 1e-12);
    }
}
