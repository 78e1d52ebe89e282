//! Vector fields of the macrospin system, in three equivalent dress codes,
//! plus the latitude-holding feedback law and its planar reductions.
//!
//! * [`lls_rhs`] — general damped precession with spin-transfer torque, for
//!   arbitrary diagonal anisotropy, applied field and polarization axis.
//! * [`reduced_rhs`] — the biaxial special case (field along `e2`,
//!   polarization along `e3`) written with cross products; exactly tangent to
//!   every sphere `|u| = const` for any control value.
//! * [`scaled_rhs`] — the same field regrouped as `A(u3) u + lambda * N(u)`,
//!   separating the fast hard-axis rotation from the slow `O(lambda)` drift.
//!   Agrees with [`reduced_rhs`] on the unit sphere.
//!
//! The transfer-stage control [`beta_lat`] cancels the third component of the
//! field on the latitude `u3 = -k`; [`fr_fields`] exposes the resulting slow
//! drift split into its `O(lambda)` and `O(lambda^2)` parts, and the
//! `planar_*` functions restrict that drift to the latitude plane.

use crate::params::DerivedParams;
use crate::{Error, Result};

/// Cross product.
#[inline]
pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Dot product.
#[inline]
pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Euclidean norm.
#[inline]
pub fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Squared magnetization length `u1^2 + u2^2 + u3^2`; conserved by the flow.
#[inline]
pub fn psi(u: [f64; 3]) -> f64 {
    dot(u, u)
}

/// General macrospin field: damped precession around the effective field
/// `h_eff = -diag ∘ m + h_a` plus a spin-transfer torque of strength `beta`
/// with polarization axis `e_p`:
///
/// `dm/dt = -m × h_eff - alpha m × (m × h_eff) + beta m × (m × e_p)`.
pub fn lls_rhs(
    m: [f64; 3],
    h_a: [f64; 3],
    alpha: f64,
    beta: f64,
    e_p: [f64; 3],
    diag: [f64; 3],
) -> [f64; 3] {
    let h_eff = [
        -diag[0] * m[0] + h_a[0],
        -diag[1] * m[1] + h_a[1],
        -diag[2] * m[2] + h_a[2],
    ];
    let mxh = cross(m, h_eff);
    let mxmxh = cross(m, mxh);
    let mxmxe = cross(m, cross(m, e_p));
    [
        -mxh[0] - alpha * mxmxh[0] + beta * mxmxe[0],
        -mxh[1] - alpha * mxmxh[1] + beta * mxmxe[1],
        -mxh[2] - alpha * mxmxh[2] + beta * mxmxe[2],
    ]
}

/// Biaxial field in the frame where the `d1` contribution is gauged away:
/// effective field `(0, -d21 u2 + h2, -d31 u3)`, damping `alpha = alpha_t *
/// lambda`, torque along `e3`. Cross-product form — tangent to every sphere
/// for any `beta`, which makes it the reference for conservation tests.
pub fn reduced_rhs(u: [f64; 3], beta: f64, p: &DerivedParams) -> [f64; 3] {
    let h_red = [0.0, -p.d21 * u[1] + p.h2, -p.d31 * u[2]];
    let uxh = cross(u, h_red);
    let uxuxh = cross(u, uxh);
    let uxuxe3 = cross(u, cross(u, [0.0, 0.0, 1.0]));
    [
        -uxh[0] - p.alpha * uxuxh[0] + beta * uxuxe3[0],
        -uxh[1] - p.alpha * uxuxh[1] + beta * uxuxe3[1],
        -uxh[2] - p.alpha * uxuxh[2] + beta * uxuxe3[2],
    ]
}

/// Fully expanded polynomial form of [`reduced_rhs`], transcribed
/// independently of the cross-product form. Agrees with it on the unit
/// sphere; used as a cross-check against transcription slips.
pub fn reduced_rhs_poly(u: [f64; 3], beta: f64, p: &DerivedParams) -> [f64; 3] {
    let [u1, u2, u3] = u;
    let (d21, d31, d32, h2, a) = (p.d21, p.d31, p.d32, p.h2, p.alpha);
    [
        d32 * u2 * u3
            + h2 * u3
            + a * (d31 * u1 * u3 * u3 + d21 * u1 * u2 * u2 - h2 * u1 * u2)
            + beta * u1 * u3,
        -d31 * u1 * u3
            + a * (d32 * u2 * u3 * u3 - d21 * u2 * u1 * u1 + h2 * (u1 * u1 + u3 * u3))
            + beta * u2 * u3,
        d21 * u1 * u2
            - h2 * u1
            - a * u3 * (d31 * u1 * u1 + d32 * u2 * u2 + h2 * u2)
            - beta * (u1 * u1 + u2 * u2),
    ]
}

/// Slow/fast split of the on-sphere field: `A(u3) u + lambda * N(u)` with
/// `A(x) u = (d32 x u2, -d31 x u1, 0)`. The control `beta_t` is the rescaled
/// current (`beta = beta_t * lambda`).
pub fn scaled_rhs(u: [f64; 3], beta_t: f64, p: &DerivedParams) -> [f64; 3] {
    let [u1, u2, u3] = u;
    let (d21t, d31, d32, h2t, at, lam) = (p.d21_t, p.d31, p.d32, p.h2_t, p.alpha_t, p.lambda);
    let n1 = h2t * u3
        + beta_t * u1 * u3
        + at * (d31 * u1 * u3 * u3 + lam * d21t * u1 * u2 * u2 - lam * h2t * u1 * u2);
    let n2 = at * (d32 * u2 * u3 * u3 - lam * d21t * u2 * u1 * u1 + lam * h2t * (u1 * u1 + u3 * u3))
        + beta_t * u2 * u3;
    let n3 = d21t * u1 * u2
        - h2t * u1
        - at * u3 * (d31 * u1 * u1 + d32 * u2 * u2 + lam * h2t * u2)
        - beta_t * (u1 * u1 + u2 * u2);
    [
        d32 * u3 * u2 + lam * n1,
        -d31 * u3 * u1 + lam * n2,
        lam * n3,
    ]
}

/// Jacobian of [`scaled_rhs`] with respect to the state, at fixed control.
pub fn scaled_jacobian(u: [f64; 3], beta_t: f64, p: &DerivedParams) -> [[f64; 3]; 3] {
    let [u1, u2, u3] = u;
    let (d21t, d31, d32, h2t, at, lam) = (p.d21_t, p.d31, p.d32, p.h2_t, p.alpha_t, p.lambda);

    let dn1_1 = beta_t * u3 + at * (d31 * u3 * u3 + lam * d21t * u2 * u2 - lam * h2t * u2);
    let dn1_2 = at * (2.0 * lam * d21t * u1 * u2 - lam * h2t * u1);
    let dn1_3 = h2t + beta_t * u1 + 2.0 * at * d31 * u1 * u3;

    let dn2_1 = at * (-2.0 * lam * d21t * u1 * u2 + 2.0 * lam * h2t * u1);
    let dn2_2 = at * (d32 * u3 * u3 - lam * d21t * u1 * u1) + beta_t * u3;
    let dn2_3 = 2.0 * at * d32 * u2 * u3 + 2.0 * at * lam * h2t * u3 + beta_t * u2;

    let dn3_1 = d21t * u2 - h2t - 2.0 * at * d31 * u1 * u3 - 2.0 * beta_t * u1;
    let dn3_2 = d21t * u1 - 2.0 * at * d32 * u2 * u3 - at * lam * h2t * u3 - 2.0 * beta_t * u2;
    let dn3_3 = -at * (d31 * u1 * u1 + d32 * u2 * u2 + lam * h2t * u2);

    [
        [lam * dn1_1, d32 * u3 + lam * dn1_2, d32 * u2 + lam * dn1_3],
        [-d31 * u3 + lam * dn2_1, lam * dn2_2, -d31 * u1 + lam * dn2_3],
        [lam * dn3_1, lam * dn3_2, lam * dn3_3],
    ]
}

/// Anisotropy free energy `g = (d1 u1^2 + d2 u2^2 + d3 u3^2) / 2 - h2 u2`.
/// Its negative gradient is the effective field of [`reduced_rhs`] shifted by
/// the gauge term `d1 u`; it decreases monotonically once the current is off.
pub fn free_energy(u: [f64; 3], p: &DerivedParams) -> f64 {
    0.5 * (p.d1 * u[0] * u[0] + p.d2 * u[1] * u[1] + p.d3 * u[2] * u[2]) - p.h2 * u[1]
}

/// Latitude-holding feedback: the unique rescaled current that makes the
/// latitude `u3 = -k` invariant when the in-plane state is `v = (v1, v2)`.
/// Singular at the poles (`v1 = v2 = 0`).
pub fn beta_lat(v: [f64; 2], p: &DerivedParams, k: f64) -> Result<f64> {
    let [v1, v2] = v;
    let den = v1 * v1 + v2 * v2;
    if den < 1e-280 {
        return Err(Error::Transfer(
            "latitude feedback is singular at the poles (v1 = v2 = 0)".into(),
        ));
    }
    let num = v1 * v2 * p.d21_t + p.alpha_t * k * (p.d32 * v2 * v2 + p.d31 * v1 * v1)
        + p.alpha_t * p.h2_t * p.lambda * v2 * k
        - p.h2_t * v1;
    Ok(num / den)
}

/// Leading part of [`beta_lat`] in powers of `lambda` (the `lambda`-free
/// terms), with the metric factor `rho_v = 1 / (v1^2 + v2^2)` supplied by the
/// caller so the split stays exact.
pub fn beta0_hat(v: [f64; 2], p: &DerivedParams, k: f64, rho_v: f64) -> f64 {
    let [v1, v2] = v;
    rho_v
        * (v1 * v2 * p.d21_t + p.alpha_t * k * (p.d32 * v2 * v2 + p.d31 * v1 * v1) - p.h2_t * v1)
}

/// `lambda`-linear part of [`beta_lat`]: `beta_lat = beta0_hat + lambda * beta1_hat`.
pub fn beta1_hat(v: [f64; 2], p: &DerivedParams, k: f64, rho_v: f64) -> f64 {
    rho_v * p.alpha_t * p.h2_t * v[1] * k
}

/// Slow drift under the latitude feedback, split by order:
/// with the control frozen at `beta_lat(v)`, the full field satisfies
/// `scaled_rhs(u) = A(u3) u + lambda F(u; v) + lambda^2 R(u; v)`
/// in the first two components for every `u`, and in the third component at
/// `u = (v, -k)`. Returns `(F, R)`.
pub fn fr_fields(u: [f64; 3], v: [f64; 2], p: &DerivedParams, k: f64) -> ([f64; 3], [f64; 3]) {
    let [u1, u2, u3] = u;
    let rho_v = 1.0 / (v[0] * v[0] + v[1] * v[1]);
    let b0 = beta0_hat(v, p, k, rho_v);
    let b1 = beta1_hat(v, p, k, rho_v);
    let (d21t, d31, d32, h2t, at) = (p.d21_t, p.d31, p.d32, p.h2_t, p.alpha_t);
    let f = [
        h2t * u3 + u1 * u3 * b0 + at * d31 * u1 * u3 * u3,
        at * d32 * u2 * u3 * u3 + u2 * u3 * b0,
        0.0,
    ];
    let r = [
        u1 * u3 * b1 + at * (d21t * u1 * u2 * u2 - h2t * u1 * u2),
        u2 * u3 * b1 + at * (h2t * (u1 * u1 + u3 * u3) - d21t * u2 * u1 * u1),
        0.0,
    ];
    (f, r)
}

/// Rotation generator of the in-plane transfer dynamics on the latitude:
/// `d/dt (w1, w2) = [[0, -sigma omega], [omega / sigma, 0]] w + O(lambda)`.
pub fn planar_matrix(p: &DerivedParams) -> [[f64; 2]; 2] {
    [
        [0.0, -p.sigma * p.omega],
        [p.omega / p.sigma, 0.0],
    ]
}

/// First-order planar drift on the latitude `u3 = -k` (the `O(lambda)` part
/// of the in-plane dynamics after the rotation is removed).
pub fn f_r_planar(w: [f64; 2], p: &DerivedParams, k: f64) -> [f64; 2] {
    let [w1, w2] = w;
    let rho = 1.0 / (1.0 - k * k);
    [
        -rho * k * w2 * (p.h2_t * w2 + p.d21_t * w1 * w1),
        rho * k * w1 * (p.h2_t * w2 - p.d21_t * w2 * w2),
    ]
}

/// Second-order planar drift on the latitude. Shares one scalar bracket
/// between the two components: `R_r = rho alpha_t S(v) (v1 v2, -v1^2)`.
pub fn planar_remainder(v: [f64; 2], p: &DerivedParams, k: f64) -> [f64; 2] {
    let [v1, v2] = v;
    let rho = 1.0 / (1.0 - k * k);
    let s = k * k * p.d21_t * v2 + v1 * v1 * (v2 * p.d21_t - p.h2_t)
        - p.h2_t * (k * k + v2 * v2)
        + p.d21_t * v2 * v2 * v2;
    [
        rho * p.alpha_t * v1 * v2 * s,
        -rho * p.alpha_t * v1 * v1 * s,
    ]
}

/// Planar model of the transfer stage to first order:
/// rotation plus `lambda` times the first-order drift.
pub fn transfer_rhs(w: [f64; 2], p: &DerivedParams, k: f64) -> [f64; 2] {
    let lm = planar_matrix(p);
    let fr = f_r_planar(w, p, k);
    [
        lm[0][0] * w[0] + lm[0][1] * w[1] + p.lambda * fr[0],
        lm[1][0] * w[0] + lm[1][1] * w[1] + p.lambda * fr[1],
    ]
}

/// Feedback-closed loop: the full field with the control slaved to the
/// current in-plane state, `scaled_rhs(u, beta_lat((u1, u2)), p)`. By
/// construction the third component vanishes on `u3 = -k`, so the latitude
/// is exactly invariant under this flow.
pub fn latitudinal_rhs(u: [f64; 3], p: &DerivedParams, k: f64) -> Result<[f64; 3]> {
    let beta_t = beta_lat([u[0], u[1]], p, k)?;
    Ok(scaled_rhs(u, beta_t, p))
}
