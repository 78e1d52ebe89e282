//! Material parameters and derived constants.
//!
//! The particle is biaxial with demagnetizing-style anisotropy coefficients
//! `d1 < d2 < d3`: the easy axis is `e1`, the hard axis `e3`, and `e2` is
//! intermediate. The small parameter `lambda` measures the gap `d2 - d1`
//! relative to a reference hard-plane anisotropy; damping and control
//! amplitudes are specified in units of `lambda` (the `_t` suffix, read
//! "tilde", marks such rescaled quantities). A static field along `e2`
//! places the two stable equilibria at `s∓ = (∓γ, -Ω, 0)` with
//! `γ = sqrt(1 - Ω²)`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Reference ratio `(d2 - d1) / lambda` shared by all bundled presets.
/// Overriding `lambda` rebuilds `d2` with this gap so the rescaled dynamics
/// stay on the same one-parameter family.
pub const REFERENCE_D21_PER_LAMBDA: f64 = 6.51;

/// Raw, user-facing parameter set. All fields are dimensionless.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Easy-axis anisotropy coefficient.
    pub d1: f64,
    /// Intermediate-axis anisotropy coefficient (`d2 = d1 + d21_t * lambda`).
    pub d2: f64,
    /// Hard-axis anisotropy coefficient.
    pub d3: f64,
    /// Rescaled Gilbert damping `alpha = alpha_t * lambda`.
    pub alpha_t: f64,
    /// Scale-separation parameter; must be positive.
    pub lambda: f64,
    /// Equilibrium latitude parameter: the applied field along `e2` is
    /// `h2 = -(d2 - d1) * omega_cap`, so both equilibria sit at `m2 = -omega_cap`.
    pub omega_cap: f64,
    /// Rescaled expulsion current `beta_e = beta_e_t * lambda`.
    pub beta_e_t: f64,
    /// Target latitude for the transfer stage: the control holds `u3 = -k_target`.
    pub k_target: f64,
}

/// Bundled experiment scenarios. Each row fixes `(d2, alpha_t, beta_e_t,
/// omega_cap, k_target)` on top of the shared `d1 = 0.0411`, `d3 = 0.8527`,
/// with `lambda` at its native value `(d2 - d1) / 6.51`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Fig2,
        Preset::Fig3,
        Preset::Fig4,
        Preset::Fig5,
        Preset::Fig6,
        Preset::Fig7,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
            Preset::Fig6 => "fig6",
            Preset::Fig7 => "fig7",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fig2" => Ok(Preset::Fig2),
            "fig3" => Ok(Preset::Fig3),
            "fig4" => Ok(Preset::Fig4),
            "fig5" => Ok(Preset::Fig5),
            "fig6" => Ok(Preset::Fig6),
            "fig7" => Ok(Preset::Fig7),
            other => Err(Error::InvalidParams(format!(
                "unknown preset '{other}' (expected fig2..fig7)"
            ))),
        }
    }
}

impl MaterialParams {
    /// Build and validate a parameter set.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        d1: f64,
        d2: f64,
        d3: f64,
        alpha_t: f64,
        lambda: f64,
        omega_cap: f64,
        beta_e_t: f64,
        k_target: f64,
    ) -> Result<Self> {
        let p = Self {
            d1,
            d2,
            d3,
            alpha_t,
            lambda,
            omega_cap,
            beta_e_t,
            k_target,
        };
        p.check()?;
        Ok(p)
    }

    /// Parameters for a bundled scenario at its native `lambda`.
    pub fn preset(which: Preset) -> Self {
        let (d2, alpha_t, beta_e_t, omega_cap, k_target) = match which {
            Preset::Fig2 => (0.1127, 2.0, 3.0, 0.0676, 0.07),
            Preset::Fig3 => (0.1127, 2.0, 3.0, 0.0676, 0.08),
            Preset::Fig4 => (0.0802, 4.0, 3.0, 0.1799, 0.0524),
            Preset::Fig5 => (0.0802, 4.0, 3.0, 0.1036, 0.0308),
            Preset::Fig6 | Preset::Fig7 => (0.0802, 2.0, 3.0, 0.1036, 0.0308),
        };
        let d1 = 0.0411;
        Self {
            d1,
            d2,
            d3: 0.8527,
            alpha_t,
            lambda: (d2 - d1) / REFERENCE_D21_PER_LAMBDA,
            omega_cap,
            beta_e_t,
            k_target,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.d1 > 0.0 && self.d1 < self.d2 && self.d2 < self.d3) {
            return Err(Error::InvalidParams(format!(
                "need 0 < d1 < d2 < d3, got d1={}, d2={}, d3={}",
                self.d1, self.d2, self.d3
            )));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidParams(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.alpha_t > 0.0) {
            return Err(Error::InvalidParams(format!(
                "alpha_t must be positive, got {}",
                self.alpha_t
            )));
        }
        if !(self.omega_cap.abs() < 1.0) {
            return Err(Error::InvalidParams(format!(
                "need |omega_cap| < 1 for real equilibria, got {}",
                self.omega_cap
            )));
        }
        if !(0.0..1.0).contains(&self.k_target) {
            return Err(Error::InvalidParams(format!(
                "k_target must lie in [0, 1), got {}",
                self.k_target
            )));
        }
        Ok(())
    }

    /// The `lambda` at which this parameter set sits on the reference family
    /// `d2 = d1 + 6.51 * lambda`.
    pub fn lambda_native(&self) -> f64 {
        (self.d2 - self.d1) / REFERENCE_D21_PER_LAMBDA
    }

    /// Move along the reference one-parameter family: override `lambda` and
    /// rebuild `d2 = d1 + 6.51 * lambda`, keeping `alpha_t`, `beta_e_t`,
    /// `omega_cap` and `k_target`. Equilibria are unchanged; all physical
    /// small quantities (damping, currents, applied field) rescale together.
    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        self.lambda = lambda;
        self.d2 = self.d1 + REFERENCE_D21_PER_LAMBDA * lambda;
        self.check()?;
        Ok(self)
    }

    /// Assign a parameter by config key. Recognised keys: `d1`, `d2`, `d3`,
    /// `alpha_t`, `lambda` (raw field write — use [`Self::with_lambda`] to
    /// stay on the reference family), `omega_cap`, `h2_t` (converted to
    /// `omega_cap = -h2_t / d21_t` using the current `d1`, `d2`, `lambda`, so
    /// it must come after them), `beta_e_t`, `k_target`.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "d1" => self.d1 = value,
            "d2" => self.d2 = value,
            "d3" => self.d3 = value,
            "alpha_t" => self.alpha_t = value,
            "lambda" => self.lambda = value,
            "omega_cap" => self.omega_cap = value,
            "h2_t" => {
                let d21_t = (self.d2 - self.d1) / self.lambda;
                if d21_t <= 0.0 {
                    return Err(Error::InvalidParams(
                        "h2_t requires d2 > d1 and lambda > 0 to be set first".into(),
                    ));
                }
                self.omega_cap = -value / d21_t;
            }
            "beta_e_t" => self.beta_e_t = value,
            "k_target" => self.k_target = value,
            other => {
                return Err(Error::InvalidParams(format!(
                    "unknown parameter key '{other}'"
                )))
            }
        }
        self.check()
    }

    /// Validate and derive all downstream constants.
    pub fn derive(&self) -> Result<DerivedParams> {
        self.check()?;
        Ok(DerivedParams::new(self))
    }
}

/// Everything downstream code needs, precomputed once. Copy-cheap so plans
/// and waveforms can embed their own frozen snapshot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub lambda: f64,
    pub alpha_t: f64,
    pub beta_e_t: f64,
    pub omega_cap: f64,
    pub k: f64,

    /// Anisotropy gaps `d21 = d2 - d1`, `d31 = d3 - d1`, `d32 = d3 - d2`.
    pub d21: f64,
    pub d31: f64,
    pub d32: f64,
    /// Rescaled easy-plane gap `d21 / lambda`.
    pub d21_t: f64,
    /// Applied field along `e2` pinning the equilibria: `h2 = -d21 * omega_cap`.
    pub h2: f64,
    /// Rescaled field `h2 / lambda = -d21_t * omega_cap`.
    pub h2_t: f64,
    /// Physical damping `alpha_t * lambda`.
    pub alpha: f64,
    /// Physical expulsion current `beta_e_t * lambda`.
    pub beta_e: f64,
    /// `sqrt(1 - omega_cap^2)`; first component of the equilibria.
    pub gamma: f64,
    /// Source equilibrium `(-gamma, -omega_cap, 0)`.
    pub s_minus: [f64; 3],
    /// Target equilibrium `(gamma, -omega_cap, 0)`.
    pub s_plus: [f64; 3],
    /// Precession frequency on the transfer latitude: `k * sqrt(d32 * d31)`.
    pub omega: f64,
    /// Aspect ratio of the transfer ellipse: `sqrt(d32 / d31)`.
    pub sigma: f64,
    /// `1 / (1 - k^2)`, the metric factor of the latitude circle.
    pub rho: f64,
    /// Certified contraction factor for the final distance bound: `1 / (2 gamma)`.
    pub f_factor: f64,
}

impl DerivedParams {
    fn new(p: &MaterialParams) -> Self {
        let d21 = p.d2 - p.d1;
        let d31 = p.d3 - p.d1;
        let d32 = p.d3 - p.d2;
        let d21_t = d21 / p.lambda;
        let h2 = -d21 * p.omega_cap;
        let gamma = (1.0 - p.omega_cap * p.omega_cap).sqrt();
        let k = p.k_target;
        Self {
            d1: p.d1,
            d2: p.d2,
            d3: p.d3,
            lambda: p.lambda,
            alpha_t: p.alpha_t,
            beta_e_t: p.beta_e_t,
            omega_cap: p.omega_cap,
            k,
            d21,
            d31,
            d32,
            d21_t,
            h2,
            h2_t: h2 / p.lambda,
            alpha: p.alpha_t * p.lambda,
            beta_e: p.beta_e_t * p.lambda,
            gamma,
            s_minus: [-gamma, -p.omega_cap, 0.0],
            s_plus: [gamma, -p.omega_cap, 0.0],
            omega: k * (d32 * d31).sqrt(),
            sigma: (d32 / d31).sqrt(),
            rho: 1.0 / (1.0 - k * k),
            f_factor: 1.0 / (2.0 * gamma),
        }
    }

    /// The raw parameters this derivation came from.
    pub fn material(&self) -> MaterialParams {
        MaterialParams {
            d1: self.d1,
            d2: self.d2,
            d3: self.d3,
            alpha_t: self.alpha_t,
            lambda: self.lambda,
            omega_cap: self.omega_cap,
            beta_e_t: self.beta_e_t,
            k_target: self.k,
        }
    }
}

/// One geometric admissibility condition with its evaluated sides.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdmissibilityCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
    /// Signed slack `rhs - lhs`; positive means satisfied with room.
    pub margin: f64,
}

/// Evaluate the geometric admissibility conditions for the planned reversal.
/// These are diagnostics, not gates: a failed condition voids the a-priori
/// certificates but the pipeline may still succeed numerically.
pub fn validate_admissibility(p: &DerivedParams) -> Vec<AdmissibilityCheck> {
    let mk = |name, lhs: f64, rhs: f64| AdmissibilityCheck {
        name,
        lhs,
        rhs,
        pass: lhs <= rhs,
        margin: rhs - lhs,
    };
    let r_sm = crate::attraction::basin_spec(p).r_sm;
    vec![
        // Expulsion target reachable: the spiral's vertical amplitude covers k.
        mk("sqrt2_k_leq_1", std::f64::consts::SQRT_2 * p.k, 1.0),
        // Field strong enough relative to the easy-plane gap.
        mk("two_d21_over_d31_leq_3_omega_sq", 2.0 * p.d21 / p.d31, 3.0 * p.omega_cap.powi(2)),
        // Separation of the in-plane and out-of-plane time scales.
        mk("sixteen_sqrt_d21_over_d31_leq_gamma", 16.0 * (p.d21 / p.d31).sqrt(), p.gamma),
        // Attraction basin comfortably contains the transfer endpoint.
        mk("five_quarters_k_leq_r_sm", 1.25 * p.k, r_sm),
    ]
}
