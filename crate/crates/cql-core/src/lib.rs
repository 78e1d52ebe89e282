//! Macrospin switching under injected spin current.
//!
//! This crate models the reversal of a single magnetic macrospin between the
//! two stable equilibria of a biaxial particle, driven by a piecewise control
//! current. The reversal is organised as a three-stage pipeline:
//!
//! 1. **Expulsion** — a constant current pushes the state off the initial
//!    equilibrium along a spiral whose closed form is known exactly
//!    ([`expulsion`]).
//! 2. **Quasi-latitudinal transfer** — a feedforward current waveform holds
//!    the third component of the magnetization on a fixed latitude while the
//!    in-plane components precess across the equator ([`transfer`]).
//! 3. **Attraction** — the current is switched off and intrinsic damping
//!    pulls the state into the target equilibrium, with a Lyapunov-certified
//!    basin estimate ([`attraction`]).
//!
//! [`pipeline`] glues the stages together, produces machine-readable reports,
//! and hosts the stress/baseline experiments. [`validate`] bundles the
//! acceptance checks used by the test suite and the `cql-switch validate`
//! subcommand.

pub mod attraction;
pub mod dynamics;
pub mod expulsion;
pub mod integrate;
pub mod params;
pub mod pipeline;
pub mod sampling;
pub mod transfer;
pub mod validate;

pub use attraction::{
    basin_spec, run_attraction, select_theorem_params, AttractionResult, BasinSpec, TheoremParams,
};
pub use dynamics::{free_energy, lls_rhs, psi, reduced_rhs, scaled_rhs};
pub use expulsion::{expulsion_time, plan_expulsion, ExpulsionPlan};
pub use integrate::{Integrator, Stage, Trajectory};
pub use params::{DerivedParams, MaterialParams, Preset};
pub use pipeline::{
    ballistic_baseline, plan_switching, run_switching, stress_test, ControlWaveform,
    SwitchingPlans, SwitchingReport,
};
pub use transfer::{plan_transfer, transfer_time, NormalFormCoefficients, TransferPlan};

/// Crate-wide error type. Variants are tagged by the pipeline stage (or
/// subsystem) that produced them so callers can report failures precisely.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Parameter validation failed before any stage ran.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Expulsion-stage planning or evaluation failed.
    #[error("expulsion: {0}")]
    Expulsion(String),

    /// Transfer-stage planning or evaluation failed.
    #[error("transfer: {0}")]
    Transfer(String),

    /// Attraction-stage analysis failed (e.g. Lyapunov decrease violated).
    #[error("attraction: {0}")]
    Attraction(String),

    /// The adaptive integrator could not continue. Carries the last accepted
    /// time and state so the caller can diagnose where the run died.
    #[error("integration: {message} (last good state at t = {t}: {state:?})")]
    Integration {
        message: String,
        t: f64,
        state: [f64; 3],
    },

    /// Report serialization / filesystem failure.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// JSON encoding/decoding failure.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
