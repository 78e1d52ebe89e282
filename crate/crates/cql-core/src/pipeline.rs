//! End-to-end switching: plan all three stages, synthesize the control
//! waveform, execute the controlled flow, and audit the outcome.
//!
//! The pipeline clock places `t = 0` at the expulsion-to-transfer handoff:
//! expulsion runs on `[-T_e, 0]` under constant current, transfer on
//! `[0, T_tr]` under the feedforward latitude-holding waveform, and
//! attraction on `[T_tr, T_tr + T_attract]` with the current off. Each stage
//! is integrated as its own segment so the control discontinuities at the
//! stage boundaries are never smeared across a step.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{beta_lat, free_energy, norm, psi, scaled_rhs};
use crate::expulsion::{plan_expulsion, ExpulsionPlan};
use crate::integrate::{Integrator, Stage, Trajectory};
use crate::params::DerivedParams;
use crate::transfer::{approx_transfer_solution, plan_transfer, TransferPlan};
use crate::{Error, Result};

/// Piecewise control waveform of the full pipeline: constant expulsion
/// current for `t < 0`, feedforward latitude-holding current on
/// `[0, t_tr]`, then off.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ControlWaveform {
    /// Frozen parameter snapshot the waveform was synthesized against.
    pub p: DerivedParams,
    pub k: f64,
    pub lambda: f64,
    /// Corrected normal coordinates driving the planned transfer orbit.
    pub x_a: f64,
    pub x_b: f64,
    /// Nominal expulsion duration.
    pub t_e: f64,
    /// Executed expulsion duration (differs from `t_e` only under stress).
    pub t_e_run: f64,
    pub t_tr: f64,
    /// Rescaled expulsion current.
    pub beta_e_t: f64,
    /// Time-dilation factor applied to the transfer waveform argument
    /// (1 except under stress).
    pub dilation: f64,
}

impl ControlWaveform {
    /// Rescaled control current at pipeline time `t`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            Ok(self.beta_e_t)
        } else if t <= self.t_tr {
            let w = approx_transfer_solution(
                self.dilation * t,
                self.x_a,
                self.x_b,
                &self.p,
                self.k,
                self.lambda,
            );
            beta_lat(w, &self.p, self.k)
        } else {
            Ok(0.0)
        }
    }

    /// Discontinuity of the control at the expulsion-to-transfer handoff
    /// (allowed by design; reported, not smoothed).
    pub fn jump_at_zero(&self) -> f64 {
        let at_zero = self.eval(0.0).unwrap_or(f64::NAN);
        (at_zero - self.beta_e_t).abs()
    }
}

/// Assemble the executable control waveform from the two stage plans.
pub fn synthesize_control(
    tp: &TransferPlan,
    ep: &ExpulsionPlan,
    p: &DerivedParams,
) -> ControlWaveform {
    ControlWaveform {
        p: *p,
        k: tp.k,
        lambda: tp.lambda,
        x_a: tp.x_a,
        x_b: tp.x_b,
        t_e: ep.t_e,
        t_e_run: ep.t_e,
        t_tr: tp.t_tr,
        beta_e_t: ep.beta_e_t,
        dilation: 1.0,
    }
}

/// The three stage plans plus the synthesized waveform.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SwitchingPlans {
    pub expulsion: ExpulsionPlan,
    pub transfer: TransferPlan,
    pub control: ControlWaveform,
}

/// Plan both controlled stages for the parameter set's own target latitude
/// and expulsion current, taking the transfer start from the expulsion
/// plan's closed-form endpoint. `rho_e` and `n_samples` size the expulsion
/// certificate (they do not affect the executed trajectory).
pub fn plan_switching(p: &DerivedParams, rho_e: f64, n_samples: usize) -> Result<SwitchingPlans> {
    let expulsion = plan_expulsion(p, rho_e, n_samples)?;
    let w0 = [expulsion.u_end[0], expulsion.u_end[1]];
    let transfer = plan_transfer(w0, p)?;
    let control = synthesize_control(&transfer, &expulsion, p);
    Ok(SwitchingPlans {
        expulsion,
        transfer,
        control,
    })
}

/// Audited outcome of a full switching run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchingReport {
    pub schema_version: u32,
    /// `(-T_e_run, 0, T_tr)`: executed stage boundaries on the pipeline
    /// clock (for the ballistic baseline: `(0, T_on, T_on)`).
    pub stage_times: [f64; 3],
    /// State at the end of each stage: expulsion, transfer, attraction.
    pub u_at_stage_ends: [[f64; 3]; 3],
    pub final_state: [f64; 3],
    pub dist_to_s_plus: f64,
    /// Endpoint conservation defect `| |u(T)|^2 - |u(0)|^2 |`.
    pub psi_drift: f64,
    /// Largest latitude excursion during the transfer window.
    pub max_u3_plus_k_during_transfer: f64,
    /// Path of the exported control/trajectory CSV, when one was written.
    pub control_samples: Option<String>,
    /// Whether the run met its certified success radius: distance to the
    /// target at most `f r` for starting offset `r > 0`, or an absolute
    /// 1e-6 for `r = 0` starts.
    pub success: bool,
    /// Starting offset radius `|u0 - s_minus|`.
    pub r_offset: f64,
    /// Success-radius conversion factor `1 / (2 gamma)`.
    pub f_factor: f64,
    /// Sphere defect of the start, `|u0|^2 - 1`.
    pub delta_a: f64,
    /// Distance of the final state to the defect-adjusted limit point.
    pub predicted_limit_dist: f64,
    /// First attraction node where the free field norm fell below 1e-9.
    pub t_converged: Option<f64>,
    /// Peak-to-peak `u1` amplitude over the current-off window.
    pub post_ringing_u1: Option<f64>,
    /// Control discontinuity at the expulsion-to-transfer handoff.
    pub beta_jump_at_zero: f64,
    pub free_energy_at_stage_ends: [f64; 3],
}

const SCHEMA_VERSION: u32 = 1;

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Peak-to-peak amplitude of `u1` over `[t0, t1]`, sampled on `n` uniform
/// points of the dense output.
pub fn ring_p2p_u1(traj: &Trajectory, t0: f64, t1: f64, n: usize) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let t = t0 + (t1 - t0) * i as f64 / (n - 1) as f64;
        let u1 = traj.sample(t)[0];
        lo = lo.min(u1);
        hi = hi.max(u1);
    }
    hi - lo
}

/// Execute the full three-stage switching from `u0` under the planned
/// waveform. The attraction window defaults to `50 / alpha` when
/// `t_attract_max` is not given. Returns the audited report and the dense
/// trajectory over `[-T_e_run, T_tr + T_attract]`.
pub fn run_switching(
    u0: [f64; 3],
    plans: &SwitchingPlans,
    p: &DerivedParams,
    t_attract_max: Option<f64>,
    integ: &Integrator,
) -> Result<(SwitchingReport, Trajectory)> {
    let c = &plans.control;
    let t_attr = t_attract_max.unwrap_or(50.0 / (p.alpha_t * p.lambda));

    // Expulsion: constant current on [-T_e_run, 0].
    let mut traj = integ.integrate(
        |_, u| scaled_rhs(u, c.beta_e_t, p),
        -c.t_e_run,
        0.0,
        u0,
    )?;
    traj.retag(Stage::Expulsion, |_| c.beta_e_t);
    let u_expulsion_end = traj.final_state();

    // Transfer: feedforward waveform on [0, T_tr]. Stage abscissae can
    // overshoot the endpoint by roundoff; clamp so the off-state is never
    // sampled inside this segment.
    let waveform = |t: f64| c.eval(t.min(c.t_tr));
    let mut tr2 = integ.integrate(
        |t, u| match waveform(t) {
            Ok(b) => scaled_rhs(u, b, p),
            Err(_) => [f64::NAN; 3],
        },
        0.0,
        c.t_tr,
        u_expulsion_end,
    )?;
    tr2.retag(Stage::Transfer, |t| waveform(t).unwrap_or(f64::NAN));
    let u_transfer_end = tr2.final_state();
    traj.append(tr2);

    let mut max_u3 = 0.0f64;
    for i in 0..3000 {
        let t = c.t_tr * i as f64 / 2999.0;
        max_u3 = max_u3.max((traj.sample(t)[2] + c.k).abs());
    }

    // Attraction: current off on [T_tr, T_tr + T_attract].
    let mut tr3 = integ.integrate(
        |_, u| scaled_rhs(u, 0.0, p),
        c.t_tr,
        c.t_tr + t_attr,
        u_transfer_end,
    )?;
    tr3.retag(Stage::Attraction, |_| 0.0);
    let t_converged = tr3
        .times
        .iter()
        .zip(tr3.states.iter())
        .find(|(_, &u)| norm(scaled_rhs(u, 0.0, p)) < 1e-9)
        .map(|(&t, _)| t);
    traj.append(tr3);

    let post_ringing_u1 = Some(ring_p2p_u1(&traj, c.t_tr, c.t_tr + t_attr, 4000));

    let final_state = traj.final_state();
    let dist = dist3(final_state, p.s_plus);
    let r_offset = dist3(u0, p.s_minus);
    let success = if r_offset > 0.0 {
        dist <= p.f_factor * r_offset
    } else {
        dist <= 1e-6
    };
    let delta_a = psi(u0) - 1.0;
    let pred = crate::attraction::predicted_limit(delta_a, p);
    let pred_abs = [
        pred[0] + p.s_plus[0],
        pred[1] + p.s_plus[1],
        pred[2] + p.s_plus[2],
    ];
    let ends = [u_expulsion_end, u_transfer_end, final_state];

    let report = SwitchingReport {
        schema_version: SCHEMA_VERSION,
        stage_times: [-c.t_e_run, 0.0, c.t_tr],
        u_at_stage_ends: ends,
        final_state,
        dist_to_s_plus: dist,
        psi_drift: (psi(final_state) - psi(u0)).abs(),
        max_u3_plus_k_during_transfer: max_u3,
        control_samples: None,
        success,
        r_offset,
        f_factor: p.f_factor,
        delta_a,
        predicted_limit_dist: dist3(final_state, pred_abs),
        t_converged,
        post_ringing_u1,
        beta_jump_at_zero: c.jump_at_zero(),
        free_energy_at_stage_ends: [
            free_energy(ends[0], p),
            free_energy(ends[1], p),
            free_energy(ends[2], p),
        ],
    };
    Ok((report, traj))
}

/// Reports of the two control-error stress variants at factor `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StressPair {
    /// Variant A: the expulsion runs for `j T_e` with unchanged current;
    /// the rest of the plan stays nominal.
    pub te_scaled: SwitchingReport,
    /// Variant B: the transfer waveform is evaluated at the dilated time
    /// `j t` over the same window.
    pub dilated: SwitchingReport,
}

/// Re-simulate the full switching under both stress variants at factor `j`.
pub fn stress_test(
    plans: &SwitchingPlans,
    p: &DerivedParams,
    u0: [f64; 3],
    j: f64,
    t_attract_max: Option<f64>,
    integ: &Integrator,
) -> Result<StressPair> {
    let mut plans_a = plans.clone();
    plans_a.control.t_e_run = j * plans.control.t_e;
    let (te_scaled, _) = run_switching(u0, &plans_a, p, t_attract_max, integ)?;

    let mut plans_b = plans.clone();
    plans_b.control.dilation = j;
    let (dilated, _) = run_switching(u0, &plans_b, p, t_attract_max, integ)?;

    Ok(StressPair { te_scaled, dilated })
}

/// Constant-current-then-off baseline for the ringing comparison: current
/// `beta_const_t` on `[0, t_on]`, then off for `ring_window`. The report's
/// stage times are `(0, t_on, t_on)` and `post_ringing_u1` carries the
/// peak-to-peak `u1` amplitude over the off window.
pub fn ballistic_baseline(
    u0: [f64; 3],
    p: &DerivedParams,
    beta_const_t: f64,
    t_on: f64,
    ring_window: f64,
    integ: &Integrator,
) -> Result<(SwitchingReport, Trajectory)> {
    if !(beta_const_t > 0.0 && t_on > 0.0 && ring_window > 0.0) {
        return Err(Error::InvalidParams(format!(
            "ballistic baseline needs positive current, on-time and ring window; \
             got beta={beta_const_t}, t_on={t_on}, window={ring_window}"
        )));
    }
    let mut traj = integ.integrate(|_, u| scaled_rhs(u, beta_const_t, p), 0.0, t_on, u0)?;
    traj.retag(Stage::Free, |_| beta_const_t);
    let u_off = traj.final_state();

    let mut max_u3 = 0.0f64;
    for i in 0..3000 {
        let t = t_on * i as f64 / 2999.0;
        max_u3 = max_u3.max((traj.sample(t)[2] + p.k).abs());
    }

    let mut tail = integ.integrate(
        |_, u| scaled_rhs(u, 0.0, p),
        t_on,
        t_on + ring_window,
        u_off,
    )?;
    tail.retag(Stage::Free, |_| 0.0);
    let t_converged = tail
        .times
        .iter()
        .zip(tail.states.iter())
        .find(|(_, &u)| norm(scaled_rhs(u, 0.0, p)) < 1e-9)
        .map(|(&t, _)| t);
    traj.append(tail);

    let ring = ring_p2p_u1(&traj, t_on, t_on + ring_window, 4000);
    let final_state = traj.final_state();
    let dist = dist3(final_state, p.s_plus);
    let r_offset = dist3(u0, p.s_minus);
    let delta_a = psi(u0) - 1.0;
    let pred = crate::attraction::predicted_limit(delta_a, p);
    let pred_abs = [
        pred[0] + p.s_plus[0],
        pred[1] + p.s_plus[1],
        pred[2] + p.s_plus[2],
    ];
    let ends = [u_off, u_off, final_state];

    let report = SwitchingReport {
        schema_version: SCHEMA_VERSION,
        stage_times: [0.0, t_on, t_on],
        u_at_stage_ends: ends,
        final_state,
        dist_to_s_plus: dist,
        psi_drift: (psi(final_state) - psi(u0)).abs(),
        max_u3_plus_k_during_transfer: max_u3,
        control_samples: None,
        success: if r_offset > 0.0 {
            dist <= p.f_factor * r_offset
        } else {
            dist <= 1e-6
        },
        r_offset,
        f_factor: p.f_factor,
        delta_a,
        predicted_limit_dist: dist3(final_state, pred_abs),
        t_converged,
        post_ringing_u1: Some(ring),
        beta_jump_at_zero: 0.0,
        free_energy_at_stage_ends: [
            free_energy(ends[0], p),
            free_energy(ends[1], p),
            free_energy(ends[2], p),
        ],
    };
    Ok((report, traj))
}

/// Write a trajectory as CSV rows `t,u1,u2,u3,beta,stage`, sampled on the
/// dense output every `dt` (the final time is always included). Returns
/// the number of data rows written.
pub fn export_trajectory_csv(
    traj: &Trajectory,
    path: &Path,
    dt: f64,
    mut beta_of_t: impl FnMut(f64) -> f64,
    mut stage_of_t: impl FnMut(f64) -> Stage,
) -> Result<usize> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,u1,u2,u3,beta,stage")?;
    let (t0, t1) = (traj.start_time(), traj.end_time());
    let n = ((t1 - t0).abs() / dt).floor() as usize;
    let step = dt * (t1 - t0).signum();
    let mut rows = 0usize;
    for i in 0..=n {
        let t = t0 + step * i as f64;
        rows += write_row(&mut out, t, traj, &mut beta_of_t, &mut stage_of_t)?;
    }
    if t0 + step * n as f64 != t1 {
        rows += write_row(&mut out, t1, traj, &mut beta_of_t, &mut stage_of_t)?;
    }
    out.flush()?;
    Ok(rows)
}

fn write_row(
    out: &mut impl std::io::Write,
    t: f64,
    traj: &Trajectory,
    beta_of_t: &mut impl FnMut(f64) -> f64,
    stage_of_t: &mut impl FnMut(f64) -> Stage,
) -> Result<usize> {
    let u = traj.sample(t);
    writeln!(
        out,
        "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
        t,
        u[0],
        u[1],
        u[2],
        beta_of_t(t),
        stage_of_t(t).tag()
    )?;
    Ok(1)
}

/// CSV export with the stage labels and control values of a pipeline run.
pub fn export_run_csv(
    traj: &Trajectory,
    control: &ControlWaveform,
    path: &Path,
    dt: f64,
) -> Result<usize> {
    let t_tr = control.t_tr;
    export_trajectory_csv(
        traj,
        path,
        dt,
        |t| control.eval(t).unwrap_or(f64::NAN),
        |t| {
            if t < 0.0 {
                Stage::Expulsion
            } else if t <= t_tr {
                Stage::Transfer
            } else {
                Stage::Attraction
            }
        },
    )
}

/// Serialize a report to pretty JSON.
pub fn export_report_json(report: &SwitchingReport, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), report)?;
    Ok(())
}

/// Read back a JSON report.
pub fn read_report_json(path: &Path) -> Result<SwitchingReport> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}
