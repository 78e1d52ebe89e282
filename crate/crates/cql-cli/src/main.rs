//! `cql-switch`: plan, simulate and audit three-stage switching of a
//! biaxial macrospin driven by an injected spin current.
//!
//! Parameter sets start from a bundled experiment scenario (`--preset`),
//! optionally rebuilt at another separation scale (`--lambda`) and patched
//! key-by-key (`--set`). Commands write JSON reports (and CSV trajectories
//! where applicable) into `--out`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use cql_core::attraction::{basin_spec, boundary_point, run_attraction};
use cql_core::expulsion::plan_expulsion;
use cql_core::pipeline::{
    ballistic_baseline, export_report_json, export_run_csv, export_trajectory_csv,
    plan_switching, run_switching, stress_test, SwitchingPlans, SwitchingReport,
};
use cql_core::transfer::plan_transfer;
use cql_core::validate::run_all;
use cql_core::{DerivedParams, Integrator, MaterialParams, Preset, Stage};

#[derive(Copy, Clone, Debug, ValueEnum)]
enum PresetArg {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Fig2 => Preset::Fig2,
            PresetArg::Fig3 => Preset::Fig3,
            PresetArg::Fig4 => Preset::Fig4,
            PresetArg::Fig5 => Preset::Fig5,
            PresetArg::Fig6 => Preset::Fig6,
            PresetArg::Fig7 => Preset::Fig7,
        }
    }
}

fn parse_vec3(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got {s:?}"));
    }
    let mut v = [0.0; 3];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part.trim().parse().map_err(|e| format!("{part:?}: {e}"))?;
    }
    Ok(v)
}

fn parse_vec2(s: &str) -> std::result::Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected two comma-separated numbers, got {s:?}"));
    }
    let mut v = [0.0; 2];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part.trim().parse().map_err(|e| format!("{part:?}: {e}"))?;
    }
    Ok(v)
}

#[derive(Parser)]
#[command(
    name = "cql-switch",
    version,
    about = "Three-stage injected-current switching control for biaxial macrospins"
)]
struct Cli {
    /// Bundled experiment scenario to start from.
    #[arg(long, global = true, value_enum, default_value_t = PresetArg::Fig2)]
    preset: PresetArg,

    /// Rebuild the scenario at another separation scale, keeping the
    /// reference easy-plane gap per unit scale.
    #[arg(long, global = true)]
    lambda: Option<f64>,

    /// Patch a raw material parameter (repeatable; applied after --lambda).
    /// Keys: d1, d2, d3, alpha_t, lambda, omega_cap, h2_t, beta_e_t, k_target.
    #[arg(long, global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Output directory for JSON reports and CSV trajectories.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Relative tolerance of the adaptive integrator.
    #[arg(long, global = true, default_value_t = 1e-10)]
    rtol: f64,

    /// Absolute tolerance of the adaptive integrator.
    #[arg(long, global = true, default_value_t = 1e-12)]
    atol: f64,

    /// Sampling interval for exported CSV trajectories.
    #[arg(long, global = true, default_value_t = 0.05)]
    dt_export: f64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan all three stages and print the certificate constants.
    Plan {
        /// Headroom radius for the expulsion certificate.
        #[arg(long, default_value_t = 1.0)]
        rho_e: f64,
        /// Samples per certificate bound.
        #[arg(long, default_value_t = 400)]
        n_samples: usize,
    },
    /// Plan the expulsion stage alone.
    Expel {
        #[arg(long, default_value_t = 1.0)]
        rho_e: f64,
        #[arg(long, default_value_t = 400)]
        n_samples: usize,
    },
    /// Plan the quasi-latitudinal transfer stage alone.
    Transfer {
        /// In-plane start `w1,w2`; defaults to the planned expulsion endpoint.
        #[arg(long, value_parser = parse_vec2)]
        start: Option<[f64; 2]>,
    },
    /// Relax from a point of the certified basin boundary with the current off.
    Attract {
        /// Angle parametrizing the basin boundary.
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        /// Sphere defect `|u|^2 - 1` of the start.
        #[arg(long, default_value_t = 0.0)]
        delta_a: f64,
        /// Relaxation window; defaults to 50 / alpha.
        #[arg(long)]
        t_max: Option<f64>,
    },
    /// Run the full three-stage switching and audit the outcome.
    Switch {
        /// Absolute starting offset from the source equilibrium, `x,y,z`.
        #[arg(long, value_parser = parse_vec3, conflicts_with = "offset_lambda")]
        offset: Option<[f64; 3]>,
        /// Starting offset in units of the separation scale, `x,y,z`.
        #[arg(long, value_parser = parse_vec3)]
        offset_lambda: Option<[f64; 3]>,
        /// Attraction window; defaults to 50 / alpha.
        #[arg(long)]
        t_attract: Option<f64>,
    },
    /// Re-run the switching under stage-timing errors.
    Stress {
        /// Timing factor(s) to test (repeatable).
        #[arg(long = "j", default_values_t = [0.98, 1.02])]
        j: Vec<f64>,
        #[arg(long, value_parser = parse_vec3, conflicts_with = "offset_lambda")]
        offset: Option<[f64; 3]>,
        #[arg(long, value_parser = parse_vec3)]
        offset_lambda: Option<[f64; 3]>,
        #[arg(long)]
        t_attract: Option<f64>,
    },
    /// Constant-current-then-off baseline for the ringing comparison.
    Ballistic {
        /// Rescaled constant current while on.
        #[arg(long, default_value_t = 10.0)]
        beta_const: f64,
        /// On-time of the pulse.
        #[arg(long, default_value_t = 100.0)]
        t_on: f64,
        /// Observation window after switch-off.
        #[arg(long, default_value_t = 300.0)]
        ring_window: f64,
        /// Starting offset in units of the separation scale, `x,y,z`.
        #[arg(long, value_parser = parse_vec3, default_value = "1,0,0")]
        offset_lambda: [f64; 3],
    },
    /// Run the built-in acceptance checks; exits nonzero if any fail.
    Validate,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let p = derived(&cli)?;
    let integ = Integrator::with_tolerances(cli.rtol, cli.atol);

    match &cli.command {
        Command::Plan { rho_e, n_samples } => cmd_plan(&cli, &p, *rho_e, *n_samples),
        Command::Expel { rho_e, n_samples } => cmd_expel(&cli, &p, *rho_e, *n_samples),
        Command::Transfer { start } => cmd_transfer(&cli, &p, *start),
        Command::Attract {
            theta,
            delta_a,
            t_max,
        } => cmd_attract(&cli, &p, *theta, *delta_a, *t_max, &integ),
        Command::Switch {
            offset,
            offset_lambda,
            t_attract,
        } => cmd_switch(&cli, &p, *offset, *offset_lambda, *t_attract, &integ),
        Command::Stress {
            j,
            offset,
            offset_lambda,
            t_attract,
        } => cmd_stress(&cli, &p, j, *offset, *offset_lambda, *t_attract, &integ),
        Command::Ballistic {
            beta_const,
            t_on,
            ring_window,
            offset_lambda,
        } => cmd_ballistic(&cli, &p, *beta_const, *t_on, *ring_window, *offset_lambda, &integ),
        Command::Validate => cmd_validate(),
    }
}

/// Preset -> optional scale rebuild -> key patches -> derived quantities.
fn derived(cli: &Cli) -> Result<DerivedParams> {
    let mut m = MaterialParams::preset(cli.preset.into());
    if let Some(lambda) = cli.lambda {
        m = m.with_lambda(lambda)?;
    }
    for patch in &cli.set {
        let (key, value) = patch
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {patch:?}"))?;
        let value: f64 = value
            .trim()
            .parse()
            .with_context(|| format!("--set {key}: invalid number {value:?}"))?;
        m.set(key.trim(), value)?;
    }
    Ok(m.derive()?)
}

fn out_path(cli: &Cli, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating output directory {}", cli.out.display()))?;
    Ok(cli.out.join(name))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn start_state(
    p: &DerivedParams,
    offset: Option<[f64; 3]>,
    offset_lambda: Option<[f64; 3]>,
) -> [f64; 3] {
    let d = match (offset, offset_lambda) {
        (Some(d), _) => d,
        (None, Some(dl)) => [dl[0] * p.lambda, dl[1] * p.lambda, dl[2] * p.lambda],
        (None, None) => [0.0; 3],
    };
    [
        p.s_minus[0] + d[0],
        p.s_minus[1] + d[1],
        p.s_minus[2] + d[2],
    ]
}

fn print_report(r: &SwitchingReport) {
    println!(
        "stage clock: expulsion [{:.6}, 0], transfer [0, {:.6}]",
        r.stage_times[0], r.stage_times[2]
    );
    println!(
        "final state ({:.8}, {:.8}, {:.8}), |u - s_plus| = {:.6e}",
        r.final_state[0], r.final_state[1], r.final_state[2], r.dist_to_s_plus
    );
    if r.r_offset > 0.0 {
        println!(
            "offset r = {:.6e}, allowed f r = {:.6e}  ->  success: {}",
            r.r_offset,
            r.f_factor * r.r_offset,
            r.success
        );
    } else {
        println!("offset r = 0, absolute criterion 1e-6  ->  success: {}", r.success);
    }
    println!(
        "psi drift = {:.3e}, max |u3 + k| during transfer = {:.4e}",
        r.psi_drift, r.max_u3_plus_k_during_transfer
    );
    println!(
        "control jump at handoff = {:.4}, limit-point gap = {:.3e}",
        r.beta_jump_at_zero, r.predicted_limit_dist
    );
    if let Some(ring) = r.post_ringing_u1 {
        println!("post-stage u1 peak-to-peak = {:.4e}", ring);
    }
    if let Some(t) = r.t_converged {
        println!("field norm below 1e-9 from t = {:.2}", t);
    }
}

fn cmd_plan(cli: &Cli, p: &DerivedParams, rho_e: f64, n_samples: usize) -> Result<()> {
    let plans = plan_switching(p, rho_e, n_samples)?;
    print_plan_summary(&plans, p);
    write_json(&out_path(cli, "plan.json")?, &plans)
}

fn print_plan_summary(plans: &SwitchingPlans, p: &DerivedParams) {
    let e = &plans.expulsion;
    let t = &plans.transfer;
    println!(
        "scenario: lambda = {}, k = {}, omega_cap = {}, alpha_t = {}",
        p.lambda, p.k, p.omega_cap, p.alpha_t
    );
    println!(
        "expulsion: T_e = {:.8} at beta_e_t = {}, endpoint u = ({:.8}, {:.8}, {:.8})",
        e.t_e, e.beta_e_t, e.u_end[0], e.u_end[1], e.u_end[2]
    );
    println!(
        "  certificate: r* = {:.4}, M1 = {:.4e}, M2 = {:.4e}, M_e = {:.4}, lambda_e = {:.3e}",
        e.thresholds.r_star, e.thresholds.m1, e.thresholds.m2, e.thresholds.m_e,
        e.thresholds.lambda_e
    );
    println!(
        "transfer: T_tr = {:.8}, normal coords X_a = {:.8}, X_b = {:.8}",
        t.t_tr, t.x_a, t.x_b
    );
    println!(
        "  certificate: M_tr = {:.4}, K_w = {:.4}, lambda_tr = {:.3e}, Theta = {:.4}",
        t.thresholds.m_tr, t.thresholds.k_w, t.thresholds.lambda_tr, t.thresholds.theta
    );
    println!(
        "  entry tube rho+ = {:.4}, certified exit radius = {:.4e}",
        t.rho_plus, t.rho_tr_minus
    );
    println!(
        "control: handoff jump = {:.4}, waveform window [{:.4}, {:.4}]",
        plans.control.jump_at_zero(),
        -plans.control.t_e,
        plans.control.t_tr
    );
}

fn cmd_expel(cli: &Cli, p: &DerivedParams, rho_e: f64, n_samples: usize) -> Result<()> {
    let plan = plan_expulsion(p, rho_e, n_samples)?;
    println!(
        "T_e = {:.8} at beta_e_t = {} (physical beta_e = {:.6})",
        plan.t_e, plan.beta_e_t, plan.beta_e
    );
    println!(
        "endpoint u = ({:.8}, {:.8}, {:.8}), linearized xi = ({:.6}, {:.6}, {:.6})",
        plan.u_end[0], plan.u_end[1], plan.u_end[2],
        plan.xi_end[0], plan.xi_end[1], plan.xi_end[2]
    );
    let th = &plan.thresholds;
    println!(
        "certificate (rho_e = {}): r* = {:.6}, M1 = {:.6e}, M2 = {:.6e}, M_e = {:.6}, lambda_e = {:.6e}",
        rho_e, th.r_star, th.m1, th.m2, th.m_e, th.lambda_e
    );
    if p.lambda <= th.lambda_e {
        println!("scale {} is inside the certified range", p.lambda);
    } else {
        println!(
            "scale {} exceeds the certified range (certificate closes below {:.3e})",
            p.lambda, th.lambda_e
        );
    }
    write_json(&out_path(cli, "expulsion.json")?, &plan)
}

fn cmd_transfer(cli: &Cli, p: &DerivedParams, start: Option<[f64; 2]>) -> Result<()> {
    let w0 = match start {
        Some(w) => w,
        None => {
            let e = plan_expulsion(p, 1.0, 400)?;
            [e.u_end[0], e.u_end[1]]
        }
    };
    let plan = plan_transfer(w0, p)?;
    println!(
        "start w = ({:.8}, {:.8}) -> T_tr = {:.8}",
        w0[0], w0[1], plan.t_tr
    );
    println!(
        "normal coords X_a = {:.8}, X_b = {:.8} (amplitude A_m = {:.8}, phase {:.8})",
        plan.x_a, plan.x_b, plan.a_m, plan.phi
    );
    let th = &plan.thresholds;
    println!(
        "certificate: M_tr = {:.6}, K_w = {:.6}, lambda_tr = {:.6e}, Theta = {:.6}",
        th.m_tr, th.k_w, th.lambda_tr, th.theta
    );
    println!(
        "entry tube rho+ = {:.6}, certified exit radius = {:.6e}",
        plan.rho_plus, plan.rho_tr_minus
    );
    write_json(&out_path(cli, "transfer.json")?, &plan)
}

fn cmd_attract(
    cli: &Cli,
    p: &DerivedParams,
    theta: f64,
    delta_a: f64,
    t_max: Option<f64>,
    integ: &Integrator,
) -> Result<()> {
    let spec = basin_spec(p);
    println!(
        "basin: W* = {:.6e}, disk radius = {:.6}, |delta_a| cap = {:.6}",
        spec.w_star, spec.r_sm, spec.delta_a_max
    );
    let u0 = boundary_point(theta, delta_a, p);
    println!(
        "start (translated) = ({:.8}, {:.8}, {:.8}) at delta_a = {}",
        u0[0], u0[1], u0[2], delta_a
    );
    let res = run_attraction(u0, p, t_max, integ)?;
    println!(
        "converged: {} (t = {:?}), largest Lyapunov increase = {:.3e}",
        res.converged, res.t_converged, res.max_w_increase
    );
    println!(
        "limit point gap = {:.3e}, |U_inf| = {:.6e}, within certified defect range: {:?}",
        res.limit_error,
        (res.u_infinity[0].powi(2) + res.u_infinity[1].powi(2) + res.u_infinity[2].powi(2))
            .sqrt(),
        res.within_lemma_range
    );
    write_json(&out_path(cli, "attract.json")?, &res)
}

fn cmd_switch(
    cli: &Cli,
    p: &DerivedParams,
    offset: Option<[f64; 3]>,
    offset_lambda: Option<[f64; 3]>,
    t_attract: Option<f64>,
    integ: &Integrator,
) -> Result<()> {
    let plans = plan_switching(p, 1.0, 400)?;
    let u0 = start_state(p, offset, offset_lambda);
    let (mut report, traj) = run_switching(u0, &plans, p, t_attract, integ)?;

    let csv = out_path(cli, "switch_run.csv")?;
    let rows = export_run_csv(&traj, &plans.control, &csv, cli.dt_export)?;
    println!("wrote {} ({} rows)", csv.display(), rows);
    report.control_samples = Some(csv.display().to_string());

    print_report(&report);
    export_report_json(&report, &out_path(cli, "switch_report.json")?)?;
    println!("wrote {}", cli.out.join("switch_report.json").display());
    Ok(())
}

fn cmd_stress(
    cli: &Cli,
    p: &DerivedParams,
    js: &[f64],
    offset: Option<[f64; 3]>,
    offset_lambda: Option<[f64; 3]>,
    t_attract: Option<f64>,
    integ: &Integrator,
) -> Result<()> {
    if js.is_empty() {
        bail!("stress needs at least one --j factor");
    }
    let plans = plan_switching(p, 1.0, 400)?;
    let u0 = start_state(p, offset, offset_lambda);
    for &j in js {
        let pair = stress_test(&plans, p, u0, j, t_attract, integ)?;
        println!("== timing factor j = {j} ==");
        println!(
            "expulsion window scaled: dist = {:.6e}, success = {}",
            pair.te_scaled.dist_to_s_plus, pair.te_scaled.success
        );
        println!(
            "waveform dilated:        dist = {:.6e}, success = {}",
            pair.dilated.dist_to_s_plus, pair.dilated.success
        );
        write_json(&out_path(cli, &format!("stress_j{j}.json"))?, &pair)?;
    }
    Ok(())
}

fn cmd_ballistic(
    cli: &Cli,
    p: &DerivedParams,
    beta_const: f64,
    t_on: f64,
    ring_window: f64,
    offset_lambda: [f64; 3],
    integ: &Integrator,
) -> Result<()> {
    let u0 = start_state(p, None, Some(offset_lambda));
    let (report, traj) = ballistic_baseline(u0, p, beta_const, t_on, ring_window, integ)?;
    println!(
        "pulse: beta = {beta_const} on [0, {t_on}], then off for {ring_window}"
    );
    println!(
        "final |u - s_plus| = {:.6e}, post-pulse u1 peak-to-peak = {:.6e}",
        report.dist_to_s_plus,
        report.post_ringing_u1.unwrap_or(f64::NAN)
    );
    let csv = out_path(cli, "ballistic_run.csv")?;
    let rows = export_trajectory_csv(
        &traj,
        &csv,
        cli.dt_export,
        |t| if t <= t_on { beta_const } else { 0.0 },
        |_| Stage::Free,
    )?;
    println!("wrote {} ({} rows)", csv.display(), rows);
    write_json(&out_path(cli, "ballistic_report.json")?, &report)
}

fn cmd_validate() -> Result<()> {
    let outcomes = run_all();
    let mut failures = 0;
    for o in &outcomes {
        let mark = if o.pass { "  ok  " } else { " FAIL " };
        println!("[{mark}] {:02} {:<38} {}", o.id, o.name, o.details);
        if !o.pass {
            failures += 1;
        }
    }
    println!("{} of {} checks passed", outcomes.len() - failures, outcomes.len());
    if failures > 0 {
        std::process::exit(1);
    }
    Ok(())
}
