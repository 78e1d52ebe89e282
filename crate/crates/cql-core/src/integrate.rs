//! Adaptive Dormand–Prince 5(4) integration with dense output.
//!
//! Hand-rolled rather than pulled from a solver crate so the pipeline can
//! guarantee: (a) bit-reproducible trajectories for fixed inputs, (b) steps
//! never straddle a control-stage boundary (each stage is integrated as its
//! own segment, so discontinuous waveforms are never sampled across their
//! jump), and (c) event localization on the dense interpolant.
//!
//! The tableau, error weights, dense-output coefficients and the PI step
//! controller follow the classic DOPRI5 implementation.

use serde::{Deserialize, Serialize};

use crate::dynamics::{norm, psi};
use crate::{Error, Result};

/// Which stage of the switching pipeline a sample belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Expulsion,
    Transfer,
    Attraction,
    /// Drift with no control and no stage semantics (baselines, probes).
    Free,
}

impl Stage {
    pub fn tag(&self) -> &'static str {
        match self {
            Stage::Expulsion => "EXPULSION",
            Stage::Transfer => "TRANSFER",
            Stage::Attraction => "ATTRACTION",
            Stage::Free => "FREE",
        }
    }
}

// Butcher tableau of the Dormand-Prince 5(4) pair.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Difference between the 5th- and embedded 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Dense-output weights (k2 unused).
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// One accepted step's quartic interpolant on `[t0, t0 + h]`.
#[derive(Clone, Debug)]
struct DenseSeg {
    t0: f64,
    h: f64,
    cont: [[f64; 3]; 5],
}

impl DenseSeg {
    /// Evaluate at fraction `theta` of the step.
    fn eval(&self, theta: f64) -> [f64; 3] {
        let s = theta;
        let s1 = 1.0 - theta;
        let c = &self.cont;
        let mut y = [0.0; 3];
        for i in 0..3 {
            y[i] = c[0][i] + s * (c[1][i] + s1 * (c[2][i] + s * (c[3][i] + s1 * c[4][i])));
        }
        y
    }
}

/// Time-stamped solution with per-sample control values and stage tags, a
/// piecewise-quartic dense interpolant, and conservation diagnostics.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    /// Accepted node times, strictly monotone.
    pub times: Vec<f64>,
    /// States at the nodes.
    pub states: Vec<[f64; 3]>,
    /// Control value at each node (zero unless a stage fills it in).
    pub beta_values: Vec<f64>,
    /// Stage tag at each node.
    pub stage_tags: Vec<Stage>,
    segs: Vec<DenseSeg>,
    /// Set when a stopping predicate halted the run before the end time.
    pub stop_time: Option<f64>,
}

impl Trajectory {
    fn new(t0: f64, y0: [f64; 3]) -> Self {
        Self {
            times: vec![t0],
            states: vec![y0],
            beta_values: vec![0.0],
            stage_tags: vec![Stage::Free],
            segs: Vec::new(),
            stop_time: None,
        }
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_state(&self) -> [f64; 3] {
        *self.states.last().unwrap()
    }

    /// Dense-output evaluation; `t` is clamped to the covered interval.
    pub fn sample(&self, t: f64) -> [f64; 3] {
        if self.segs.is_empty() {
            return self.states[0];
        }
        let fwd = self.end_time() >= self.start_time();
        // Locate the segment whose span contains t (nodes[i] .. nodes[i+1]).
        let mut lo = 0usize;
        let mut hi = self.segs.len() - 1;
        let before = |a: f64, b: f64| if fwd { a <= b } else { a >= b };
        if before(t, self.times[0]) {
            return self.states[0];
        }
        if before(self.end_time(), t) {
            return self.final_state();
        }
        while lo < hi {
            let mid = (lo + hi) / 2;
            if before(self.times[mid + 1], t) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let seg = &self.segs[lo];
        let theta = ((t - seg.t0) / seg.h).clamp(0.0, 1.0);
        seg.eval(theta)
    }

    /// Largest deviation of `psi = |u|^2` from its initial value over the
    /// accepted nodes — the conservation drift of the run.
    pub fn psi_drift(&self) -> f64 {
        let p0 = psi(self.states[0]);
        self.states
            .iter()
            .map(|s| (psi(*s) - p0).abs())
            .fold(0.0, f64::max)
    }

    /// Tag every node with a stage and fill the recorded control values.
    pub fn retag(&mut self, stage: Stage, mut beta_of_t: impl FnMut(f64) -> f64) {
        for (i, &t) in self.times.iter().enumerate() {
            self.stage_tags[i] = stage;
            self.beta_values[i] = beta_of_t(t);
        }
    }

    /// Append a continuation run. The first node of `next` must coincide
    /// with the last node of `self`; the duplicate node is dropped.
    pub fn append(&mut self, next: Trajectory) {
        assert!(
            (self.end_time() - next.start_time()).abs() < 1e-9,
            "appended trajectory must continue where this one ends"
        );
        self.times.extend_from_slice(&next.times[1..]);
        self.states.extend_from_slice(&next.states[1..]);
        self.beta_values.extend_from_slice(&next.beta_values[1..]);
        self.stage_tags.extend_from_slice(&next.stage_tags[1..]);
        self.segs.extend(next.segs);
        self.stop_time = next.stop_time;
    }
}

enum StopMode<'a> {
    None,
    /// Stateless predicate; the crossing is localized on the dense output.
    Bisect(&'a dyn Fn(f64, [f64; 3]) -> bool),
    /// Stateful node monitor; stops exactly at the accepted node.
    AtNode(&'a mut dyn FnMut(f64, [f64; 3]) -> bool),
}

/// Adaptive integrator configuration.
#[derive(Clone, Copy, Debug)]
pub struct Integrator {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step magnitude.
    pub max_step: f64,
    /// Hard cap on accepted + rejected steps, guarding runaway runs.
    pub max_steps: usize,
    /// Project each accepted state back onto the sphere of the initial
    /// radius. Off by default: the field is tangent, so drift is already at
    /// tolerance level, and projection perturbs the dense interpolant.
    pub renormalize: bool,
}

impl Default for Integrator {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: f64::INFINITY,
            max_steps: 100_000_000,
            renormalize: false,
        }
    }
}

impl Integrator {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }

    /// Integrate `dy/dt = f(t, y)` from `t0` to `t1` (either direction).
    pub fn integrate(
        &self,
        f: impl Fn(f64, [f64; 3]) -> [f64; 3],
        t0: f64,
        t1: f64,
        y0: [f64; 3],
    ) -> Result<Trajectory> {
        self.run(&f, t0, t1, y0, StopMode::None)
    }

    /// Integrate until `stop(t, y)` first becomes true, localizing the
    /// switching time to `1e-10` on the dense interpolant, or until `t1`.
    /// `trajectory.stop_time` records which happened.
    pub fn integrate_until(
        &self,
        f: impl Fn(f64, [f64; 3]) -> [f64; 3],
        t0: f64,
        t1: f64,
        y0: [f64; 3],
        stop: impl Fn(f64, [f64; 3]) -> bool,
    ) -> Result<Trajectory> {
        self.run(&f, t0, t1, y0, StopMode::Bisect(&stop))
    }

    /// Integrate with a stateful per-node monitor; the run halts at the
    /// first accepted node where the monitor returns true.
    pub fn integrate_monitored(
        &self,
        f: impl Fn(f64, [f64; 3]) -> [f64; 3],
        t0: f64,
        t1: f64,
        y0: [f64; 3],
        mut on_node: impl FnMut(f64, [f64; 3]) -> bool,
    ) -> Result<Trajectory> {
        self.run(&f, t0, t1, y0, StopMode::AtNode(&mut on_node))
    }

    fn run(
        &self,
        f: &dyn Fn(f64, [f64; 3]) -> [f64; 3],
        t0: f64,
        t1: f64,
        y0: [f64; 3],
        mut stop: StopMode<'_>,
    ) -> Result<Trajectory> {
        let mut traj = Trajectory::new(t0, y0);
        if let StopMode::Bisect(pred) = &stop {
            if pred(t0, y0) {
                traj.stop_time = Some(t0);
                return Ok(traj);
            }
        }
        if t0 == t1 {
            return Ok(traj);
        }
        let posneg = (t1 - t0).signum();
        let hmax = self.max_step.min((t1 - t0).abs());
        let target_norm = norm(y0);

        let sk = |y: &[f64; 3], z: &[f64; 3], i: usize| {
            self.atol + self.rtol * y[i].abs().max(z[i].abs())
        };

        let mut t = t0;
        let mut y = y0;
        let mut k1 = f(t, y);
        let mut h = self.initial_step(f, t, &y, &k1, hmax, posneg);

        // PI controller state.
        const BETA_PI: f64 = 0.04;
        const EXPO1: f64 = 0.2 - BETA_PI * 0.75;
        const SAFE: f64 = 0.9;
        const FACC1: f64 = 5.0; // 1 / fac1, fac1 = 0.2
        const FACC2: f64 = 0.1; // 1 / fac2, fac2 = 10
        let mut facold: f64 = 1e-4;
        let mut reject = false;
        let mut nsteps = 0usize;

        loop {
            if nsteps >= self.max_steps {
                return Err(Error::Integration {
                    message: format!("step limit {} exceeded", self.max_steps),
                    t,
                    state: y,
                });
            }
            nsteps += 1;

            if h.abs() < t.abs().max(1.0) * f64::EPSILON * 16.0 {
                return Err(Error::Integration {
                    message: format!("step size underflow (h = {h:e})"),
                    t,
                    state: y,
                });
            }

            // Never step past the segment end.
            let mut last = false;
            if (t + 1.01 * h - t1) * posneg > 0.0 {
                h = t1 - t;
                last = true;
            }

            // Stages. k[0] is the FSAL slope from the previous step.
            let mut k = [[0.0; 3]; 7];
            k[0] = k1;
            for s in 1..7 {
                let mut ys = y;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        for i in 0..3 {
                            ys[i] += h * a * kj[i];
                        }
                    }
                }
                k[s] = f(t + C[s] * h, ys);
            }
            // With this tableau k[6] is f(t + h, y_new): row 7 of A equals
            // the 5th-order weights.
            let mut ynew = y;
            for (j, kj) in k.iter().enumerate() {
                let a = A[6].get(j).copied().unwrap_or(0.0);
                if a != 0.0 {
                    for i in 0..3 {
                        ynew[i] += h * a * kj[i];
                    }
                }
            }
            let k7 = k[6];

            // Weighted RMS error estimate.
            let mut err2 = 0.0;
            for i in 0..3 {
                let mut e = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    e += E[j] * kj[i];
                }
                let w = h * e / sk(&y, &ynew, i);
                err2 += w * w;
            }
            let err = (err2 / 3.0).sqrt();

            let fac11 = err.powf(EXPO1);
            if err <= 1.0 {
                // Accept. Lund stabilization: damp with the previous step's
                // error before recording this one.
                let mut fac = fac11 / facold.powf(BETA_PI);
                fac = FACC2.max(FACC1.min(fac / SAFE));
                let mut hnew = h / fac;
                facold = err.max(1e-4);

                let ydiff = [ynew[0] - y[0], ynew[1] - y[1], ynew[2] - y[2]];
                let bspl = [
                    h * k[0][0] - ydiff[0],
                    h * k[0][1] - ydiff[1],
                    h * k[0][2] - ydiff[2],
                ];
                let mut cont4 = [0.0; 3];
                for i in 0..3 {
                    cont4[i] = ydiff[i] - h * k7[i] - bspl[i];
                }
                let mut cont5 = [0.0; 3];
                for i in 0..3 {
                    let mut d = 0.0;
                    for (j, kj) in k.iter().enumerate() {
                        d += D[j] * kj[i];
                    }
                    cont5[i] = h * d;
                }
                let seg = DenseSeg {
                    t0: t,
                    h,
                    cont: [y, ydiff, bspl, cont4, cont5],
                };

                let tnew = if last { t1 } else { t + h };
                let mut ystore = ynew;
                if self.renormalize {
                    let n = norm(ystore);
                    if n > 0.0 {
                        let s = target_norm / n;
                        for yi in &mut ystore {
                            *yi *= s;
                        }
                    }
                }

                // Stopping logic decides what node actually gets recorded.
                let mut halted = false;
                let mut node_t = tnew;
                let mut node_y = ystore;
                match &mut stop {
                    StopMode::None => {}
                    StopMode::Bisect(pred) => {
                        if pred(tnew, ystore) {
                            // Predicate is false at t (loop invariant): bisect
                            // the dense output for the earliest flip.
                            let (mut lo, mut hi) = (0.0f64, 1.0f64);
                            if pred(t, y) {
                                hi = 0.0; // flipped exactly at the node
                            }
                            while (hi - lo) * h.abs() > 1e-10 {
                                let mid = 0.5 * (lo + hi);
                                if pred(t + mid * h, seg.eval(mid)) {
                                    hi = mid;
                                } else {
                                    lo = mid;
                                }
                            }
                            node_t = t + hi * h;
                            node_y = seg.eval(hi);
                            halted = true;
                        }
                    }
                    StopMode::AtNode(mon) => {
                        if mon(tnew, ystore) {
                            halted = true;
                        }
                    }
                }

                traj.segs.push(seg);
                traj.times.push(node_t);
                traj.states.push(node_y);
                traj.beta_values.push(0.0);
                traj.stage_tags.push(Stage::Free);

                if halted {
                    traj.stop_time = Some(node_t);
                    return Ok(traj);
                }
                if last {
                    return Ok(traj);
                }

                t = tnew;
                y = ystore;
                k1 = if self.renormalize { f(t, y) } else { k7 };

                if hnew.abs() > hmax {
                    hnew = posneg * hmax;
                }
                if reject {
                    hnew = posneg * hnew.abs().min(h.abs());
                }
                reject = false;
                h = hnew;
            } else {
                // Reject: shrink without the PI memory term.
                h /= FACC1.min(fac11 / SAFE);
                reject = true;
            }
        }
    }

    /// Standard two-probe initial step-size guess.
    fn initial_step(
        &self,
        f: &dyn Fn(f64, [f64; 3]) -> [f64; 3],
        t: f64,
        y: &[f64; 3],
        f0: &[f64; 3],
        hmax: f64,
        posneg: f64,
    ) -> f64 {
        let sk = |i: usize| self.atol + self.rtol * y[i].abs();
        let mut dnf = 0.0;
        let mut dny = 0.0;
        for i in 0..3 {
            dnf += (f0[i] / sk(i)).powi(2);
            dny += (y[i] / sk(i)).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            (dny / dnf).sqrt() * 0.01
        };
        h = h.min(hmax);
        let h_signed = h * posneg;

        let y1 = [
            y[0] + h_signed * f0[0],
            y[1] + h_signed * f0[1],
            y[2] + h_signed * f0[2],
        ];
        let f1 = f(t + h_signed, y1);
        let mut der2 = 0.0;
        for i in 0..3 {
            der2 += ((f1[i] - f0[i]) / sk(i)).powi(2);
        }
        let der2 = der2.sqrt() / h;
        let der12 = der2.abs().max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 {
            (1e-6f64).max(h * 1e-3)
        } else {
            (0.01 / der12).powf(0.2)
        };
        (100.0 * h).min(h1).min(hmax) * posneg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_harmonic_oscillator() {
        // y'' = -y as a first-order system in (y, y', unused).
        let f = |_t: f64, y: [f64; 3]| [y[1], -y[0], 0.0];
        let ig = Integrator::with_tolerances(1e-12, 1e-14);
        let tr = ig.integrate(f, 0.0, 10.0, [1.0, 0.0, 0.0]).unwrap();
        let yf = tr.final_state();
        assert!((yf[0] - 10f64.cos()).abs() < 1e-10);
        assert!((yf[1] + 10f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn dense_output_matches_solution_between_nodes() {
        let f = |_t: f64, y: [f64; 3]| [y[1], -y[0], 0.0];
        let ig = Integrator::with_tolerances(1e-11, 1e-13);
        let tr = ig.integrate(f, 0.0, 6.0, [1.0, 0.0, 0.0]).unwrap();
        for i in 0..=600 {
            let t = 0.01 * i as f64;
            let y = tr.sample(t);
            assert!((y[0] - t.cos()).abs() < 1e-8, "dense error at t = {t}");
        }
    }

    #[test]
    fn backward_integration_recovers_initial_state() {
        let f = |_t: f64, y: [f64; 3]| [y[1], -y[0], 0.1 * y[2]];
        let ig = Integrator::with_tolerances(1e-12, 1e-14);
        let fwd = ig.integrate(f, 0.0, 5.0, [1.0, 0.0, 1.0]).unwrap();
        let back = ig.integrate(f, 5.0, 0.0, fwd.final_state()).unwrap();
        let y0 = back.final_state();
        assert!((y0[0] - 1.0).abs() < 1e-9);
        assert!((y0[1]).abs() < 1e-9);
        assert!((y0[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn event_stopping_is_localized() {
        // y' = 1; stop when y >= 2.5 starting from 0: event at t = 2.5.
        let f = |_t: f64, _y: [f64; 3]| [1.0, 0.0, 0.0];
        let ig = Integrator::default();
        let tr = ig
            .integrate_until(f, 0.0, 10.0, [0.0, 0.0, 0.0], |_t, y| y[0] >= 2.5)
            .unwrap();
        let ts = tr.stop_time.expect("must stop");
        assert!((ts - 2.5).abs() < 1e-9);
        assert!((tr.final_state()[0] - 2.5).abs() < 1e-9);
    }

    #[test]
    fn no_stop_leaves_stop_time_empty() {
        let f = |_t: f64, _y: [f64; 3]| [1.0, 0.0, 0.0];
        let tr = Integrator::default()
            .integrate_until(f, 0.0, 1.0, [0.0; 3], |_t, y| y[0] > 5.0)
            .unwrap();
        assert!(tr.stop_time.is_none());
        assert!((tr.end_time() - 1.0).abs() < 1e-14);
    }
}
