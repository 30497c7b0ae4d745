use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};
use std::time::{Duration, Instant};

use nalgebra::DVector;

use super::scenario::{Mode, PilotPolicy, Scenario};
use super::trace::{SimTrace, TraceRecord};
use crate::error::{Error, Result};
use crate::fcs::{anti_windup_update, command_filter, di_step, FcsConfig, FcsState, InversionModel};
use crate::harmonic::{assemble_lti, LtiModel};
use crate::llc::{clamp_command, control_margin, linearize_load, LlcModel, LoadLimiter, MpcConfig, MpcSolution};
use crate::plant::{linearize_to_ltp, step_plant, trim_plant, LtpModel, PlantState, SurrogateParams, TrimSolution};
use crate::reduction::{default_partition, residualize, Partition, ReducedLti};

/// Everything derived once per scenario: trim, on-board models, limiter, inversion model.
#[derive(Clone, Debug)]
pub struct Setup {
    pub params: SurrogateParams,
    pub trim: TrimSolution,
    pub ltp: LtpModel,
    pub lti: LtiModel,
    pub reduced: ReducedLti,
    pub limiter: LoadLimiter,
    pub inversion: InversionModel,
    pub fcs: FcsConfig,
    pub mpc: MpcConfig,
    /// Period-mean of the trim orbit.
    pub x_trim_mean: DVector<f64>,
}

impl Setup {
    pub fn build(sc: &Scenario) -> Result<Self> {
        sc.validate()?;
        let params = sc.plant()?.clone();
        let trim = trim_plant(&params)?;
        let ltp = linearize_to_ltp(&params, &trim)?;
        let lti = assemble_lti(&ltp, sc.harmonic_order, 0, sc.output_order)?;
        let partition = match &sc.slow_labels {
            Some(labels) => Partition::from_labels(&lti.state_index, labels)?,
            None => default_partition(&lti)?,
        };
        let reduced = residualize(&lti, &partition)?;
        let lin = linearize_load(&trim)?;
        let mpc = sc.mpc()?.clone();
        let load_label = params.output_labels[params.load_output].clone();
        let model = LlcModel::new(&mpc, &reduced, lin, trim.u_trim.clone(), &load_label)?;
        let limiter = LoadLimiter::new(model)?;
        let fcs = sc.fcs()?.clone();
        let inversion = InversionModel::from_reduced(&reduced, &fcs, trim.u_trim.clone())?;
        let n = trim.n_psi() as f64;
        let x_trim_mean = trim.x_samples.iter().fold(DVector::zeros(params.n_states()), |a, x| a + x) / n;
        Ok(Self {
            params,
            trim,
            ltp,
            lti,
            reduced,
            limiter,
            inversion,
            fcs,
            mpc,
            x_trim_mean,
        })
    }

    pub fn load_label(&self) -> &str {
        &self.params.output_labels[self.params.load_output]
    }

    pub fn state_index(&self, label: &str) -> Result<usize> {
        self.params
            .state_labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::MissingLabel(label.into()))
    }
}

/// 1/rev magnitude from a trapezoidal Fourier integral over exactly the most
/// recent rotor period. Samples are `(ψ unwrapped, y)`.
#[derive(Clone, Debug, Default)]
pub struct OneRevEstimator {
    buf: VecDeque<(f64, f64)>,
}

impl OneRevEstimator {
    pub fn push(&mut self, psi: f64, y: f64) {
        self.buf.push_back((psi, y));
        let start = psi - TAU;
        while self.buf.len() > 2 && self.buf[1].0 <= start {
            self.buf.pop_front();
        }
    }

    /// `(y_1c, y_1s)`; NaN until a full period has been seen.
    pub fn coefficients(&self) -> (f64, f64) {
        let Some(&(end, _)) = self.buf.back() else {
            return (f64::NAN, f64::NAN);
        };
        let start = end - TAU;
        if self.buf.len() < 3 || self.buf[0].0 > start + 1e-12 {
            return (f64::NAN, f64::NAN);
        }
        let (mut ic, mut is) = (0.0, 0.0);
        let mut prev: Option<(f64, f64)> = None;
        for &(p, y) in &self.buf {
            let cur = match prev {
                None => {
                    prev = Some((p, y));
                    continue;
                }
                Some((p0, y0)) if p0 < start => {
                    // cut the first interval at the window start
                    let f = (start - p0) / (p - p0);
                    (start, y0 + f * (y - y0))
                }
                Some(c) => c,
            };
            let (p0, y0) = cur;
            let h = p - p0;
            ic += 0.5 * h * (y0 * p0.cos() + y * p.cos());
            is += 0.5 * h * (y0 * p0.sin() + y * p.sin());
            prev = Some((p, y));
        }
        (ic / PI, is / PI)
    }

    pub fn magnitude(&self) -> f64 {
        let (c, s) = self.coefficients();
        c.hypot(s)
    }
}

/// Inputs of one frame beyond the plant state.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameInput {
    pub stick: Vec<f64>,
    pub y_max: f64,
    /// Treat this frame's solve as late and hold the previous margin.
    pub stale: bool,
    pub cue_on: bool,
}

/// Fixed-step closed loop: command filter, inversion, limiter, anti-windup, plant.
#[derive(Clone, Debug)]
pub struct ClosedLoop<'a> {
    setup: &'a Setup,
    mode: Mode,
    policy: PilotPolicy,
    delay: usize,
    cue_gain: f64,
    dt: f64,
    substeps: usize,
    plant: PlantState,
    fcs: FcsState,
    est: OneRevEstimator,
    psi_unwrapped: f64,
    u_prev: DVector<f64>,
    seen_ext: VecDeque<Option<DVector<f64>>>,
    last_sol: Option<MpcSolution>,
    deadline: Option<Duration>,
    frame: usize,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(setup: &'a Setup, sc: &Scenario) -> Result<Self> {
        let dt = setup.fcs.dt_ctrl;
        let substeps = sc.plant_substeps;
        let dtp = dt / substeps as f64;
        let p = &setup.params;
        let x0 = setup.trim.state_at(0.0);
        let mut est = OneRevEstimator::default();
        // one period of trim output ending at t = 0
        let back = (TAU / (p.omega * dtp)).ceil() as usize + 1;
        for j in (0..=back).rev() {
            let psi = -(j as f64) * p.omega * dtp;
            let y = p.output(&setup.trim.state_at(psi), &setup.trim.u_trim, psi)[p.load_output];
            est.push(psi, y);
        }
        Ok(Self {
            setup,
            mode: sc.mode,
            policy: sc.pilot.policy,
            delay: sc.pilot.delay_frames,
            cue_gain: sc.cue_gain,
            dt,
            substeps,
            plant: PlantState::new(x0, 0.0, p.omega),
            fcs: FcsState::default(),
            est,
            psi_unwrapped: 0.0,
            u_prev: setup.trim.u_trim.clone(),
            seen_ext: VecDeque::new(),
            last_sol: None,
            deadline: None,
            frame: 0,
        })
    }

    /// Solves slower than `d` count as late: the previous margin is held and the frame flagged stale.
    pub fn with_deadline(mut self, d: Duration) -> Self {
        self.deadline = Some(d);
        self
    }

    pub fn time(&self) -> f64 {
        self.frame as f64 * self.dt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn plant(&self) -> &PlantState {
        &self.plant
    }

    pub fn step(&mut self, input: &FrameInput) -> Result<TraceRecord> {
        let s = self.setup;
        let p = &s.params;
        let lim = &s.limiter.model;
        let nu = p.n_inputs();
        if input.stick.len() != nu {
            return Err(Error::Dimension(format!("{} stick values for {nu} axes", input.stick.len())));
        }
        let t = self.time();
        let x_meas = &self.plant.x - s.trim.state_at(self.plant.psi);

        let axis = s.inversion.axis;
        let cmd = command_filter(input.stick[axis], &s.fcs, &mut self.fcs, self.dt);
        let u_cmd = di_step(&s.fcs, &s.inversion, &mut self.fcs, &x_meas, &cmd, self.dt);

        let mut stale = input.stale;
        let sol = if input.y_max.is_finite() {
            let t0 = Instant::now();
            let fresh = s.limiter.solve(&x_meas, &self.u_prev, input.y_max)?;
            stale |= self.deadline.is_some_and(|d| t0.elapsed() > d);
            match (stale, self.last_sol.take()) {
                (true, Some(held)) => Some(held),
                _ => Some(fresh),
            }
        } else {
            None
        };
        self.last_sol = sol.clone();
        self.seen_ext.push_back(sol.as_ref().map(|v| v.u_ext.clone()));
        while self.seen_ext.len() > self.delay + 1 {
            self.seen_ext.pop_front();
        }

        let u_pilot = match (self.mode, self.policy) {
            (Mode::Cue, PilotPolicy::PerfectTracking) => {
                let seen = if self.seen_ext.len() == self.delay + 1 {
                    self.seen_ext.front().cloned().flatten()
                } else {
                    None
                };
                match seen {
                    Some(ext) => limit_toward(&u_cmd, &ext, lim),
                    None => u_cmd.clone(),
                }
            }
            _ => u_cmd.clone(),
        };
        let limited = match (self.mode, &sol) {
            (Mode::AutoLimit, Some(sol)) => clamp_command(&u_pilot, sol),
            _ => u_pilot.clone(),
        };
        let u_applied = DVector::from_fn(nu, |i, _| limited[i].clamp(s.mpc.u_min[i], s.mpc.u_max[i]));
        anti_windup_update(&s.fcs, &s.inversion, &mut self.fcs, &u_cmd, &u_applied, self.dt);

        let nan = || vec![f64::NAN; nu];
        let (u_ext, cm, valid, iters, kkt, status) = match &sol {
            Some(sol) => {
                let m = control_margin(sol, &self.u_prev);
                (
                    m.u_ext.as_slice().to_vec(),
                    m.cm.as_slice().to_vec(),
                    m.valid,
                    sol.iterations as f64,
                    sol.kkt_residual,
                    f64::from(sol.status.code()),
                )
            }
            None => (nan(), nan(), false, f64::NAN, f64::NAN, f64::NAN),
        };
        let du = &u_applied - &s.trim.u_trim;
        let predicted = lim.lin.a + lim.ell_c.dot(&x_meas) + lim.ell_d.dot(&du);
        let rec = TraceRecord {
            t,
            psi: self.plant.psi,
            x: self.plant.x.as_slice().to_vec(),
            stick: input.stick.clone(),
            u_cmd: u_cmd.as_slice().to_vec(),
            u_pilot: u_pilot.as_slice().to_vec(),
            u_pilot_prev: self.u_prev.as_slice().to_vec(),
            cue_height: self.cue_gain * cm[axis],
            u_ext,
            cm,
            u_applied: u_applied.as_slice().to_vec(),
            y_1rev_exact: self.est.magnitude(),
            y_1rev_predicted: predicted,
            y_max: input.y_max,
            cmd: cmd.value,
            cmd_rate: cmd.rate,
            integrator: self.fcs.integrator,
            tracking_error: self.fcs.error,
            qp_iterations: iters,
            kkt_residual: kkt,
            qp_status: status,
            margin_valid: valid,
            stale,
            cue_on: input.cue_on,
        };

        let dtp = self.dt / self.substeps as f64;
        for _ in 0..self.substeps {
            self.plant = step_plant(p, &self.plant, &u_applied, dtp)?;
            self.psi_unwrapped += p.omega * dtp;
            let y = p.output(&self.plant.x, &u_applied, self.plant.psi)[p.load_output];
            self.est.push(self.psi_unwrapped, y);
        }
        self.u_prev = u_applied;
        self.frame += 1;
        Ok(rec)
    }
}

/// Caps `u` at `ext` on the limiter's axes in the load-increasing direction.
fn limit_toward(u: &DVector<f64>, ext: &DVector<f64>, model: &LlcModel) -> DVector<f64> {
    let mut out = u.clone();
    for &a in &model.controlled {
        out[a] = if model.direction[a] > 0.0 {
            u[a].min(ext[a])
        } else {
            u[a].max(ext[a])
        };
    }
    out
}

/// Runs the scenario's script for its full duration.
pub fn run_batch(sc: &Scenario) -> Result<SimTrace> {
    let setup = Setup::build(sc)?;
    run_with_setup(&setup, sc)
}

/// Runs `sc`'s script against a prebuilt setup; the plant, FCS and limiter
/// configuration (including `y_max`) come from `setup`.
pub fn run_with_setup(setup: &Setup, sc: &Scenario) -> Result<SimTrace> {
    let labels = &setup.params.input_labels;
    let dt = setup.fcs.dt_ctrl;
    let inputs: Vec<FrameInput> = (0..sc.n_frames()?)
        .map(|k| FrameInput {
            stick: sc.stick_at(k as f64 * dt, labels),
            y_max: setup.mpc.y_max,
            stale: false,
            cue_on: sc.mode == Mode::Cue,
        })
        .collect();
    run_inputs(setup, sc, &inputs)
}

/// Runs recorded per-frame inputs, e.g. a logged real-time session.
pub fn run_inputs(setup: &Setup, sc: &Scenario, inputs: &[FrameInput]) -> Result<SimTrace> {
    let mut lp = ClosedLoop::new(setup, sc)?;
    let mut trace = SimTrace::new(setup.params.state_labels.clone(), setup.params.input_labels.clone());
    trace.records.reserve(inputs.len());
    for inp in inputs {
        trace.records.push(lp.step(inp)?);
    }
    Ok(trace)
}

/// Re-runs the inputs recorded in `trace`.
pub fn replay(setup: &Setup, sc: &Scenario, trace: &SimTrace) -> Result<SimTrace> {
    let inputs: Vec<FrameInput> = trace
        .records
        .iter()
        .map(|r| FrameInput {
            stick: r.stick.clone(),
            y_max: r.y_max,
            stale: r.stale,
            cue_on: r.cue_on,
        })
        .collect();
    run_inputs(setup, sc, &inputs)
}

/// Headline numbers of a trace.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct TraceSummary {
    pub peak_load: f64,
    /// Fraction of frames with `y_1rev_exact ≤ 1.05·y_max`.
    pub within_105: f64,
    pub peak_attitude: f64,
    /// First time the attitude deviation reaches 98% of `target`; NaN if never.
    pub t_reach: f64,
    pub min_cm: f64,
    pub max_kkt: f64,
    pub mean_qp_iterations: f64,
}

pub fn summarize(trace: &SimTrace, setup: &Setup, attitude_target: f64) -> Result<TraceSummary> {
    let th_label = &setup.fcs.attitude_state;
    let base = setup.x_trim_mean[setup.state_index(th_label)?];
    let ti = trace.state_index(th_label)?;
    let axis = setup.inversion.axis;
    let loads: Vec<f64> = trace.records.iter().map(|r| r.y_1rev_exact).collect();
    let peak_load = loads.iter().copied().fold(f64::NAN, f64::max);
    let within = trace
        .records
        .iter()
        .filter(|r| !r.y_max.is_finite() || r.y_1rev_exact <= 1.05 * r.y_max)
        .count() as f64
        / trace.len().max(1) as f64;
    let att: Vec<f64> = trace.records.iter().map(|r| r.x[ti] - base).collect();
    let peak_attitude = att.iter().copied().fold(f64::NAN, f64::max);
    let t_reach = trace
        .records
        .iter()
        .zip(&att)
        .find(|(_, a)| **a >= 0.98 * attitude_target)
        .map_or(f64::NAN, |(r, _)| r.t);
    let min_cm = trace.records.iter().map(|r| r.cm[axis]).fold(f64::NAN, f64::min);
    let max_kkt = trace.records.iter().map(|r| r.kkt_residual).fold(f64::NAN, f64::max);
    let iters: Vec<f64> = trace.records.iter().map(|r| r.qp_iterations).filter(|v| v.is_finite()).collect();
    let mean_qp_iterations = iters.iter().sum::<f64>() / iters.len().max(1) as f64;
    Ok(TraceSummary {
        peak_load,
        within_105: within,
        peak_attitude,
        t_reach,
        min_cm,
        max_kkt,
        mean_qp_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feed(est: &mut OneRevEstimator, dpsi: f64, until: f64, f: impl Fn(f64) -> f64) {
        let mut psi = -TAU - dpsi;
        while psi <= until {
            est.push(psi, f(psi));
            psi += dpsi;
        }
    }

    #[test]
    fn recovers_first_harmonic_with_unaligned_samples() {
        let mut est = OneRevEstimator::default();
        // 93.1 samples per period so windows never align with the grid
        let dpsi = TAU / 93.1;
        feed(&mut est, dpsi, 17.3, |p| 120.0 + 300.0 * p.cos() + 400.0 * p.sin() + 30.0 * (2.0 * p).cos() - 8.0 * (3.0 * p).sin());
        let (c, s) = est.coefficients();
        assert!((c - 300.0).abs() < 0.3 && (s - 400.0).abs() < 0.3, "{c} {s}");
        assert!((est.magnitude() - 500.0).abs() < 0.3);
    }

    #[test]
    fn converges_at_second_order() {
        let err = |n: f64| {
            let mut est = OneRevEstimator::default();
            feed(&mut est, TAU / n, 5.0, |p| 3.0 * p.cos() + (2.0 * p).sin());
            (est.magnitude() - 3.0).abs()
        };
        let (e1, e2) = (err(50.3), err(100.6));
        assert!(e2 < e1 / 3.0, "{e1} {e2}");
    }

    #[test]
    fn undefined_before_a_full_period() {
        let mut est = OneRevEstimator::default();
        for k in 0..10 {
            est.push(k as f64 * 0.1, 1.0);
        }
        assert!(est.magnitude().is_nan());
    }

    #[test]
    fn window_keeps_one_period() {
        let mut est = OneRevEstimator::default();
        feed(&mut est, 0.05, 40.0, |p| p.sin());
        assert!(est.buf.len() <= (TAU / 0.05).ceil() as usize + 2);
    }
}
