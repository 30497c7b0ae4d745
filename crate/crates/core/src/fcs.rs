//! Pitch-axis flight controller: command filter, dynamic inversion with
//! error-side PID, and back-calculation anti-windup.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduction::ReducedLti;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseType {
    /// Attitude command, attitude hold.
    Acah,
    /// Rate command, attitude hold.
    Rcah,
    /// Stick mechanically linked to the control: `u = u_trim + gain·stick`.
    Direct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FcsConfig {
    pub response_type: ResponseType,
    /// Input axis driven by the controller.
    pub axis: String,
    /// deg per % (ACAH), deg/s per % (RCAH), % per % (direct).
    pub stick_gain: f64,
    /// ACAH second-order filter, rad/s.
    pub natural_frequency: f64,
    pub damping: f64,
    /// RCAH first-order filter, s.
    pub rate_time_constant: f64,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Derivative rolloff as a multiple of the command-filter bandwidth.
    pub derivative_rolloff: f64,
    /// Back-calculation gain; 0 disables anti-windup.
    pub anti_windup_gain: f64,
    pub dt_ctrl: f64,
    pub attitude_state: String,
    pub rate_state: String,
}

impl Default for FcsConfig {
    fn default() -> Self {
        Self {
            response_type: ResponseType::Acah,
            axis: "lon".into(),
            stick_gain: 1.0,
            natural_frequency: 2.0,
            damping: 0.9,
            rate_time_constant: 0.3,
            kp: 16.0,
            ki: 8.0,
            kd: 8.0,
            derivative_rolloff: 10.0,
            anti_windup_gain: 0.2,
            dt_ctrl: 0.01,
            attitude_state: "theta".into(),
            rate_state: "q".into(),
        }
    }
}

impl FcsConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.stick_gain,
            self.natural_frequency,
            self.damping,
            self.rate_time_constant,
            self.kp,
            self.ki,
            self.kd,
            self.derivative_rolloff,
            self.anti_windup_gain,
            self.dt_ctrl,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("FCS gains must be finite".into()));
        }
        if self.anti_windup_gain < 0.0 {
            return Err(Error::InvalidParam("anti_windup_gain must be >= 0".into()));
        }
        if !(self.dt_ctrl > 0.0 && self.natural_frequency > 0.0 && self.rate_time_constant > 0.0 && self.derivative_rolloff > 0.0) {
            return Err(Error::InvalidParam("dt_ctrl, filter parameters and rolloff must be > 0".into()));
        }
        Ok(())
    }

    fn bandwidth(&self) -> f64 {
        match self.response_type {
            ResponseType::Rcah => 1.0 / self.rate_time_constant,
            _ => self.natural_frequency,
        }
    }
}

/// Inversion model taken from the reduced on-board model at trim.
#[derive(Clone, Debug, PartialEq)]
pub struct InversionModel {
    /// Row of `Â` for the rate state (`A_FC`).
    pub a_row: DVector<f64>,
    /// Row of `B̂` for the rate state (`B_FC`).
    pub b_row: DVector<f64>,
    pub axis: usize,
    pub rate_index: usize,
    pub attitude_index: usize,
    pub u_trim: DVector<f64>,
}

impl InversionModel {
    pub fn from_reduced(reduced: &ReducedLti, cfg: &FcsConfig, u_trim: DVector<f64>) -> Result<Self> {
        let inputs = reduced.input_index.base_labels();
        let axis = inputs
            .iter()
            .position(|l| *l == cfg.axis)
            .ok_or_else(|| Error::MissingLabel(cfg.axis.clone()))?;
        let rate_index = reduced.state_position(&cfg.rate_state)?;
        let attitude_index = reduced.state_position(&cfg.attitude_state)?;
        let a_row = reduced.a_hat.row(rate_index).transpose();
        let b_row = reduced.b_hat.row(rate_index).columns(0, inputs.len()).transpose();
        if b_row[axis].abs() < 1e-9 {
            return Err(Error::Singular(format!(
                "control effectiveness of {} on {} is zero",
                cfg.axis, cfg.rate_state
            )));
        }
        Ok(Self {
            a_row,
            b_row,
            axis,
            rate_index,
            attitude_index,
            u_trim,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FcsState {
    /// Filtered command (deg or deg/s).
    pub cmd: f64,
    /// Its rate.
    pub cmd_rate: f64,
    pub integrator: f64,
    pub deriv: f64,
    pub prev_error: Option<f64>,
    pub error: f64,
}

impl FcsState {
    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// Filtered command: value, first and second derivative.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Command {
    pub value: f64,
    pub rate: f64,
    pub accel: f64,
}

pub fn command_filter(stick: f64, cfg: &FcsConfig, state: &mut FcsState, dt: f64) -> Command {
    let target = cfg.stick_gain * stick;
    match cfg.response_type {
        ResponseType::Acah => {
            let (wn, z) = (cfg.natural_frequency, cfg.damping);
            let accel = wn * wn * (target - state.cmd) - 2.0 * z * wn * state.cmd_rate;
            state.cmd_rate += dt * accel;
            state.cmd += dt * state.cmd_rate;
            Command {
                value: state.cmd,
                rate: state.cmd_rate,
                accel,
            }
        }
        ResponseType::Rcah => {
            let tau = cfg.rate_time_constant;
            let before = state.cmd_rate;
            state.cmd += (1.0 - (-dt / tau).exp()) * (target - state.cmd);
            state.cmd_rate = (target - state.cmd) / tau;
            Command {
                value: state.cmd,
                rate: state.cmd_rate,
                accel: (state.cmd_rate - before) / dt,
            }
        }
        ResponseType::Direct => {
            state.cmd = target;
            state.cmd_rate = 0.0;
            Command {
                value: target,
                rate: 0.0,
                accel: 0.0,
            }
        }
    }
}

/// Control command from the slow-state perturbation `x_meas`.
pub fn di_step(cfg: &FcsConfig, inv: &InversionModel, state: &mut FcsState, x_meas: &DVector<f64>, cmd: &Command, dt: f64) -> DVector<f64> {
    let mut u = inv.u_trim.clone();
    if cfg.response_type == ResponseType::Direct {
        u[inv.axis] += cmd.value;
        return u;
    }
    let (e, ff) = match cfg.response_type {
        ResponseType::Acah => (cmd.value - x_meas[inv.attitude_index], cmd.accel),
        _ => (cmd.value - x_meas[inv.rate_index], cmd.rate),
    };
    let raw = state.prev_error.map_or(0.0, |p| (e - p) / dt);
    let wd = cfg.derivative_rolloff * cfg.bandwidth();
    let alpha = dt * wd / (1.0 + dt * wd);
    state.deriv += alpha * (raw - state.deriv);
    state.prev_error = Some(e);
    state.error = e;
    state.integrator += dt * e;
    let nu = ff + cfg.kp * e + cfg.ki * state.integrator + cfg.kd * state.deriv;
    let du = (nu - inv.a_row.dot(x_meas)) / inv.b_row[inv.axis];
    u[inv.axis] += du;
    u
}

/// Back-calculation: removes `k_aw·(u_cmd − u_applied)·dt` from the integrator.
pub fn anti_windup_update(cfg: &FcsConfig, inv: &InversionModel, state: &mut FcsState, u_cmd: &DVector<f64>, u_applied: &DVector<f64>, dt: f64) {
    let excess = u_cmd[inv.axis] - u_applied[inv.axis];
    if excess != 0.0 && cfg.response_type != ResponseType::Direct {
        state.integrator -= dt * cfg.anti_windup_gain * excess;
    }
}
