//! Surrogate truth plant: a periodic (optionally mildly nonlinear) rotorcraft-like
//! ODE with one pitch-link load output, plus trim and periodic linearization.

mod ltp;
mod periodic;
mod trim;

pub use ltp::{floquet_multipliers, linearize_to_ltp, linearize_to_ltp_with, monodromy, LinearizeOptions, LtpModel};
pub use periodic::{HarmonicPair, PeriodicMatrix};
pub use trim::{trim_plant, trim_plant_from, trim_plant_with, TrimOptions, TrimSolution};

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PLANT_SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_STATE_LABELS: [&str; 10] = [
    "vx", "vy", "vz", "p", "q", "r", "theta", "phi", "beta_1c", "beta_1s",
];
pub const DEFAULT_INPUT_LABELS: [&str; 4] = ["lon", "lat", "col", "ped"];

const D2R: f64 = PI / 180.0;

/// Configuration of the surrogate plant.
///
/// Dynamics: `ẋ = F(ψ)x + G(ψ)(u − u_neutral) + k·q(x)`,
/// output: `y = P(ψ)x + R(ψ)(u − u_neutral) + bias(ψ)` where the bias is the
/// trigonometric series `load_trim_harmonics` added to the load output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub schema_version: u32,
    pub n_body: usize,
    pub n_rotor: usize,
    /// Rotor speed, rad/s.
    pub omega: f64,
    pub fourier_order: usize,
    pub state_labels: Vec<String>,
    pub input_labels: Vec<String>,
    pub output_labels: Vec<String>,
    #[serde(rename = "F")]
    pub f: PeriodicMatrix,
    #[serde(rename = "G")]
    pub g: PeriodicMatrix,
    #[serde(rename = "P")]
    pub p: PeriodicMatrix,
    #[serde(rename = "R")]
    pub r: PeriodicMatrix,
    #[serde(default)]
    pub nonlinearity_gain: f64,
    /// `[y0, y1c, y1s, y2c, y2s, ...]`, lbs.
    #[serde(default)]
    pub load_trim_harmonics: Vec<f64>,
    #[serde(default)]
    pub load_output: usize,
    /// Control setting (%) at which the input matrices contribute nothing.
    pub control_neutral: Vec<f64>,
    /// Trim control, %.
    pub u_trim: Vec<f64>,
    /// Output harmonic order retained in the trim solution.
    #[serde(default = "default_output_order")]
    pub output_order: usize,
}

fn default_output_order() -> usize {
    8
}

impl Default for SurrogateParams {
    fn default() -> Self {
        default_surrogate()
    }
}

/// Default 10-state surrogate: 8 body states plus first-harmonic flapping.
pub fn default_surrogate() -> SurrogateParams {
    let (ns, nu) = (10, 4);
    let mut f = PeriodicMatrix::zeros(ns, ns, 2);
    {
        let m = &mut f.constant;
        // longitudinal: vx vz q theta beta_1c
        m[(0, 0)] = -0.3;
        m[(0, 2)] = 0.02;
        m[(0, 6)] = -0.562;
        m[(0, 8)] = -0.4;
        m[(2, 0)] = -0.05;
        m[(2, 2)] = -0.7;
        m[(2, 4)] = 0.5;
        m[(4, 0)] = 0.01;
        m[(4, 2)] = -0.02;
        m[(4, 4)] = -1.2;
        m[(4, 6)] = -0.5;
        m[(4, 8)] = 4.0;
        m[(6, 4)] = 1.0;
        m[(8, 4)] = -0.08;
        m[(8, 8)] = -12.0;
        m[(8, 9)] = 3.0;
        // lateral: vy p r phi beta_1s
        m[(1, 1)] = -0.3;
        m[(1, 7)] = 0.562;
        m[(1, 9)] = 0.4;
        m[(1, 5)] = -0.3;
        m[(3, 1)] = -0.02;
        m[(3, 3)] = -2.5;
        m[(3, 5)] = 0.2;
        m[(3, 9)] = 6.0;
        m[(5, 1)] = 0.01;
        m[(5, 3)] = -0.1;
        m[(5, 5)] = -0.6;
        m[(7, 3)] = 1.0;
        m[(7, 7)] = -0.3;
        m[(9, 3)] = -0.08;
        m[(9, 9)] = -12.0;
        m[(9, 8)] = -3.0;
    }
    {
        let h = &mut f.harmonics[0];
        h.cos[(8, 8)] = 1.5;
        h.sin[(8, 9)] = 1.2;
        h.cos[(9, 9)] = 1.5;
        h.sin[(9, 8)] = -1.2;
        h.cos[(8, 4)] = 0.05;
        h.sin[(9, 3)] = 0.05;
        h.sin[(4, 8)] = 0.8;
        h.cos[(3, 9)] = 0.8;
        h.cos[(2, 8)] = 0.3;
        h.sin[(2, 9)] = 0.3;
        let h = &mut f.harmonics[1];
        h.cos[(8, 8)] = 0.8;
        h.sin[(8, 9)] = 0.6;
        h.cos[(9, 9)] = 0.8;
        h.sin[(9, 8)] = -0.6;
        h.sin[(4, 8)] = 0.3;
        h.cos[(3, 9)] = 0.3;
    }
    let mut g = PeriodicMatrix::zeros(ns, nu, 2);
    {
        let m = &mut g.constant;
        m[(0, 0)] = 0.02;
        m[(2, 2)] = -0.6;
        m[(4, 0)] = 2.0;
        m[(4, 1)] = 0.02;
        m[(3, 1)] = 0.6;
        m[(5, 3)] = 0.3;
        m[(8, 0)] = 0.9;
        m[(9, 1)] = 0.9;
        g.harmonics[0].cos[(8, 0)] = 0.15;
        g.harmonics[0].sin[(9, 1)] = 0.15;
        g.harmonics[0].sin[(8, 2)] = 0.1;
        g.harmonics[1].cos[(8, 0)] = 0.05;
        g.harmonics[1].sin[(9, 1)] = 0.05;
    }
    let mut p = PeriodicMatrix::zeros(1, ns, 2);
    p.constant[(0, 2)] = 2.0;
    p.harmonics[0].cos[(0, 8)] = 6.0;
    p.harmonics[0].cos[(0, 4)] = 1.2;
    p.harmonics[0].cos[(0, 3)] = -0.3;
    p.harmonics[0].sin[(0, 9)] = 6.0;
    p.harmonics[0].sin[(0, 4)] = 1.6;
    p.harmonics[0].sin[(0, 3)] = 0.3;
    p.harmonics[1].cos[(0, 8)] = 1.0;
    p.harmonics[1].sin[(0, 9)] = 1.0;
    let mut r = PeriodicMatrix::zeros(1, nu, 1);
    r.constant[(0, 2)] = 1.0;
    r.harmonics[0].cos[(0, 0)] = 1.5;
    r.harmonics[0].sin[(0, 0)] = 2.0;
    r.harmonics[0].cos[(0, 1)] = 0.5;
    r.harmonics[0].sin[(0, 1)] = -0.5;

    SurrogateParams {
        schema_version: PLANT_SCHEMA_VERSION,
        n_body: 8,
        n_rotor: 2,
        omega: 27.0,
        fourier_order: 2,
        state_labels: DEFAULT_STATE_LABELS.iter().map(|s| s.to_string()).collect(),
        input_labels: DEFAULT_INPUT_LABELS.iter().map(|s| s.to_string()).collect(),
        output_labels: vec!["pitch_link_load".into()],
        f,
        g,
        p,
        r,
        nonlinearity_gain: 0.0,
        load_trim_harmonics: vec![120.0, 180.0, 240.0],
        load_output: 0,
        control_neutral: vec![50.0; nu],
        u_trim: vec![53.0, 48.0, 54.0, 51.0],
        output_order: 8,
    }
}

impl SurrogateParams {
    pub fn n_states(&self) -> usize {
        self.n_body + self.n_rotor
    }

    pub fn n_inputs(&self) -> usize {
        self.input_labels.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.output_labels.len()
    }

    pub fn period(&self) -> f64 {
        TAU / self.omega
    }

    pub fn u_trim_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.u_trim)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != PLANT_SCHEMA_VERSION {
            return Err(Error::Schema {
                found: self.schema_version,
                expected: PLANT_SCHEMA_VERSION,
            });
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::InvalidParam(format!("omega must be > 0, got {}", self.omega)));
        }
        if !(self.nonlinearity_gain.is_finite() && self.nonlinearity_gain >= 0.0) {
            return Err(Error::InvalidParam("nonlinearity_gain must be finite and >= 0".into()));
        }
        let n = self.n_body.checked_add(self.n_rotor).ok_or_else(|| {
            Error::InvalidParam("state count overflows".into())
        })?;
        if n == 0 {
            return Err(Error::InvalidParam("plant needs at least one state".into()));
        }
        let (m, ny) = (self.n_inputs(), self.n_outputs());
        if self.state_labels.len() != n {
            return Err(Error::Dimension(format!(
                "{} state labels for {n} states",
                self.state_labels.len()
            )));
        }
        self.f.validate(n, n, "F")?;
        self.g.validate(n, m, "G")?;
        self.p.validate(ny, n, "P")?;
        self.r.validate(ny, m, "R")?;
        for (name, t) in [("F", &self.f), ("G", &self.g), ("P", &self.p), ("R", &self.r)] {
            if t.order() > self.fourier_order {
                return Err(Error::InvalidParam(format!(
                    "{name} has harmonics up to {} but fourier_order is {}",
                    t.order(),
                    self.fourier_order
                )));
            }
        }
        if self.control_neutral.len() != m || self.u_trim.len() != m {
            return Err(Error::Dimension(format!(
                "control_neutral/u_trim must have {m} entries"
            )));
        }
        if ny > 0 && self.load_output >= ny {
            return Err(Error::InvalidParam(format!(
                "load_output {} out of range for {ny} outputs",
                self.load_output
            )));
        }
        if self
            .control_neutral
            .iter()
            .chain(&self.u_trim)
            .chain(&self.load_trim_harmonics)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidParam("non-finite control or bias entry".into()));
        }
        Ok(())
    }

    /// Quadratic state coupling, Coriolis-like, acting on the first six body
    /// states (velocities then rates). Zero for plants with fewer body states.
    pub fn coupling(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut q = DVector::zeros(x.len());
        if self.n_body < 6 {
            return q;
        }
        let (vx, vy, vz, p, qr, r) = (x[0], x[1], x[2], x[3], x[4], x[5]);
        q[0] = (r * vy - qr * vz) * D2R;
        q[1] = (p * vz - r * vx) * D2R;
        q[2] = (qr * vx - p * vy) * D2R;
        q[3] = -0.5 * qr * r * D2R;
        q[4] = 0.3 * p * r * D2R;
        q[5] = -0.2 * p * qr * D2R;
        q
    }

    pub fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>, psi: f64) -> DVector<f64> {
        let du = u - DVector::from_column_slice(&self.control_neutral);
        let mut dx = self.f.apply(psi, x) + self.g.apply(psi, &du);
        if self.nonlinearity_gain != 0.0 {
            dx.axpy(self.nonlinearity_gain, &self.coupling(x), 1.0);
        }
        dx
    }

    /// Output bias series for the load output at azimuth `psi`.
    pub fn bias(&self, psi: f64) -> f64 {
        let h = &self.load_trim_harmonics;
        let mut v = h.first().copied().unwrap_or(0.0);
        for (i, pair) in h[h.len().min(1)..].chunks(2).enumerate() {
            let a = (i + 1) as f64 * psi;
            v += pair[0] * a.cos() + pair.get(1).copied().unwrap_or(0.0) * a.sin();
        }
        v
    }

    pub fn output(&self, x: &DVector<f64>, u: &DVector<f64>, psi: f64) -> DVector<f64> {
        let du = u - DVector::from_column_slice(&self.control_neutral);
        let mut y = self.p.apply(psi, x) + self.r.apply(psi, &du);
        if self.load_output < y.len() {
            y[self.load_output] += self.bias(psi);
        }
        y
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantState {
    pub x: DVector<f64>,
    /// Azimuth in `[0, 2π)`.
    pub psi: f64,
    pub t: f64,
}

impl PlantState {
    pub fn new(x: DVector<f64>, t: f64, omega: f64) -> Self {
        Self {
            x,
            psi: (omega * t).rem_euclid(TAU),
            t,
        }
    }
}

/// One RK4 step with the control held over the step.
pub fn step_plant(params: &SurrogateParams, s: &PlantState, u: &DVector<f64>, dt: f64) -> Result<PlantState> {
    let limit = TAU / (20.0 * params.omega);
    if !(dt > 0.0 && dt <= limit * (1.0 + 1e-12)) {
        return Err(Error::InvalidParam(format!(
            "dt = {dt} must lie in (0, {limit}] to resolve the rotor period"
        )));
    }
    if s.x.len() != params.n_states() || u.len() != params.n_inputs() {
        return Err(Error::Dimension(format!(
            "state/control lengths {}/{} do not match plant {}/{}",
            s.x.len(),
            u.len(),
            params.n_states(),
            params.n_inputs()
        )));
    }
    let x = rk4(params, &s.x, u, s.t, dt);
    let t = s.t + dt;
    if let Some(index) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            t,
            index,
            label: params.state_labels[index].clone(),
            value: x[index],
        });
    }
    Ok(PlantState::new(x, t, params.omega))
}

pub(crate) fn rk4(params: &SurrogateParams, x: &DVector<f64>, u: &DVector<f64>, t: f64, dt: f64) -> DVector<f64> {
    let w = params.omega;
    let psi = w * t;
    let k1 = params.rhs(x, u, psi);
    let k2 = params.rhs(&(x + &k1 * (0.5 * dt)), u, psi + 0.5 * w * dt);
    let k3 = params.rhs(&(x + &k2 * (0.5 * dt)), u, psi + 0.5 * w * dt);
    let k4 = params.rhs(&(x + &k3 * dt), u, psi + w * dt);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Mean-equilibrium guess `−F0⁻¹ G0 (u − u_neutral)`; zero when `F0` is singular.
pub(crate) fn mean_equilibrium(params: &SurrogateParams, u: &DVector<f64>) -> DVector<f64> {
    let du = u - DVector::from_column_slice(&params.control_neutral);
    let rhs = -(&params.g.constant * du);
    params
        .f
        .constant
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .unwrap_or_else(|| DVector::zeros(params.n_states()))
}

/// A purely linear plant (no bias, zero neutral and trim controls, generic labels).
pub fn linear_params(f: PeriodicMatrix, g: PeriodicMatrix, p: PeriodicMatrix, r: PeriodicMatrix, omega: f64) -> SurrogateParams {
    let n = f.shape().0;
    let m = g.shape().1;
    let ny = p.shape().0;
    let order = [f.order(), g.order(), p.order(), r.order()].into_iter().max().unwrap_or(0);
    SurrogateParams {
        schema_version: PLANT_SCHEMA_VERSION,
        n_body: n,
        n_rotor: 0,
        omega,
        fourier_order: order,
        state_labels: (0..n).map(|i| format!("x{i}")).collect(),
        input_labels: (0..m).map(|i| format!("u{i}")).collect(),
        output_labels: (0..ny).map(|i| format!("y{i}")).collect(),
        f,
        g,
        p,
        r,
        nonlinearity_gain: 0.0,
        load_trim_harmonics: Vec::new(),
        load_output: 0,
        control_neutral: vec![0.0; m],
        u_trim: vec![0.0; m],
        output_order: 8,
    }
}

impl PeriodicMatrix {
    pub fn scalar(c: f64) -> Self {
        Self::constant(DMatrix::from_element(1, 1, c))
    }
}
