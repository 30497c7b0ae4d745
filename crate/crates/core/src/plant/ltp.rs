use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use super::{PeriodicMatrix, SurrogateParams, TrimSolution};
use crate::error::{Error, Result};
use crate::harmonic::harmonic_analyze;
use crate::linalg::eigenvalues;

pub const LTP_SCHEMA_VERSION: u32 = 1;

/// Linear time-periodic model `ẋ = F(ψ)x + G(ψ)u`, `y = P(ψ)x + R(ψ)u`
/// in perturbation coordinates about a trim orbit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LtpModel {
    pub schema_version: u32,
    pub omega: f64,
    #[serde(rename = "F")]
    pub f: PeriodicMatrix,
    #[serde(rename = "G")]
    pub g: PeriodicMatrix,
    #[serde(rename = "P")]
    pub p: PeriodicMatrix,
    #[serde(rename = "R")]
    pub r: PeriodicMatrix,
    pub state_labels: Vec<String>,
    pub input_labels: Vec<String>,
    pub output_labels: Vec<String>,
}

impl LtpModel {
    /// Model with generic labels.
    pub fn new(omega: f64, f: PeriodicMatrix, g: PeriodicMatrix, p: PeriodicMatrix, r: PeriodicMatrix) -> Self {
        let (n, m, ny) = (f.shape().0, g.shape().1, p.shape().0);
        Self {
            schema_version: LTP_SCHEMA_VERSION,
            omega,
            f,
            g,
            p,
            r,
            state_labels: (0..n).map(|i| format!("x{i}")).collect(),
            input_labels: (0..m).map(|i| format!("u{i}")).collect(),
            output_labels: (0..ny).map(|i| format!("y{i}")).collect(),
        }
    }

    /// The linear part of a surrogate (exact when its nonlinearity gain is 0).
    pub fn from_params(params: &SurrogateParams) -> Self {
        Self {
            schema_version: LTP_SCHEMA_VERSION,
            omega: params.omega,
            f: params.f.clone(),
            g: params.g.clone(),
            p: params.p.clone(),
            r: params.r.clone(),
            state_labels: params.state_labels.clone(),
            input_labels: params.input_labels.clone(),
            output_labels: params.output_labels.clone(),
        }
    }

    pub fn order(&self) -> usize {
        [&self.f, &self.g, &self.p, &self.r]
            .iter()
            .map(|m| m.order())
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != LTP_SCHEMA_VERSION {
            return Err(Error::Schema {
                found: self.schema_version,
                expected: LTP_SCHEMA_VERSION,
            });
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::InvalidParam("omega must be > 0".into()));
        }
        let (n, m, ny) = (
            self.state_labels.len(),
            self.input_labels.len(),
            self.output_labels.len(),
        );
        self.f.validate(n, n, "F")?;
        self.g.validate(n, m, "G")?;
        self.p.validate(ny, n, "P")?;
        self.r.validate(ny, m, "R")?;
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Debug)]
pub struct LinearizeOptions {
    pub n_psi: usize,
    /// Relative central-difference step.
    pub step: f64,
    /// Fit residual tolerance relative to the largest Jacobian entry.
    pub fit_tolerance: f64,
}

impl Default for LinearizeOptions {
    fn default() -> Self {
        Self {
            n_psi: 64,
            step: 1e-4,
            fit_tolerance: 1e-6,
        }
    }
}

pub fn linearize_to_ltp(params: &SurrogateParams, trim: &TrimSolution) -> Result<LtpModel> {
    linearize_to_ltp_with(params, trim, &LinearizeOptions::default())
}

/// Central differences of the plant about the trim orbit at `n_psi` azimuths,
/// then a least-squares Fourier fit up to `fourier_order`.
pub fn linearize_to_ltp_with(params: &SurrogateParams, trim: &TrimSolution, opts: &LinearizeOptions) -> Result<LtpModel> {
    let (n, m) = (params.n_states(), params.n_inputs());
    let ny = params.n_outputs();
    let order = params.fourier_order;
    let np = opts.n_psi;
    if np < 2 * (order + 1) {
        return Err(Error::TooFewSamples {
            samples: np,
            order,
            needed: 2 * (order + 1),
        });
    }
    let u0 = &trim.u_trim;
    let mut jf = Vec::with_capacity(np);
    let mut jg = Vec::with_capacity(np);
    let mut jp = Vec::with_capacity(np);
    let mut jr = Vec::with_capacity(np);
    for k in 0..np {
        let psi = std::f64::consts::TAU * k as f64 / np as f64;
        let x0 = trim.state_at(psi);
        let mut fx = DMatrix::zeros(n, n);
        let mut px = DMatrix::zeros(ny, n);
        for j in 0..n {
            let h = opts.step * x0[j].abs().max(1.0);
            let (mut xp, mut xm) = (x0.clone(), x0.clone());
            xp[j] += h;
            xm[j] -= h;
            let df = (params.rhs(&xp, u0, psi) - params.rhs(&xm, u0, psi)) / (2.0 * h);
            let dy = (params.output(&xp, u0, psi) - params.output(&xm, u0, psi)) / (2.0 * h);
            fx.set_column(j, &df);
            px.set_column(j, &dy);
        }
        let mut gu = DMatrix::zeros(n, m);
        let mut ru = DMatrix::zeros(ny, m);
        for j in 0..m {
            let h = opts.step * u0[j].abs().max(1.0);
            let (mut up, mut um) = (u0.clone(), u0.clone());
            up[j] += h;
            um[j] -= h;
            let df = (params.rhs(&x0, &up, psi) - params.rhs(&x0, &um, psi)) / (2.0 * h);
            let dy = (params.output(&x0, &up, psi) - params.output(&x0, &um, psi)) / (2.0 * h);
            gu.set_column(j, &df);
            ru.set_column(j, &dy);
        }
        jf.push(fx);
        jg.push(gu);
        jp.push(px);
        jr.push(ru);
    }
    let fit = |samples: &[DMatrix<f64>]| -> Result<PeriodicMatrix> { fit_periodic(samples, order, opts) };
    Ok(LtpModel {
        schema_version: LTP_SCHEMA_VERSION,
        omega: params.omega,
        f: fit(&jf)?,
        g: fit(&jg)?,
        p: fit(&jp)?,
        r: fit(&jr)?,
        state_labels: params.state_labels.clone(),
        input_labels: params.input_labels.clone(),
        output_labels: params.output_labels.clone(),
    })
}

fn fit_periodic(samples: &[DMatrix<f64>], order: usize, opts: &LinearizeOptions) -> Result<PeriodicMatrix> {
    let (r, c) = samples[0].shape();
    let mut out = PeriodicMatrix::zeros(r, c, order);
    let mut series = vec![0.0; samples.len()];
    let mut scale: f64 = 1.0;
    let mut worst: f64 = 0.0;
    for i in 0..r {
        for j in 0..c {
            for (s, m) in series.iter_mut().zip(samples) {
                *s = m[(i, j)];
            }
            let h = harmonic_analyze(&series, order)?;
            out.constant[(i, j)] = h.mean;
            for k in 0..order {
                out.harmonics[k].cos[(i, j)] = h.cos[k];
                out.harmonics[k].sin[(i, j)] = h.sin[k];
            }
            for (kk, v) in series.iter().enumerate() {
                let psi = std::f64::consts::TAU * kk as f64 / series.len() as f64;
                let e = (crate::harmonic::reconstruct_signal(&h, psi) - v).abs();
                worst = worst.max(e);
                scale = scale.max(v.abs());
            }
        }
    }
    let tolerance = opts.fit_tolerance * scale;
    if worst > tolerance {
        return Err(Error::Aliasing {
            residual: worst,
            tolerance,
            n_psi: opts.n_psi,
        });
    }
    Ok(out)
}

/// State-transition matrix over one period by RK4 with `steps` steps.
pub fn monodromy(f: &PeriodicMatrix, omega: f64, steps: usize) -> Result<DMatrix<f64>> {
    let n = f.shape().0;
    let period = std::f64::consts::TAU / omega;
    let dt = period / steps.max(1) as f64;
    let mut phi = DMatrix::<f64>::identity(n, n);
    for k in 0..steps.max(1) {
        let psi = omega * dt * k as f64;
        let f0 = f.eval(psi);
        let fh = f.eval(psi + 0.5 * omega * dt);
        let f1 = f.eval(psi + omega * dt);
        let k1 = &f0 * &phi;
        let k2 = &fh * (&phi + &k1 * (0.5 * dt));
        let k3 = &fh * (&phi + &k2 * (0.5 * dt));
        let k4 = &f1 * (&phi + &k3 * dt);
        phi += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    if let Some(i) = phi.iter().position(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            t: period,
            index: i % n.max(1),
            label: format!("transition matrix entry {i}"),
            value: phi[i],
        });
    }
    Ok(phi)
}

/// Eigenvalues of the monodromy matrix.
pub fn floquet_multipliers(ltp: &LtpModel) -> Result<Vec<Complex<f64>>> {
    Ok(eigenvalues(&monodromy(&ltp.f, ltp.omega, 256)?))
}
