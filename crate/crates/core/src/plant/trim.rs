use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use super::{mean_equilibrium, monodromy, rk4, SurrogateParams};
use crate::error::{Error, Result};
use crate::harmonic::{harmonic_analyze, harmonic_analyze_vec, Harmonics, VectorHarmonics};

#[derive(Clone, Debug)]
pub struct TrimOptions {
    pub n_psi: usize,
    pub tol: f64,
    pub max_periods: usize,
}

impl Default for TrimOptions {
    fn default() -> Self {
        Self {
            n_psi: 64,
            tol: 1e-8,
            max_periods: 200,
        }
    }
}

/// Periodic trim orbit at constant trim control.
#[derive(Clone, Debug)]
pub struct TrimSolution {
    /// `x_trim(ψ_k)` at `ψ_k = 2πk/n_psi`.
    pub x_samples: Vec<DVector<f64>>,
    pub u_trim: DVector<f64>,
    /// Output harmonics per output, up to the plant's `output_order`.
    pub y_harm_trim: Vec<Harmonics>,
    pub residual: f64,
    pub periods: usize,
    pub load_output: usize,
    x_interp: VectorHarmonics,
}

impl TrimSolution {
    pub fn n_psi(&self) -> usize {
        self.x_samples.len()
    }

    /// Trigonometric interpolation of the sampled trim orbit.
    pub fn state_at(&self, psi: f64) -> DVector<f64> {
        self.x_interp.reconstruct(psi)
    }

    pub fn load_harmonics(&self) -> &Harmonics {
        &self.y_harm_trim[self.load_output]
    }

    /// `√(y_1c² + y_1s²)` of the trim load.
    pub fn load_1rev(&self) -> f64 {
        self.load_harmonics().magnitude(1)
    }
}

pub fn trim_plant(params: &SurrogateParams) -> Result<TrimSolution> {
    trim_plant_with(params, &TrimOptions::default())
}

pub fn trim_plant_with(params: &SurrogateParams, opts: &TrimOptions) -> Result<TrimSolution> {
    let u = params.u_trim_vec();
    trim_plant_from(params, mean_equilibrium(params, &u), opts)
}

/// Shooting on the one-period map, accelerated with the linear monodromy:
/// `x ← x + (I − Φ)⁻¹ (x(T) − x)`. Every integrated period counts toward
/// `max_periods`.
pub fn trim_plant_from(params: &SurrogateParams, x0: DVector<f64>, opts: &TrimOptions) -> Result<TrimSolution> {
    params.validate()?;
    let n = params.n_states();
    if x0.len() != n {
        return Err(Error::Dimension(format!("initial state has {} entries, plant has {n}", x0.len())));
    }
    let np = opts.n_psi;
    if np < 20 {
        return Err(Error::InvalidParam(format!("n_psi = {np} cannot resolve the period; need >= 20")));
    }
    let u = params.u_trim_vec();
    let dt = params.period() / np as f64;
    let phi = monodromy(&params.f, params.omega, np)?;
    let worst = crate::linalg::eigenvalues(&phi)
        .iter()
        .map(|m| m.norm())
        .fold(0.0, f64::max);
    if worst >= 1.0 {
        return Err(Error::InvalidParam(format!(
            "plant is not Floquet-stable at trim (largest multiplier magnitude {worst})"
        )));
    }
    let newton = (DMatrix::identity(n, n) - phi).lu();
    let mut x = x0;
    let mut residual = f64::INFINITY;
    for period in 1..=opts.max_periods {
        let mut xs = Vec::with_capacity(np);
        let mut xe = x.clone();
        for k in 0..np {
            xs.push(xe.clone());
            xe = rk4(params, &xe, &u, k as f64 * dt, dt);
        }
        if let Some(i) = xe.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                t: period as f64 * params.period(),
                index: i,
                label: params.state_labels[i].clone(),
                value: xe[i],
            });
        }
        let defect = &xe - &x;
        residual = defect.amax();
        if residual < opts.tol {
            return finish(params, xs, u, residual, period);
        }
        x = match newton.solve(&defect) {
            Some(step) if step.iter().all(|v| v.is_finite()) => x + step,
            _ => xe,
        };
    }
    Err(Error::TrimFailure {
        periods: opts.max_periods,
        residual,
    })
}

fn finish(params: &SurrogateParams, xs: Vec<DVector<f64>>, u: DVector<f64>, residual: f64, periods: usize) -> Result<TrimSolution> {
    let np = xs.len();
    let ys: Vec<DVector<f64>> = xs
        .iter()
        .enumerate()
        .map(|(k, x)| params.output(x, &u, TAU * k as f64 / np as f64))
        .collect();
    let mut y_harm_trim = Vec::with_capacity(params.n_outputs());
    for i in 0..params.n_outputs() {
        let series: Vec<f64> = ys.iter().map(|y| y[i]).collect();
        y_harm_trim.push(harmonic_analyze(&series, params.output_order)?);
    }
    let x_interp = harmonic_analyze_vec(&xs, (np - 1) / 2)?;
    Ok(TrimSolution {
        x_samples: xs,
        u_trim: u,
        y_harm_trim,
        residual,
        periods,
        load_output: params.load_output,
        x_interp,
    })
}
