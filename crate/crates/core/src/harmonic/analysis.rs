use std::f64::consts::TAU;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fourier coefficients of a scalar periodic signal up to some order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Harmonics {
    pub mean: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl Harmonics {
    pub fn zeros(order: usize) -> Self {
        Self {
            mean: 0.0,
            cos: vec![0.0; order],
            sin: vec![0.0; order],
        }
    }

    /// From `[y0, y1c, y1s, y2c, y2s, ...]`.
    pub fn from_flat(v: &[f64]) -> Self {
        let mean = v.first().copied().unwrap_or(0.0);
        let rest = &v[v.len().min(1)..];
        let order = rest.len().div_ceil(2);
        let mut h = Self::zeros(order);
        h.mean = mean;
        for (i, pair) in rest.chunks(2).enumerate() {
            h.cos[i] = pair[0];
            h.sin[i] = pair.get(1).copied().unwrap_or(0.0);
        }
        h
    }

    pub fn order(&self) -> usize {
        self.cos.len()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = vec![self.mean];
        for (c, s) in self.cos.iter().zip(&self.sin) {
            v.push(*c);
            v.push(*s);
        }
        v
    }

    /// Magnitude `√(y_nc² + y_ns²)` of harmonic `n ≥ 1`.
    pub fn magnitude(&self, n: usize) -> f64 {
        match n.checked_sub(1) {
            Some(i) if i < self.order() => self.cos[i].hypot(self.sin[i]),
            Some(_) => 0.0,
            None => self.mean.abs(),
        }
    }
}

/// Vector-valued counterpart of [`Harmonics`].
#[derive(Clone, Debug, PartialEq)]
pub struct VectorHarmonics {
    pub mean: DVector<f64>,
    pub cos: Vec<DVector<f64>>,
    pub sin: Vec<DVector<f64>>,
}

impl VectorHarmonics {
    pub fn order(&self) -> usize {
        self.cos.len()
    }

    pub fn component(&self, i: usize) -> Harmonics {
        Harmonics {
            mean: self.mean[i],
            cos: self.cos.iter().map(|c| c[i]).collect(),
            sin: self.sin.iter().map(|s| s[i]).collect(),
        }
    }

    pub fn reconstruct(&self, psi: f64) -> DVector<f64> {
        let mut v = self.mean.clone();
        for (n, (c, s)) in self.cos.iter().zip(&self.sin).enumerate() {
            let a = (n + 1) as f64 * psi;
            v.axpy(a.cos(), c, 1.0);
            v.axpy(a.sin(), s, 1.0);
        }
        v
    }
}

fn check_samples(n: usize, order: usize) -> Result<()> {
    let needed = 2 * (order + 1);
    if n < needed {
        return Err(Error::TooFewSamples {
            samples: n,
            order,
            needed,
        });
    }
    Ok(())
}

/// Trapezoidal Fourier quadrature over one period of uniform samples taken at
/// `ψ_k = 2πk/n`, `k = 0..n`.
pub fn harmonic_analyze(samples: &[f64], order: usize) -> Result<Harmonics> {
    let n = samples.len();
    check_samples(n, order)?;
    let nf = n as f64;
    let mut h = Harmonics::zeros(order);
    h.mean = samples.iter().sum::<f64>() / nf;
    for k in 1..=order {
        let (mut c, mut s) = (0.0, 0.0);
        for (j, y) in samples.iter().enumerate() {
            let a = TAU * (k * j % n) as f64 / nf;
            c += y * a.cos();
            s += y * a.sin();
        }
        h.cos[k - 1] = 2.0 * c / nf;
        h.sin[k - 1] = 2.0 * s / nf;
    }
    Ok(h)
}

pub fn harmonic_analyze_vec(samples: &[DVector<f64>], order: usize) -> Result<VectorHarmonics> {
    let n = samples.len();
    check_samples(n, order)?;
    let dim = samples[0].len();
    if samples.iter().any(|s| s.len() != dim) {
        return Err(Error::Dimension("samples differ in length".into()));
    }
    let nf = n as f64;
    let mut mean = DVector::zeros(dim);
    for s in samples {
        mean += s;
    }
    mean /= nf;
    let mut cos = Vec::with_capacity(order);
    let mut sin = Vec::with_capacity(order);
    for k in 1..=order {
        let mut c = DVector::zeros(dim);
        let mut s = DVector::zeros(dim);
        for (j, y) in samples.iter().enumerate() {
            let a = TAU * (k * j % n) as f64 / nf;
            c.axpy(a.cos(), y, 1.0);
            s.axpy(a.sin(), y, 1.0);
        }
        cos.push(c * (2.0 / nf));
        sin.push(s * (2.0 / nf));
    }
    Ok(VectorHarmonics { mean, cos, sin })
}

pub fn reconstruct_signal(coeffs: &Harmonics, psi: f64) -> f64 {
    let mut v = coeffs.mean;
    for (n, (c, s)) in coeffs.cos.iter().zip(&coeffs.sin).enumerate() {
        let a = (n + 1) as f64 * psi;
        v += c * a.cos() + s * a.sin();
    }
    v
}
