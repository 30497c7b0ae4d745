use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::rows;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicPair {
    #[serde(with = "rows")]
    pub cos: DMatrix<f64>,
    #[serde(with = "rows")]
    pub sin: DMatrix<f64>,
}

/// A matrix-valued trigonometric polynomial in azimuth:
/// `M(ψ) = M0 + Σ_i (M_ic cos iψ + M_is sin iψ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicMatrix {
    #[serde(with = "rows")]
    pub constant: DMatrix<f64>,
    #[serde(default)]
    pub harmonics: Vec<HarmonicPair>,
}

impl PeriodicMatrix {
    pub fn constant(m: DMatrix<f64>) -> Self {
        Self {
            constant: m,
            harmonics: Vec::new(),
        }
    }

    pub fn zeros(nrows: usize, ncols: usize, order: usize) -> Self {
        Self {
            constant: DMatrix::zeros(nrows, ncols),
            harmonics: (0..order)
                .map(|_| HarmonicPair {
                    cos: DMatrix::zeros(nrows, ncols),
                    sin: DMatrix::zeros(nrows, ncols),
                })
                .collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.harmonics.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    /// `cos` term of order `n` (n ≥ 1), if present.
    pub fn cos(&self, n: usize) -> Option<&DMatrix<f64>> {
        n.checked_sub(1)
            .and_then(|i| self.harmonics.get(i))
            .map(|h| &h.cos)
    }

    pub fn sin(&self, n: usize) -> Option<&DMatrix<f64>> {
        n.checked_sub(1)
            .and_then(|i| self.harmonics.get(i))
            .map(|h| &h.sin)
    }

    pub fn eval(&self, psi: f64) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (i, h) in self.harmonics.iter().enumerate() {
            let a = (i + 1) as f64 * psi;
            out += &h.cos * a.cos() + &h.sin * a.sin();
        }
        out
    }

    /// `M(ψ)·v` without forming `M(ψ)`.
    pub fn apply(&self, psi: f64, v: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.constant * v;
        for (i, h) in self.harmonics.iter().enumerate() {
            let a = (i + 1) as f64 * psi;
            out.gemv(a.cos(), &h.cos, v, 1.0);
            out.gemv(a.sin(), &h.sin, v, 1.0);
        }
        out
    }

    /// Pads with zero harmonics up to `order`.
    pub fn padded(&self, order: usize) -> Self {
        let (r, c) = self.shape();
        let mut out = self.clone();
        while out.harmonics.len() < order {
            out.harmonics.push(HarmonicPair {
                cos: DMatrix::zeros(r, c),
                sin: DMatrix::zeros(r, c),
            });
        }
        out
    }

    pub fn validate(&self, nrows: usize, ncols: usize, name: &str) -> Result<()> {
        let check = |m: &DMatrix<f64>, what: &str| {
            if m.shape() != (nrows, ncols) {
                Err(Error::Dimension(format!(
                    "{name} {what} is {}x{}, expected {nrows}x{ncols}",
                    m.nrows(),
                    m.ncols()
                )))
            } else {
                Ok(())
            }
        };
        check(&self.constant, "constant")?;
        for (i, h) in self.harmonics.iter().enumerate() {
            check(&h.cos, &format!("cos {}", i + 1))?;
            check(&h.sin, &format!("sin {}", i + 1))?;
        }
        Ok(())
    }
}
