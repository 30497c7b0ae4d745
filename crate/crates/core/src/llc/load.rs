use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::TrimSolution;

/// First-order model of the 1/rev magnitude about trim:
/// `‖(y1c, y1s)‖ ≈ a + b·y1c + c·y1s` for perturbations `(y1c, y1s)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadLinearization {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub trim_1c: f64,
    pub trim_1s: f64,
}

impl LoadLinearization {
    pub fn from_trim_1rev(trim_1c: f64, trim_1s: f64) -> Result<Self> {
        let a = trim_1c.hypot(trim_1s);
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::DegenerateLinearization);
        }
        Ok(Self {
            a,
            b: trim_1c / a,
            c: trim_1s / a,
            trim_1c,
            trim_1s,
        })
    }

    pub fn predict(&self, d1c: f64, d1s: f64) -> f64 {
        self.a + self.b * d1c + self.c * d1s
    }

    /// Exact magnitude for the same perturbation; never below [`predict`](Self::predict).
    pub fn exact(&self, d1c: f64, d1s: f64) -> f64 {
        (self.trim_1c + d1c).hypot(self.trim_1s + d1s)
    }
}

pub fn linearize_load(trim: &TrimSolution) -> Result<LoadLinearization> {
    let h = trim.load_harmonics();
    let (c1, s1) = (
        h.cos.first().copied().unwrap_or(0.0),
        h.sin.first().copied().unwrap_or(0.0),
    );
    LoadLinearization::from_trim_1rev(c1, s1)
}
