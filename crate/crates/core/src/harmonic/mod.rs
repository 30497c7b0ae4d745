//! Harmonic decomposition of a periodic model into an augmented LTI model,
//! plus scalar/vector harmonic analysis helpers.

mod analysis;
mod index;

pub use analysis::{harmonic_analyze, harmonic_analyze_vec, reconstruct_signal, Harmonics, VectorHarmonics};
pub use index::{HarmonicEntry, HarmonicIndex, Kind};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::rows;
use crate::plant::{LtpModel, PeriodicMatrix};
use crate::statespace::{fingerprint, StateSpace};

pub const LTI_SCHEMA_VERSION: u32 = 1;

/// Augmented harmonic state-space model `Ẋ = AX + BU`, `Y = CX + DU`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LtiModel {
    pub schema_version: u32,
    pub id: String,
    pub omega: f64,
    #[serde(with = "rows")]
    pub a: DMatrix<f64>,
    #[serde(with = "rows")]
    pub b: DMatrix<f64>,
    #[serde(with = "rows")]
    pub c: DMatrix<f64>,
    #[serde(with = "rows")]
    pub d: DMatrix<f64>,
    pub state_index: HarmonicIndex,
    pub input_index: HarmonicIndex,
    pub output_index: HarmonicIndex,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl LtiModel {
    pub fn n_state_harmonics(&self) -> usize {
        self.state_index.order()
    }

    pub fn n_input_harmonics(&self) -> usize {
        self.input_index.order()
    }

    pub fn n_output_harmonics(&self) -> usize {
        self.output_index.order()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != LTI_SCHEMA_VERSION {
            return Err(Error::Schema {
                found: self.schema_version,
                expected: LTI_SCHEMA_VERSION,
            });
        }
        let (n, m, p) = (
            self.state_index.len(),
            self.input_index.len(),
            self.output_index.len(),
        );
        let shapes = [
            ("A", self.a.shape(), (n, n)),
            ("B", self.b.shape(), (n, m)),
            ("C", self.c.shape(), (p, n)),
            ("D", self.d.shape(), (p, m)),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::Dimension(format!(
                    "{name} is {}x{}, index implies {}x{}",
                    got.0, got.1, want.0, want.1
                )));
            }
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::InvalidParam("omega must be > 0".into()));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

impl StateSpace for LtiModel {
    fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    fn state_labels(&self) -> Vec<String> {
        self.state_index.labels()
    }
    fn input_labels(&self) -> Vec<String> {
        self.input_index.labels()
    }
    fn output_labels(&self) -> Vec<String> {
        self.output_index.labels()
    }
}

type Term = (usize, Kind, f64);

/// Expands `a(ψ)·b(ψ)` for two basis functions into at most two basis terms.
fn product(a: (usize, Kind), b: (usize, Kind)) -> [Option<Term>; 2] {
    let (k, j) = (a.0 as i64, b.0 as i64);
    let norm = |n: i64, kind: Kind, coef: f64| -> Option<Term> {
        match kind {
            Kind::Cos if n == 0 => Some((0, Kind::Mean, coef)),
            Kind::Cos => Some((n.unsigned_abs() as usize, Kind::Cos, coef)),
            Kind::Sin if n == 0 => None,
            Kind::Sin => Some((n.unsigned_abs() as usize, Kind::Sin, coef * n.signum() as f64)),
            Kind::Mean => Some((0, Kind::Mean, coef)),
        }
    };
    match (a.1, b.1) {
        (Kind::Mean, _) => [Some((b.0, b.1, 1.0)), None],
        (_, Kind::Mean) => [Some((a.0, a.1, 1.0)), None],
        (Kind::Cos, Kind::Cos) => [norm(k - j, Kind::Cos, 0.5), norm(k + j, Kind::Cos, 0.5)],
        (Kind::Sin, Kind::Sin) => [norm(k - j, Kind::Cos, 0.5), norm(k + j, Kind::Cos, -0.5)],
        (Kind::Sin, Kind::Cos) => [norm(k + j, Kind::Sin, 0.5), norm(k - j, Kind::Sin, 0.5)],
        (Kind::Cos, Kind::Sin) => [norm(k + j, Kind::Sin, 0.5), norm(j - k, Kind::Sin, 0.5)],
    }
}

/// Harmonic-balance projection of `M(ψ)·v(ψ)` where `v` carries harmonics up
/// to `col_order`, keeping result harmonics up to `row_order`.
pub fn project(pm: &PeriodicMatrix, row_order: usize, col_order: usize) -> DMatrix<f64> {
    let (r, c) = pm.shape();
    let mut out = DMatrix::zeros(r * (2 * row_order + 1), c * (2 * col_order + 1));
    let mut terms: Vec<((usize, Kind), &DMatrix<f64>)> = vec![((0, Kind::Mean), &pm.constant)];
    for (i, h) in pm.harmonics.iter().enumerate() {
        terms.push(((i + 1, Kind::Cos), &h.cos));
        terms.push(((i + 1, Kind::Sin), &h.sin));
    }
    for (t, m) in terms {
        if m.iter().all(|v| *v == 0.0) {
            continue;
        }
        for jb in 0..(2 * col_order + 1) {
            let col = index::block_kind(jb);
            for (n, kind, coef) in product(t, col).into_iter().flatten() {
                if n > row_order {
                    continue;
                }
                let Some(ib) = index::block_of(n, kind) else {
                    continue;
                };
                let mut blk = out.view_mut((ib * r, jb * c), (r, c));
                blk += m * coef;
            }
        }
    }
    out
}

/// Assembles the augmented LTI model with state harmonics up to `n`, input
/// harmonics up to `m` and output harmonics up to `l`.
pub fn assemble_lti(ltp: &LtpModel, n: usize, m: usize, l: usize) -> Result<LtiModel> {
    ltp.validate()?;
    let ns = ltp.f.shape().0;
    let mut a = project(&ltp.f, n, n);
    for k in 1..=n {
        let w = k as f64 * ltp.omega;
        let (cb, sb) = (2 * k - 1, 2 * k);
        for i in 0..ns {
            a[(cb * ns + i, sb * ns + i)] -= w;
            a[(sb * ns + i, cb * ns + i)] += w;
        }
    }
    let b = project(&ltp.g, n, m);
    let c = project(&ltp.p, l, n);
    let d = project(&ltp.r, l, m);
    let mut warnings = Vec::new();
    let order = ltp.order();
    if n < order {
        warnings.push(format!(
            "state harmonic order {n} is below the coefficient order {order}; products are truncated"
        ));
    }
    let id = format!("lti-N{n}M{m}L{l}-{}", fingerprint(&[&a, &b, &c, &d]));
    Ok(LtiModel {
        schema_version: LTI_SCHEMA_VERSION,
        id,
        omega: ltp.omega,
        a,
        b,
        c,
        d,
        state_index: HarmonicIndex::new(ltp.state_labels.clone(), n),
        input_index: HarmonicIndex::new(ltp.input_labels.clone(), m),
        output_index: HarmonicIndex::new(ltp.output_labels.clone(), l),
        warnings,
    })
}

/// Measurement initialization: mean block = `x`, harmonic blocks zero.
pub fn lift_state(x: &DVector<f64>, index: &HarmonicIndex) -> Result<DVector<f64>> {
    if x.len() != index.n_base() {
        return Err(Error::Dimension(format!(
            "state has {} entries, index covers {}",
            x.len(),
            index.n_base()
        )));
    }
    let mut big = DVector::zeros(index.len());
    big.rows_mut(0, x.len()).copy_from(x);
    Ok(big)
}

/// Mean-block projection, the left inverse of [`lift_state`].
pub fn project_mean(big: &DVector<f64>, index: &HarmonicIndex) -> Result<DVector<f64>> {
    if big.len() != index.len() {
        return Err(Error::Dimension(format!(
            "augmented state has {} entries, index has {}",
            big.len(),
            index.len()
        )));
    }
    Ok(big.rows(0, index.n_base()).into_owned())
}

/// Evaluates an augmented output vector at azimuth `psi` per base signal.
pub fn reconstruct_augmented(y: &DVector<f64>, index: &HarmonicIndex, psi: f64) -> DVector<f64> {
    let nb = index.n_base();
    let mut out = y.rows(0, nb).into_owned();
    for k in 1..=index.order() {
        let a = k as f64 * psi;
        out.axpy(a.cos(), &y.rows((2 * k - 1) * nb, nb), 1.0);
        out.axpy(a.sin(), &y.rows(2 * k * nb, nb), 1.0);
    }
    out
}
