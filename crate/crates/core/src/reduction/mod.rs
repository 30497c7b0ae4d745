//! Two-time-scale partition and quasi-steady residualization of the LTI model.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonic::{HarmonicIndex, LtiModel};
use crate::linalg::{rows, select, select_cols, select_rows, spectral_abscissa, Factored};
use crate::statespace::{fingerprint, StateSpace};

pub const REDUCED_SCHEMA_VERSION: u32 = 1;

/// Mean harmonics of the body states and first-harmonic flapping.
pub const DEFAULT_SLOW_LABELS: [&str; 10] = [
    "vx[0]", "vy[0]", "vz[0]", "p[0]", "q[0]", "r[0]", "theta[0]", "phi[0]", "beta_1c[0]",
    "beta_1s[0]",
];

const COND_LIMIT: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub slow_rows: Vec<usize>,
    pub fast_rows: Vec<usize>,
    pub slow_labels: Vec<String>,
}

impl Partition {
    /// Slow rows as given; fast rows are the ascending complement in `0..n`.
    pub fn new(slow_rows: Vec<usize>, n: usize, labels: &[String]) -> Result<Self> {
        if slow_rows.is_empty() {
            return Err(Error::InvalidParam("slow set is empty".into()));
        }
        let mut seen = vec![false; n];
        for &r in &slow_rows {
            if r >= n || seen[r] {
                return Err(Error::InvalidParam(format!("slow row {r} repeated or out of range")));
            }
            seen[r] = true;
        }
        let fast_rows = (0..n).filter(|r| !seen[*r]).collect();
        let slow_labels = slow_rows
            .iter()
            .map(|&r| labels.get(r).cloned().unwrap_or_else(|| format!("x{r}")))
            .collect();
        Ok(Self {
            slow_rows,
            fast_rows,
            slow_labels,
        })
    }

    pub fn from_labels<S: AsRef<str>>(index: &HarmonicIndex, labels: &[S]) -> Result<Self> {
        let rows = labels
            .iter()
            .map(|l| index.find(l.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows, index.len(), &index.labels())
    }

    fn check(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &r in self.slow_rows.iter().chain(&self.fast_rows) {
            if r >= n || seen[r] {
                return Err(Error::InvalidParam(format!("partition row {r} repeated or out of range")));
            }
            seen[r] = true;
        }
        if seen.iter().any(|s| !s) || self.slow_rows.is_empty() {
            return Err(Error::InvalidParam("partition is not exhaustive or slow set empty".into()));
        }
        Ok(())
    }
}

pub fn default_partition(lti: &LtiModel) -> Result<Partition> {
    Partition::from_labels(&lti.state_index, &DEFAULT_SLOW_LABELS)
}

/// Slow-state on-board model `Ẋs = Â Xs + B̂ U`, `Y = Ĉ Xs + D̂ U`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedLti {
    pub schema_version: u32,
    pub id: String,
    pub source_id: String,
    #[serde(with = "rows")]
    pub a_hat: DMatrix<f64>,
    #[serde(with = "rows")]
    pub b_hat: DMatrix<f64>,
    #[serde(with = "rows")]
    pub c_hat: DMatrix<f64>,
    #[serde(with = "rows")]
    pub d_hat: DMatrix<f64>,
    pub partition: Partition,
    pub input_index: HarmonicIndex,
    pub output_index: HarmonicIndex,
}

impl ReducedLti {
    pub fn n_slow(&self) -> usize {
        self.a_hat.nrows()
    }

    pub fn state_position(&self, label: &str) -> Result<usize> {
        let bare = label.trim_end_matches("[0]");
        self.partition
            .slow_labels
            .iter()
            .position(|l| l == label || l.trim_end_matches("[0]") == bare)
            .ok_or_else(|| Error::MissingLabel(label.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != REDUCED_SCHEMA_VERSION {
            return Err(Error::Schema {
                found: self.schema_version,
                expected: REDUCED_SCHEMA_VERSION,
            });
        }
        let n = self.partition.slow_rows.len();
        let (m, p) = (self.input_index.len(), self.output_index.len());
        let shapes = [
            ("A_hat", self.a_hat.shape(), (n, n)),
            ("B_hat", self.b_hat.shape(), (n, m)),
            ("C_hat", self.c_hat.shape(), (p, n)),
            ("D_hat", self.d_hat.shape(), (p, m)),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::Dimension(format!(
                    "{name} is {}x{}, expected {}x{}",
                    got.0, got.1, want.0, want.1
                )));
            }
        }
        if self.partition.slow_labels.len() != n {
            return Err(Error::Dimension("slow label count".into()));
        }
        let total = n + self.partition.fast_rows.len();
        self.partition.check(total)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// A reduced model given directly by its matrices; the partition treats
    /// every state as slow. Outputs are the harmonics of `output_base` up to
    /// `output_order`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        a_hat: DMatrix<f64>,
        b_hat: DMatrix<f64>,
        c_hat: DMatrix<f64>,
        d_hat: DMatrix<f64>,
        state_labels: Vec<String>,
        input_labels: Vec<String>,
        output_base: &str,
        output_order: usize,
    ) -> Self {
        let n = a_hat.nrows();
        Self {
            schema_version: REDUCED_SCHEMA_VERSION,
            id: format!("red-{}", fingerprint(&[&a_hat, &b_hat, &c_hat, &d_hat])),
            source_id: String::new(),
            a_hat,
            b_hat,
            c_hat,
            d_hat,
            partition: Partition {
                slow_rows: (0..n).collect(),
                fast_rows: Vec::new(),
                slow_labels: state_labels,
            },
            input_index: HarmonicIndex::new(input_labels, 0),
            output_index: HarmonicIndex::new(vec![output_base.to_string()], output_order),
        }
    }
}

impl StateSpace for ReducedLti {
    fn a(&self) -> &DMatrix<f64> {
        &self.a_hat
    }
    fn b(&self) -> &DMatrix<f64> {
        &self.b_hat
    }
    fn c(&self) -> &DMatrix<f64> {
        &self.c_hat
    }
    fn d(&self) -> &DMatrix<f64> {
        &self.d_hat
    }
    fn state_labels(&self) -> Vec<String> {
        self.partition.slow_labels.clone()
    }
    fn input_labels(&self) -> Vec<String> {
        self.input_index.labels()
    }
    fn output_labels(&self) -> Vec<String> {
        self.output_index.labels()
    }
}

#[derive(Clone, Debug)]
pub struct ResidualizeOptions {
    /// Eigenvalue check of `A_f`; costly for very wide models.
    pub check_fast_stability: bool,
}

impl Default for ResidualizeOptions {
    fn default() -> Self {
        Self {
            check_fast_stability: true,
        }
    }
}

/// Reduced matrices `(Â, B̂, Ĉ, D̂)`.
pub type Blocks = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);

/// Quasi-steady elimination of the fast rows of a generic `(A, B, C, D)`.
/// `labels` name the rows of `A` for diagnostics.
pub fn residualize_blocks(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    p: &Partition,
    labels: &[String],
    opts: &ResidualizeOptions,
) -> Result<Blocks> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || c.ncols() != n || d.shape() != (c.nrows(), b.ncols()) {
        return Err(Error::Dimension("inconsistent (A, B, C, D) shapes".into()));
    }
    p.check(n)?;
    let (s, f) = (&p.slow_rows, &p.fast_rows);
    let a_s = select(a, s, s);
    let b_s = select_rows(b, s);
    let c_s = select_cols(c, s);
    if f.is_empty() {
        return Ok((a_s, b_s, c_s, d.clone()));
    }
    let a_sf = select(a, s, f);
    let a_fs = select(a, f, s);
    let a_f = select(a, f, f);
    let b_f = select_rows(b, f);
    let c_f = select_cols(c, f);

    let lu = Factored::new(&a_f)?;
    let (cond, worst) = lu.condition_estimate();
    if !(cond <= COND_LIMIT) {
        let row = f[worst];
        return Err(Error::IllConditioned {
            cond,
            label: labels.get(row).cloned().unwrap_or_else(|| format!("row {row}")),
        });
    }
    if opts.check_fast_stability {
        let worst = crate::linalg::eigenvalues(&a_f)
            .into_iter()
            .max_by(|x, y| x.re.total_cmp(&y.re));
        if let Some(l) = worst.filter(|l| l.re >= 0.0) {
            return Err(Error::UnstableFast { re: l.re, im: l.im });
        }
    }
    // one multi-RHS solve for A_f⁻¹ [A_fs | B_f]
    let ns = s.len();
    let mut rhs = DMatrix::zeros(f.len(), ns + b.ncols());
    rhs.view_mut((0, 0), (f.len(), ns)).copy_from(&a_fs);
    rhs.view_mut((0, ns), (f.len(), b.ncols())).copy_from(&b_f);
    let sol = lu.solve(&rhs)?;
    let x = sol.columns(0, ns);
    let y = sol.columns(ns, b.ncols());
    let a_hat = a_s - &a_sf * x;
    let b_hat = b_s - &a_sf * y;
    let c_hat = c_s - &c_f * x;
    let d_hat = d - &c_f * y;
    Ok((a_hat, b_hat, c_hat, d_hat))
}

pub fn residualize(lti: &LtiModel, p: &Partition) -> Result<ReducedLti> {
    residualize_with(lti, p, &ResidualizeOptions::default())
}

pub fn residualize_with(lti: &LtiModel, p: &Partition, opts: &ResidualizeOptions) -> Result<ReducedLti> {
    let labels = lti.state_index.labels();
    let (a_hat, b_hat, c_hat, d_hat) = residualize_blocks(&lti.a, &lti.b, &lti.c, &lti.d, p, &labels, opts)?;
    Ok(ReducedLti {
        schema_version: REDUCED_SCHEMA_VERSION,
        id: format!("red-{}", fingerprint(&[&a_hat, &b_hat, &c_hat, &d_hat])),
        source_id: lti.id.clone(),
        a_hat,
        b_hat,
        c_hat,
        d_hat,
        partition: p.clone(),
        input_index: lti.input_index.clone(),
        output_index: lti.output_index.clone(),
    })
}

/// `−C A⁻¹ B + D` for a Hurwitz `A`.
pub fn dc_gain<S: StateSpace + ?Sized>(sys: &S) -> Result<DMatrix<f64>> {
    let a = sys.a();
    if a.nrows() == 0 {
        return Ok(sys.d().clone());
    }
    let abscissa = spectral_abscissa(a);
    if abscissa >= 0.0 {
        return Err(Error::NotHurwitz(abscissa));
    }
    let x = Factored::new(a)?.solve(sys.b())?;
    Ok(sys.d() - sys.c() * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::Abcd;

    fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn hand_example() {
        let a = m(2, 2, &[-1.0, 0.5, 0.0, -10.0]);
        let b = m(2, 1, &[1.0, 2.0]);
        let c = m(1, 2, &[1.0, 0.0]);
        let d = m(1, 1, &[0.0]);
        let p = Partition::new(vec![0], 2, &labels(2)).unwrap();
        let (ah, bh, _, _) = residualize_blocks(&a, &b, &c, &d, &p, &labels(2), &Default::default()).unwrap();
        assert_eq!(ah[(0, 0)], -1.0);
        assert!((bh[(0, 0)] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn decoupled_blocks_pass_through() {
        let a = m(3, 3, &[-1.0, 0.0, 0.0, 2.0, -5.0, 0.3, 0.1, 0.2, -7.0]);
        let b = m(3, 1, &[1.0, 2.0, 3.0]);
        let c = m(1, 3, &[4.0, 0.0, 0.0]);
        let d = m(1, 1, &[0.5]);
        let p = Partition::new(vec![0], 3, &labels(3)).unwrap();
        let (ah, bh, ch, dh) = residualize_blocks(&a, &b, &c, &d, &p, &labels(3), &Default::default()).unwrap();
        assert_eq!((ah[(0, 0)], bh[(0, 0)], ch[(0, 0)], dh[(0, 0)]), (-1.0, 1.0, 4.0, 0.5));
    }

    #[test]
    fn singular_fast_block_names_mode() {
        let a = m(3, 3, &[-1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, -1.0, 1.0]);
        let b = DMatrix::zeros(3, 1);
        let c = DMatrix::zeros(1, 3);
        let d = DMatrix::zeros(1, 1);
        let p = Partition::new(vec![0], 3, &labels(3)).unwrap();
        let err = residualize_blocks(&a, &b, &c, &d, &p, &labels(3), &Default::default()).unwrap_err();
        assert!(matches!(err, Error::IllConditioned { .. } | Error::Singular(_)), "{err}");
    }

    #[test]
    fn unstable_fast_block_rejected() {
        let a = m(2, 2, &[-1.0, 0.0, 0.0, 3.0]);
        let p = Partition::new(vec![0], 2, &labels(2)).unwrap();
        let err = residualize_blocks(
            &a,
            &DMatrix::zeros(2, 1),
            &DMatrix::zeros(1, 2),
            &DMatrix::zeros(1, 1),
            &p,
            &labels(2),
            &Default::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnstableFast { .. }));
    }

    #[test]
    fn dc_gain_examples() {
        let s = Abcd {
            a: m(1, 1, &[-2.0]),
            b: m(1, 1, &[1.0]),
            c: m(1, 1, &[1.0]),
            d: m(1, 1, &[0.0]),
        };
        assert!((dc_gain(&s).unwrap()[(0, 0)] - 0.5).abs() < 1e-15);
        let d_only = Abcd {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, 2),
            c: DMatrix::zeros(1, 0),
            d: m(1, 2, &[3.0, 4.0]),
        };
        assert_eq!(dc_gain(&d_only).unwrap(), m(1, 2, &[3.0, 4.0]));
        let unstable = Abcd {
            a: m(1, 1, &[0.1]),
            ..s
        };
        assert!(matches!(dc_gain(&unstable), Err(Error::NotHurwitz(_))));
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![], 3, &labels(3)).is_err());
        assert!(Partition::new(vec![0, 0], 3, &labels(3)).is_err());
        assert!(Partition::new(vec![5], 3, &labels(3)).is_err());
        let p = Partition::new(vec![2, 0], 4, &labels(4)).unwrap();
        assert_eq!(p.fast_rows, vec![1, 3]);
        assert_eq!(p.slow_labels, vec!["x2", "x0"]);
    }
}
