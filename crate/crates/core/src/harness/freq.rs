use std::io::{Read, Write};

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statespace::StateSpace;

type C64 = Complex<f64>;

/// Response of one output to one input. An output label may also name a state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub input: String,
    pub output: String,
}

impl Pair {
    pub fn new(input: &str, output: &str) -> Self {
        Self {
            input: input.into(),
            output: output.into(),
        }
    }
}

impl std::str::FromStr for Pair {
    type Err = Error;

    /// `input:output`, e.g. `lon:q[0]`.
    fn from_str(s: &str) -> Result<Self> {
        let (i, o) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidParam(format!("pair {s:?} must look like input:output")))?;
        Ok(Self {
            input: i.trim().into(),
            output: o.trim().into(),
        })
    }
}

impl std::fmt::Display for Pair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.input, self.output)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairResponse {
    pub pair: Pair,
    pub h: Vec<C64>,
    pub coherence: Option<Vec<f64>>,
    /// Points where `jωI − A` was numerically singular; `h` is NaN there.
    pub flagged: Vec<usize>,
}

impl PairResponse {
    pub fn magnitude_db(&self) -> Vec<f64> {
        self.h.iter().map(|h| 20.0 * h.norm().log10()).collect()
    }

    pub fn phase_deg(&self) -> Vec<f64> {
        self.h.iter().map(|h| h.arg().to_degrees()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyResponse {
    /// rad/s, strictly increasing and positive.
    pub omega: Vec<f64>,
    pub pairs: Vec<PairResponse>,
}

pub fn check_grid(omega: &[f64]) -> Result<()> {
    if omega.is_empty() {
        return Err(Error::GridMismatch("empty frequency grid".into()));
    }
    if omega.iter().any(|w| !(w.is_finite() && *w > 0.0)) || omega.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::GridMismatch("frequencies must be positive and strictly increasing".into()));
    }
    Ok(())
}

/// `n` log-spaced frequencies from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

fn output_rows<S: StateSpace + ?Sized>(sys: &S, label: &str) -> Result<(DVector<f64>, DVector<f64>)> {
    let outs = sys.output_labels();
    let (n, m) = (sys.a().nrows(), sys.b().ncols());
    if let Some(i) = outs.iter().position(|l| l == label) {
        return Ok((sys.c().row(i).transpose(), sys.d().row(i).transpose()));
    }
    let states = sys.state_labels();
    if let Some(i) = states.iter().position(|l| l == label).or_else(|| {
        let mean = format!("{label}[0]");
        states.iter().position(|l| *l == mean)
    }) {
        let mut c = DVector::zeros(n);
        c[i] = 1.0;
        return Ok((c, DVector::zeros(m)));
    }
    if let Some(i) = outs.iter().position(|l| *l == format!("{label}[0]")) {
        return Ok((sys.c().row(i).transpose(), sys.d().row(i).transpose()));
    }
    Err(Error::MissingLabel(label.into()))
}

fn input_column<S: StateSpace + ?Sized>(sys: &S, label: &str) -> Result<usize> {
    let ins = sys.input_labels();
    ins.iter()
        .position(|l| l == label)
        .or_else(|| ins.iter().position(|l| *l == format!("{label}[0]")))
        .ok_or_else(|| Error::MissingLabel(label.into()))
}

/// `c·(jωI − A)⁻¹·b + d` for each pair and frequency.
pub fn frequency_response<S: StateSpace + ?Sized>(sys: &S, pairs: &[Pair], omega: &[f64]) -> Result<FrequencyResponse> {
    check_grid(omega)?;
    let a = sys.a();
    let n = a.nrows();
    let ac: DMatrix<C64> = a.map(|v| C64::new(-v, 0.0));
    let resolved = pairs
        .iter()
        .map(|p| Ok((input_column(sys, &p.input)?, output_rows(sys, &p.output)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<PairResponse> = pairs
        .iter()
        .map(|p| PairResponse {
            pair: p.clone(),
            h: Vec::with_capacity(omega.len()),
            coherence: None,
            flagged: Vec::new(),
        })
        .collect();
    let b = sys.b();
    let scale = crate::linalg::max_abs(a).max(1.0);
    for (k, &w) in omega.iter().enumerate() {
        let mut m = ac.clone();
        for i in 0..n {
            m[(i, i)] += C64::new(0.0, w);
        }
        let lu = m.lu();
        let rhs: DMatrix<C64> = DMatrix::from_fn(n, resolved.len(), |i, j| C64::new(b[(i, resolved[j].0)], 0.0));
        let sol = lu.solve(&rhs).filter(|s| s.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
        // a tiny pivot relative to the matrix scale means an undamped pole
        let min_pivot = (0..n).map(|i| lu.u()[(i, i)].norm()).fold(f64::INFINITY, f64::min);
        let singular = n > 0 && (sol.is_none() || min_pivot < 1e-13 * scale);
        for (j, (col, (c, d))) in resolved.iter().enumerate() {
            if singular {
                out[j].h.push(C64::new(f64::NAN, f64::NAN));
                out[j].flagged.push(k);
                continue;
            }
            let mut h = C64::new(d[*col], 0.0);
            if let Some(s) = &sol {
                for i in 0..n {
                    h += s[(i, j)] * c[i];
                }
            }
            out[j].h.push(h);
        }
    }
    Ok(FrequencyResponse {
        omega: omega.to_vec(),
        pairs: out,
    })
}

impl FrequencyResponse {
    pub fn pair(&self, p: &Pair) -> Option<&PairResponse> {
        self.pairs.iter().find(|r| r.pair == *p)
    }

    /// Columns `input,output,omega,re,im,mag_db,phase_deg,coherence`; coherence empty when absent.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["input", "output", "omega", "re", "im", "mag_db", "phase_deg", "coherence"])?;
        for p in &self.pairs {
            let (mag, ph) = (p.magnitude_db(), p.phase_deg());
            for (k, h) in p.h.iter().enumerate() {
                let coh = p.coherence.as_ref().map_or(String::new(), |c| c[k].to_string());
                out.write_record([
                    p.pair.input.clone(),
                    p.pair.output.clone(),
                    self.omega[k].to_string(),
                    h.re.to_string(),
                    h.im.to_string(),
                    mag[k].to_string(),
                    ph[k].to_string(),
                    coh,
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`write_csv`](Self::write_csv). `re,im` are
    /// authoritative; when both are empty, `mag_db,phase_deg` are used.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let col = |name: &str| header.iter().position(|h| h == name);
        let (ci, co, cw) = match (col("input"), col("output"), col("omega")) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(Error::Malformed("frequency-response CSV needs input,output,omega columns".into())),
        };
        let (cre, cim, cmag, cph, ccoh) = (col("re"), col("im"), col("mag_db"), col("phase_deg"), col("coherence"));
        let mut omega_by_pair: Vec<Vec<f64>> = Vec::new();
        let mut pairs: Vec<PairResponse> = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let field = |c: Option<usize>| c.and_then(|c| rec.get(c)).map(str::trim).filter(|s| !s.is_empty());
            let num = |c: Option<usize>| -> Result<Option<f64>> {
                field(c)
                    .map(|s| s.parse::<f64>().map_err(|_| Error::Malformed(format!("row {}: bad number {s:?}", line + 1))))
                    .transpose()
            };
            let pair = Pair {
                input: field(Some(ci)).unwrap_or_default().to_string(),
                output: field(Some(co)).unwrap_or_default().to_string(),
            };
            let w = num(Some(cw))?.ok_or_else(|| Error::Malformed(format!("row {}: missing omega", line + 1)))?;
            let h = match (num(cre)?, num(cim)?, num(cmag)?, num(cph)?) {
                (Some(re), Some(im), _, _) => C64::new(re, im),
                (_, _, Some(m), Some(p)) => C64::from_polar(10f64.powf(m / 20.0), p.to_radians()),
                _ => return Err(Error::Malformed(format!("row {}: needs re,im or mag_db,phase_deg", line + 1))),
            };
            let coh = num(ccoh)?;
            let j = match pairs.iter().position(|p| p.pair == pair) {
                Some(j) => j,
                None => {
                    pairs.push(PairResponse {
                        pair,
                        h: Vec::new(),
                        coherence: Some(Vec::new()),
                        flagged: Vec::new(),
                    });
                    omega_by_pair.push(Vec::new());
                    pairs.len() - 1
                }
            };
            if !h.re.is_finite() || !h.im.is_finite() {
                let at = pairs[j].h.len();
                pairs[j].flagged.push(at);
            }
            pairs[j].h.push(h);
            omega_by_pair[j].push(w);
            match (coh, pairs[j].coherence.as_mut()) {
                (Some(c), Some(v)) => v.push(c),
                _ => pairs[j].coherence = None,
            }
        }
        let omega = omega_by_pair.first().cloned().unwrap_or_default();
        if omega_by_pair.iter().any(|o| *o != omega) {
            return Err(Error::GridMismatch("pairs use different frequency grids".into()));
        }
        if !omega.is_empty() {
            check_grid(&omega)?;
        }
        for p in &mut pairs {
            if p.coherence.as_ref().is_some_and(|c| c.iter().any(|v| !(0.0..=1.0).contains(v))) {
                return Err(Error::Malformed(format!("coherence of {} outside [0, 1]", p.pair)));
            }
        }
        Ok(Self { omega, pairs })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FidelityConfig {
    /// Magnitude weight, per dB².
    pub w_g: f64,
    /// Phase weight, per deg².
    pub w_p: f64,
}

impl Default for FidelityConfig {
    fn default() -> Self {
        Self { w_g: 1.0, w_p: 0.01745 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCost {
    pub pair: Pair,
    pub j: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub pairs: Vec<PairCost>,
    pub omega_range: (f64, f64),
    pub w_g: f64,
    pub w_p: f64,
    pub average: f64,
}

/// Coherence weight `[1.58(1 − e^{−γ²})]²`.
pub fn coherence_weight(gamma2: f64) -> f64 {
    let w = 1.58 * (1.0 - (-gamma2).exp());
    w * w
}

/// Phase difference wrapped to `(−180°, 180°]`.
pub fn phase_error_deg(model: C64, reference: C64) -> f64 {
    (model / reference).arg().to_degrees()
}

/// Cost of one pair: `(20/n)·Σ W_γ·[W_g·Δmag² + W_p·Δphase²]`.
pub fn pair_cost(model: &[C64], reference: &[C64], coherence: Option<&[f64]>, cfg: &FidelityConfig) -> Result<f64> {
    if model.len() != reference.len() || model.is_empty() {
        return Err(Error::GridMismatch(format!("{} model vs {} reference points", model.len(), reference.len())));
    }
    let mut sum = 0.0;
    for k in 0..model.len() {
        let dmag = 20.0 * (model[k].norm() / reference[k].norm()).log10();
        let dph = phase_error_deg(model[k], reference[k]);
        let wg = coherence.map_or(1.0, |c| coherence_weight(c[k]));
        sum += wg * (cfg.w_g * dmag * dmag + cfg.w_p * dph * dph);
    }
    Ok(20.0 / model.len() as f64 * sum)
}

/// Pairs are matched by name; coherence comes from the reference.
pub fn fidelity_cost(model: &FrequencyResponse, reference: &FrequencyResponse, cfg: &FidelityConfig) -> Result<FidelityReport> {
    if model.omega.len() != reference.omega.len()
        || model.omega.iter().zip(&reference.omega).any(|(a, b)| (a - b).abs() > 1e-9 * b.abs())
    {
        return Err(Error::GridMismatch("model and reference frequency grids differ".into()));
    }
    check_grid(&reference.omega)?;
    let mut pairs = Vec::new();
    for r in &reference.pairs {
        let m = model
            .pair(&r.pair)
            .ok_or_else(|| Error::GridMismatch(format!("model has no pair {}", r.pair)))?;
        let j = pair_cost(&m.h, &r.h, r.coherence.as_deref(), cfg)?;
        pairs.push(PairCost { pair: r.pair.clone(), j });
    }
    if pairs.is_empty() {
        return Err(Error::GridMismatch("no pairs to compare".into()));
    }
    let average = pairs.iter().map(|p| p.j).sum::<f64>() / pairs.len() as f64;
    Ok(FidelityReport {
        pairs,
        omega_range: (reference.omega[0], *reference.omega.last().unwrap()),
        w_g: cfg.w_g,
        w_p: cfg.w_p,
        average,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::Abcd;
    use proptest::prelude::*;

    fn scalar(a: f64, b: f64, c: f64, d: f64) -> Abcd {
        Abcd {
            a: DMatrix::from_element(1, 1, a),
            b: DMatrix::from_element(1, 1, b),
            c: DMatrix::from_element(1, 1, c),
            d: DMatrix::from_element(1, 1, d),
        }
    }

    fn p() -> Pair {
        "u0:y0".parse().unwrap()
    }

    #[test]
    fn first_order_lag() {
        let fr = frequency_response(&scalar(-1.0, 1.0, 1.0, 0.0), &[p()], &[1.0]).unwrap();
        let r = &fr.pairs[0];
        assert!((r.h[0].norm() - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((r.phase_deg()[0] + 45.0).abs() < 1e-12);
    }

    #[test]
    fn feedthrough_only_is_flat() {
        let fr = frequency_response(&scalar(-3.0, 0.0, 0.0, 2.5), &[p()], &log_grid(0.1, 100.0, 7)).unwrap();
        assert!(fr.pairs[0].h.iter().all(|h| (*h - C64::new(2.5, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn undamped_pole_flagged() {
        let sys = Abcd {
            a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, 0.0]),
            b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            c: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            d: DMatrix::zeros(1, 1),
        };
        let fr = frequency_response(&sys, &[p()], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(fr.pairs[0].flagged, vec![1]);
        assert!(fr.pairs[0].h[0].re.is_finite());
    }

    #[test]
    fn bad_grid_rejected() {
        let s = scalar(-1.0, 1.0, 1.0, 0.0);
        assert!(frequency_response(&s, &[p()], &[1.0, 1.0]).is_err());
        assert!(frequency_response(&s, &[p()], &[0.0]).is_err());
    }

    #[test]
    fn one_db_and_its_phase_equivalent() {
        let cfg = FidelityConfig::default();
        let one = C64::new(1.0, 0.0);
        let db = pair_cost(&[C64::new(10f64.powf(1.0 / 20.0), 0.0)], &[one], Some(&[1.0]), &cfg).unwrap();
        assert!((db - 19.950).abs() < 1e-3, "{db}");
        let ph = pair_cost(&[C64::from_polar(1.0, 7.57f64.to_radians())], &[one], Some(&[1.0]), &cfg).unwrap();
        // 0.01745·7.57² = 0.99997, so the phase case lands 5e-4 below the magnitude case
        assert!((ph - 19.9495).abs() < 1e-4, "{ph}");
        assert!((ph - db).abs() < 1e-3);
    }

    #[test]
    fn missing_coherence_is_unit_weight() {
        let cfg = FidelityConfig::default();
        let m = [C64::new(2.0, 0.0)];
        let r = [C64::new(1.0, 0.0)];
        let j = pair_cost(&m, &r, None, &cfg).unwrap();
        let d = 20.0 * 2f64.log10();
        assert!((j - 20.0 * d * d).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let s = scalar(-2.0, 1.0, 3.0, 0.1);
        let mut fr = frequency_response(&s, &[p()], &log_grid(0.1, 10.0, 5)).unwrap();
        fr.pairs[0].coherence = Some(vec![0.9, 0.8, 0.7, 0.95, 1.0]);
        let mut buf = Vec::new();
        fr.write_csv(&mut buf).unwrap();
        let back = FrequencyResponse::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, fr);
        let rep = fidelity_cost(&back, &fr, &FidelityConfig::default()).unwrap();
        assert_eq!(rep.average, 0.0);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let s = scalar(-2.0, 1.0, 3.0, 0.1);
        let a = frequency_response(&s, &[p()], &[1.0, 2.0]).unwrap();
        let b = frequency_response(&s, &[p()], &[1.0, 3.0]).unwrap();
        assert!(matches!(fidelity_cost(&a, &b, &FidelityConfig::default()), Err(Error::GridMismatch(_))));
    }

    fn c64() -> impl Strategy<Value = C64> {
        (0.05f64..20.0, -3.0f64..3.0).prop_map(|(m, p)| C64::from_polar(m, p))
    }

    proptest! {
        #[test]
        fn identical_responses_cost_nothing(h in prop::collection::vec(c64(), 1..20)) {
            let j = pair_cost(&h, &h, None, &FidelityConfig::default()).unwrap();
            prop_assert_eq!(j, 0.0);
        }

        #[test]
        fn common_factor_cancels(h in prop::collection::vec((c64(), c64()), 1..10), k in c64()) {
            let (m, r): (Vec<C64>, Vec<C64>) = h.into_iter().unzip();
            let cfg = FidelityConfig::default();
            let base = pair_cost(&m, &r, None, &cfg).unwrap();
            let ms: Vec<C64> = m.iter().map(|v| v * k).collect();
            let rs: Vec<C64> = r.iter().map(|v| v * k).collect();
            let scaled = pair_cost(&ms, &rs, None, &cfg).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-9 * base.max(1.0));
        }

        #[test]
        fn quadratic_in_magnitude_offset(h in prop::collection::vec(c64(), 1..10), db in 0.1f64..10.0) {
            let cfg = FidelityConfig::default();
            let off = |d: f64| -> Vec<C64> { h.iter().map(|v| v * 10f64.powf(d / 20.0)).collect() };
            let j1 = pair_cost(&off(db), &h, None, &cfg).unwrap();
            let j2 = pair_cost(&off(2.0 * db), &h, None, &cfg).unwrap();
            prop_assert!((j2 - 4.0 * j1).abs() <= 1e-9 * j2);
        }
    }
}
