use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Per-axis column groups, in header order.
pub const AXIS_GROUPS: [&str; 7] = ["stick", "u_cmd", "u_pilot", "u_pilot_prev", "u_ext", "cm", "u_applied"];

/// Scalar columns after the per-axis groups, in header order.
pub const SCALAR_COLUMNS: [&str; 14] = [
    "y_1rev_exact",
    "y_1rev_predicted",
    "y_max",
    "cmd",
    "cmd_rate",
    "integrator",
    "tracking_error",
    "qp_iterations",
    "kkt_residual",
    "qp_status",
    "margin_valid",
    "stale",
    "cue_on",
    "cue_height",
];

/// One control frame. Per-axis vectors follow the input label order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub psi: f64,
    /// Plant state (absolute).
    pub x: Vec<f64>,
    /// Stick deflection, %.
    pub stick: Vec<f64>,
    /// Flight-controller output.
    pub u_cmd: Vec<f64>,
    /// Pilot control demand (differs from `u_cmd` only under a cue-tracking pilot).
    pub u_pilot: Vec<f64>,
    /// Previous frame's pilot control, the margin reference.
    pub u_pilot_prev: Vec<f64>,
    /// NaN when no margin was computed.
    pub u_ext: Vec<f64>,
    pub cm: Vec<f64>,
    pub u_applied: Vec<f64>,
    /// Sliding one-period 1/rev magnitude of the plant load, lbs.
    pub y_1rev_exact: f64,
    /// Linearized on-board estimate of the same, lbs.
    pub y_1rev_predicted: f64,
    pub y_max: f64,
    /// Filtered command (deg or deg/s) and its rate.
    pub cmd: f64,
    pub cmd_rate: f64,
    pub integrator: f64,
    pub tracking_error: f64,
    pub qp_iterations: f64,
    pub kkt_residual: f64,
    /// 0 optimal, 1 max_iter, 2 infeasible, NaN when no solve ran.
    pub qp_status: f64,
    pub margin_valid: bool,
    /// Real-time frame exceeded its deadline.
    pub stale: bool,
    pub cue_on: bool,
    pub cue_height: f64,
}

impl TraceRecord {
    pub fn axis_group(&self, group: &str) -> &[f64] {
        match group {
            "stick" => &self.stick,
            "u_cmd" => &self.u_cmd,
            "u_pilot" => &self.u_pilot,
            "u_pilot_prev" => &self.u_pilot_prev,
            "u_ext" => &self.u_ext,
            "cm" => &self.cm,
            "u_applied" => &self.u_applied,
            _ => &[],
        }
    }

    fn axis_group_mut(&mut self, group: &str) -> &mut Vec<f64> {
        match group {
            "stick" => &mut self.stick,
            "u_cmd" => &mut self.u_cmd,
            "u_pilot" => &mut self.u_pilot,
            "u_pilot_prev" => &mut self.u_pilot_prev,
            "u_ext" => &mut self.u_ext,
            "cm" => &mut self.cm,
            _ => &mut self.u_applied,
        }
    }

    fn scalars(&self) -> [f64; 14] {
        [
            self.y_1rev_exact,
            self.y_1rev_predicted,
            self.y_max,
            self.cmd,
            self.cmd_rate,
            self.integrator,
            self.tracking_error,
            self.qp_iterations,
            self.kkt_residual,
            self.qp_status,
            f64::from(u8::from(self.margin_valid)),
            f64::from(u8::from(self.stale)),
            f64::from(u8::from(self.cue_on)),
            self.cue_height,
        ]
    }

    fn set_scalars(&mut self, v: &[f64]) {
        self.y_1rev_exact = v[0];
        self.y_1rev_predicted = v[1];
        self.y_max = v[2];
        self.cmd = v[3];
        self.cmd_rate = v[4];
        self.integrator = v[5];
        self.tracking_error = v[6];
        self.qp_iterations = v[7];
        self.kkt_residual = v[8];
        self.qp_status = v[9];
        self.margin_valid = v[10] != 0.0;
        self.stale = v[11] != 0.0;
        self.cue_on = v[12] != 0.0;
        self.cue_height = v[13];
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimTrace {
    pub state_labels: Vec<String>,
    pub input_labels: Vec<String>,
    pub records: Vec<TraceRecord>,
}

impl SimTrace {
    pub fn new(state_labels: Vec<String>, input_labels: Vec<String>) -> Self {
        Self {
            state_labels,
            input_labels,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string(), "psi".to_string()];
        h.extend(self.state_labels.iter().map(|l| format!("x_{l}")));
        for g in AXIS_GROUPS {
            h.extend(self.input_labels.iter().map(|l| format!("{g}_{l}")));
        }
        h.extend(SCALAR_COLUMNS.iter().map(|s| s.to_string()));
        h
    }

    pub fn state_index(&self, label: &str) -> Result<usize> {
        self.state_labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::MissingLabel(label.into()))
    }

    pub fn input_index(&self, label: &str) -> Result<usize> {
        self.input_labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::MissingLabel(label.into()))
    }

    /// Time series of one state.
    pub fn state_series(&self, label: &str) -> Result<Vec<f64>> {
        let i = self.state_index(label)?;
        Ok(self.records.iter().map(|r| r.x[i]).collect())
    }

    /// Strictly increasing, uniformly spaced time stamps with complete rows.
    pub fn check(&self) -> Result<()> {
        let (ns, nu) = (self.state_labels.len(), self.input_labels.len());
        for r in &self.records {
            if r.x.len() != ns || AXIS_GROUPS.iter().any(|g| r.axis_group(g).len() != nu) {
                return Err(Error::Malformed(format!("incomplete record at t = {}", r.t)));
            }
        }
        if self.records.len() >= 2 {
            let dt = self.records[1].t - self.records[0].t;
            for w in self.records.windows(2) {
                let d = w[1].t - w[0].t;
                if !(d > 0.0) || (d - dt).abs() > 1e-9 * dt.abs().max(1.0) {
                    return Err(Error::Malformed(format!("non-uniform time step at t = {}", w[1].t)));
                }
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.header())?;
        let mut row: Vec<String> = Vec::new();
        for r in &self.records {
            row.clear();
            row.push(r.t.to_string());
            row.push(r.psi.to_string());
            row.extend(r.x.iter().map(f64::to_string));
            for g in AXIS_GROUPS {
                row.extend(r.axis_group(g).iter().map(f64::to_string));
            }
            row.extend(r.scalars().iter().map(f64::to_string));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let trace = Self::from_header(&header)?;
        let mut trace = trace;
        let (ns, nu) = (trace.state_labels.len(), trace.input_labels.len());
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::Malformed(format!("row {} has {} fields, expected {}", line + 1, rec.len(), header.len())));
            }
            let vals = rec
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Malformed(format!("row {}: bad number {f:?}", line + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            let mut r = TraceRecord {
                t: vals[0],
                psi: vals[1],
                x: vals[2..2 + ns].to_vec(),
                ..Default::default()
            };
            let mut at = 2 + ns;
            for g in AXIS_GROUPS {
                *r.axis_group_mut(g) = vals[at..at + nu].to_vec();
                at += nu;
            }
            r.set_scalars(&vals[at..]);
            trace.records.push(r);
        }
        trace.check()?;
        Ok(trace)
    }

    fn from_header(header: &[String]) -> Result<Self> {
        let bad = |m: &str| Err(Error::Malformed(format!("trace header: {m}")));
        if header.len() < 2 || header[0] != "t" || header[1] != "psi" {
            return bad("must start with t,psi");
        }
        let state_labels: Vec<String> = header[2..]
            .iter()
            .take_while(|h| h.starts_with("x_"))
            .map(|h| h[2..].to_string())
            .collect();
        let rest = &header[2 + state_labels.len()..];
        let prefix = "stick_";
        let input_labels: Vec<String> = rest
            .iter()
            .take_while(|h| h.starts_with(prefix))
            .map(|h| h[prefix.len()..].to_string())
            .collect();
        let trace = Self::new(state_labels, input_labels);
        if trace.header() != header {
            return bad("unexpected column order");
        }
        Ok(trace)
    }

    pub fn export(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn import(path: &Path) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample(n: usize) -> SimTrace {
        let mut t = SimTrace::new(vec!["q".into(), "theta".into()], vec!["lon".into(), "lat".into()]);
        for k in 0..n {
            let v = k as f64;
            t.records.push(TraceRecord {
                t: v * 0.01,
                psi: (v * 0.27) % std::f64::consts::TAU,
                x: vec![v.sin() / 3.0, 1.0 / (v + 7.0)],
                stick: vec![20.0, 0.0],
                u_cmd: vec![53.1 + v / 7.0, 48.0],
                u_pilot: vec![53.1 + v / 7.0, 48.0],
                u_pilot_prev: vec![53.0, 48.0],
                u_ext: vec![f64::NAN, 48.0],
                cm: vec![f64::NAN, 0.0],
                u_applied: vec![53.1, 48.0],
                y_1rev_exact: 300.0 + v.cos(),
                y_1rev_predicted: 299.9,
                y_max: f64::INFINITY,
                qp_status: f64::NAN,
                margin_valid: k % 2 == 0,
                stale: k % 3 == 0,
                cue_height: -1e-300,
                ..Default::default()
            });
        }
        t
    }

    fn same(a: &SimTrace, b: &SimTrace) -> bool {
        let mut wa = Vec::new();
        let mut wb = Vec::new();
        a.write_csv(&mut wa).unwrap();
        b.write_csv(&mut wb).unwrap();
        wa == wb
    }

    #[test]
    fn round_trip_is_lossless() {
        let t = sample(25);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = SimTrace::read_csv(buf.as_slice()).unwrap();
        assert!(same(&t, &back));
        assert_eq!(back.records[3].x, t.records[3].x);
        assert!(back.records[0].u_ext[0].is_nan());
        assert_eq!(back.records[0].y_max, f64::INFINITY);
    }

    #[test]
    fn empty_trace_is_header_only() {
        let t = sample(0);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 1);
        let back = SimTrace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn malformed_rejected() {
        assert!(SimTrace::read_csv("a,b\n1,2\n".as_bytes()).is_err());
        let t = sample(2);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("300", "3x0");
        assert!(SimTrace::read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn non_uniform_time_rejected() {
        let mut t = sample(3);
        t.records[2].t = 0.5;
        assert!(t.check().is_err());
    }
}
