use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::discretize::{discretize, DiscreteModel};
use super::load::LoadLinearization;
use super::qp::{PreparedQp, QpOptions, QpProblem, QpSolution, QpStatus};
use crate::error::{Error, Result};
use crate::reduction::ReducedLti;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    #[default]
    Soft,
    Hard,
}

/// `+∞` is written as `null` since JSON has no infinity.
mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    /// Prediction horizon, s.
    #[serde(rename = "Tp")]
    pub tp: f64,
    /// Transcription step, s; `Tp/4` when absent.
    pub dt_mpc: Option<f64>,
    /// Weight on the scalar load error.
    #[serde(rename = "Q")]
    pub q: f64,
    /// Control-activity weight over the controlled axes; `0.01·I` when absent.
    #[serde(rename = "R")]
    pub r: Option<Vec<Vec<f64>>>,
    /// Load limit, lbs. `null` disables the limiter.
    #[serde(with = "finite_or_null")]
    pub y_max: f64,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub controlled_axes: Vec<String>,
    pub constraint_mode: ConstraintMode,
    /// Exact-penalty weight on the load slack (soft mode).
    pub soft_penalty: f64,
    /// Quadratic slack weight keeping the Hessian definite (soft mode).
    pub slack_weight: f64,
    /// Tiny quadratic weight on predicted states keeping the Hessian definite.
    pub state_regularization: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            tp: 0.0065,
            dt_mpc: None,
            q: 1.0,
            r: None,
            y_max: 350.0,
            u_min: vec![0.0; 4],
            u_max: vec![100.0; 4],
            controlled_axes: vec!["lon".into()],
            constraint_mode: ConstraintMode::Soft,
            soft_penalty: 1e6,
            slack_weight: 1.0,
            state_regularization: 1e-8,
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

impl MpcConfig {
    pub fn dt(&self) -> f64 {
        self.dt_mpc.unwrap_or(self.tp / 4.0)
    }

    pub fn n_steps(&self) -> usize {
        (self.tp / self.dt()).round().max(1.0) as usize
    }

    pub fn r_matrix(&self, nc: usize) -> DMatrix<f64> {
        match &self.r {
            Some(rows) if !rows.is_empty() => {
                DMatrix::from_fn(nc, nc, |i, j| rows.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0.0))
            }
            _ => DMatrix::identity(nc, nc) * 0.01,
        }
    }

    pub fn qp_options(&self) -> QpOptions {
        QpOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }

    pub fn validate(&self, input_labels: &[String]) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if !(self.tp.is_finite() && self.tp > 0.0) {
            return bad(format!("Tp must be > 0, got {}", self.tp));
        }
        let dt = self.dt();
        if !(dt.is_finite() && dt > 0.0) {
            return bad(format!("dt_mpc must be > 0, got {dt}"));
        }
        let steps = (self.tp / dt).round();
        if steps < 1.0 || (steps * dt - self.tp).abs() > 1e-9 * self.tp || steps > 10_000.0 {
            return bad(format!("dt_mpc = {dt} does not divide Tp = {} into whole steps", self.tp));
        }
        if !(self.q.is_finite() && self.q > 0.0) {
            return bad("Q must be positive".into());
        }
        let m = input_labels.len();
        if self.u_min.len() != m || self.u_max.len() != m {
            return bad(format!("u_min/u_max need {m} entries"));
        }
        if self
            .u_min
            .iter()
            .zip(&self.u_max)
            .any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi))
        {
            return bad("u_min must be below u_max on every axis".into());
        }
        if self.controlled_axes.is_empty() {
            return bad("no controlled axes".into());
        }
        for a in &self.controlled_axes {
            if !input_labels.contains(a) {
                return bad(format!("unknown controlled axis {a}"));
            }
        }
        let nc = self.controlled_axes.len();
        if let Some(rows) = &self.r {
            if rows.len() != nc || rows.iter().any(|r| r.len() != nc) {
                return bad(format!("R must be {nc}x{nc}"));
            }
        }
        let r = self.r_matrix(nc);
        if r.iter().any(|v| !v.is_finite()) || (&r - r.transpose()).amax() > 1e-12 * (1.0 + r.amax()) {
            return bad("R must be finite and symmetric".into());
        }
        if r.cholesky().is_none() {
            return bad("R must be positive definite".into());
        }
        if self.y_max.is_nan() {
            return bad("y_max is NaN".into());
        }
        for (name, v) in [
            ("soft_penalty", self.soft_penalty),
            ("slack_weight", self.slack_weight),
            ("state_regularization", self.state_regularization),
            ("tol", self.tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be > 0"));
            }
        }
        Ok(())
    }
}

/// Offsets of the decision vector `[U(0..T), X(1..=T), S(0..=T)]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n_steps: usize,
    pub n_ctrl: usize,
    pub n_state: usize,
    pub soft: bool,
}

impl Layout {
    pub fn u(&self, i: usize, a: usize) -> usize {
        i * self.n_ctrl + a
    }

    /// Start of `X(i)`, `1 ≤ i ≤ T`.
    pub fn x(&self, i: usize) -> usize {
        self.n_steps * self.n_ctrl + (i - 1) * self.n_state
    }

    pub fn s(&self, i: usize) -> usize {
        self.n_steps * (self.n_ctrl + self.n_state) + i
    }

    pub fn n_vars(&self) -> usize {
        self.n_steps * (self.n_ctrl + self.n_state) + if self.soft { self.n_steps + 1 } else { 0 }
    }

    pub fn n_loads(&self) -> usize {
        self.n_steps + 1
    }
}

/// Everything the limiter needs besides the per-frame measurements.
#[derive(Clone, Debug)]
pub struct LlcModel {
    pub cfg: MpcConfig,
    pub dmodel: DiscreteModel,
    pub lin: LoadLinearization,
    pub u_trim: DVector<f64>,
    pub controlled: Vec<usize>,
    pub uncontrolled: Vec<usize>,
    /// Linearized load row over slow states, `b·Ĉ_1c + c·Ĉ_1s`.
    pub ell_c: DVector<f64>,
    /// Linearized load row over inputs, `b·D̂_1c + c·D̂_1s`.
    pub ell_d: DVector<f64>,
    /// `+1`/`−1` for the load-increasing direction on controlled axes, `0` elsewhere.
    pub direction: DVector<f64>,
}

impl LlcModel {
    pub fn new(cfg: &MpcConfig, reduced: &ReducedLti, lin: LoadLinearization, u_trim: DVector<f64>, load_label: &str) -> Result<Self> {
        let inputs = reduced.input_index.base_labels().to_vec();
        cfg.validate(&inputs)?;
        let m = inputs.len();
        if u_trim.len() != m {
            return Err(Error::Dimension(format!("u_trim has {} entries, model has {m} inputs", u_trim.len())));
        }
        let mut mean_inputs = reduced.clone();
        mean_inputs.b_hat = reduced.b_hat.columns(0, m).into_owned();
        mean_inputs.d_hat = reduced.d_hat.columns(0, m).into_owned();
        let dmodel = discretize(&mean_inputs, cfg.dt())?;
        let r1c = reduced.output_index.find(&format!("{load_label}[1c]"))?;
        let r1s = reduced.output_index.find(&format!("{load_label}[1s]"))?;
        let ell_c = (dmodel.c.row(r1c) * lin.b + dmodel.c.row(r1s) * lin.c).transpose();
        let ell_d = (dmodel.d.row(r1c) * lin.b + dmodel.d.row(r1s) * lin.c).transpose();
        let controlled: Vec<usize> = cfg
            .controlled_axes
            .iter()
            .map(|a| inputs.iter().position(|l| l == a).expect("validated"))
            .collect();
        let uncontrolled = (0..m).filter(|i| !controlled.contains(i)).collect();

        // summed horizon sensitivity of the load to a held control step
        let t = cfg.n_steps();
        let mut direction = DVector::zeros(m);
        for &a in &controlled {
            let b = dmodel.b_d.column(a).into_owned();
            let mut x = DVector::zeros(b.len());
            let mut total = 0.0;
            for _ in 0..=t {
                total += ell_c.dot(&x) + ell_d[a];
                x = &dmodel.a_d * x + &b;
            }
            direction[a] = if total < 0.0 { -1.0 } else { 1.0 };
        }
        Ok(Self {
            cfg: cfg.clone(),
            dmodel,
            lin,
            u_trim,
            controlled,
            uncontrolled,
            ell_c,
            ell_d,
            direction,
        })
    }

    pub fn layout(&self) -> Layout {
        Layout {
            n_steps: self.cfg.n_steps(),
            n_ctrl: self.controlled.len(),
            n_state: self.dmodel.a_d.nrows(),
            soft: self.cfg.constraint_mode == ConstraintMode::Soft,
        }
    }

    fn load_row(&self, lay: &Layout, i: usize) -> DVector<f64> {
        let mut row = DVector::zeros(lay.n_vars());
        let j = i.min(lay.n_steps - 1);
        for (ai, &a) in self.controlled.iter().enumerate() {
            row[lay.u(j, ai)] = self.ell_d[a];
        }
        if i >= 1 {
            row.rows_mut(lay.x(i), lay.n_state).copy_from(&self.ell_c);
        }
        row
    }

    /// Load prediction constant of step `i` (everything not in the decision vector).
    fn load_const(&self, i: usize, x_now: &DVector<f64>, du_prev: &DVector<f64>) -> f64 {
        let mut k = self.lin.a;
        for &a in &self.uncontrolled {
            k += self.ell_d[a] * du_prev[a];
        }
        if i == 0 {
            k += self.ell_c.dot(x_now);
        }
        k
    }

    /// `(H, A_eq, C)`: the parts that do not change between frames.
    pub fn matrices(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let lay = self.layout();
        let (t, nc, ns) = (lay.n_steps, lay.n_ctrl, lay.n_state);
        let nv = lay.n_vars();
        let mut h = DMatrix::zeros(nv, nv);
        let q2 = 2.0 * self.cfg.q;
        for i in 0..lay.n_loads() {
            let l = self.load_row(&lay, i);
            h.ger(q2, &l, &l, 1.0);
        }
        let r2 = self.cfg.r_matrix(nc) * 2.0;
        for i in 0..t {
            let o = lay.u(i, 0);
            let mut blk = h.view_mut((o, o), (nc, nc));
            blk += &r2;
        }
        for k in lay.x(1)..lay.x(1) + t * ns {
            h[(k, k)] += 2.0 * self.cfg.state_regularization;
        }
        if lay.soft {
            for i in 0..lay.n_loads() {
                h[(lay.s(i), lay.s(i))] += 2.0 * self.cfg.slack_weight;
            }
        }

        let mut a_eq = DMatrix::zeros(t * ns, nv);
        for i in 0..t {
            let r0 = i * ns;
            for k in 0..ns {
                a_eq[(r0 + k, lay.x(i + 1) + k)] = 1.0;
            }
            if i >= 1 {
                let mut blk = a_eq.view_mut((r0, lay.x(i)), (ns, ns));
                blk -= &self.dmodel.a_d;
            }
            for (ai, &a) in self.controlled.iter().enumerate() {
                for k in 0..ns {
                    a_eq[(r0 + k, lay.u(i, ai))] = -self.dmodel.b_d[(k, a)];
                }
            }
        }

        let n_slack = if lay.soft { lay.n_loads() } else { 0 };
        let mut c = DMatrix::zeros(lay.n_loads() + n_slack + 2 * t * nc, nv);
        let mut row = 0;
        for i in 0..lay.n_loads() {
            let l = self.load_row(&lay, i);
            c.row_mut(row).copy_from(&l.transpose());
            if lay.soft {
                c[(row, lay.s(i))] = -1.0;
            }
            row += 1;
        }
        for i in 0..n_slack {
            c[(row, lay.s(i))] = -1.0;
            row += 1;
        }
        for sign in [1.0, -1.0] {
            for i in 0..t {
                for ai in 0..nc {
                    c[(row, lay.u(i, ai))] = sign;
                    row += 1;
                }
            }
        }
        (h, a_eq, c)
    }

    /// `(g, b_eq, d)` for the current measurements.
    pub fn vectors(&self, x_now: &DVector<f64>, u_pilot_prev: &DVector<f64>, y_max: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let lay = self.layout();
        let (t, nc, ns) = (lay.n_steps, lay.n_ctrl, lay.n_state);
        let du_prev = u_pilot_prev - &self.u_trim;
        let mut g = DVector::zeros(lay.n_vars());
        let q2 = 2.0 * self.cfg.q;
        for i in 0..lay.n_loads() {
            let e = self.load_const(i, x_now, &du_prev) - y_max;
            g.axpy(q2 * e, &self.load_row(&lay, i), 1.0);
        }
        let r2 = self.cfg.r_matrix(nc) * 2.0;
        let dprev_c = DVector::from_iterator(nc, self.controlled.iter().map(|&a| du_prev[a]));
        let rg = -(r2 * dprev_c);
        for i in 0..t {
            let mut blk = g.rows_mut(lay.u(i, 0), nc);
            blk += &rg;
        }
        if lay.soft {
            for i in 0..lay.n_loads() {
                g[lay.s(i)] += self.cfg.soft_penalty;
            }
        }

        let mut unc = DVector::zeros(ns);
        for &a in &self.uncontrolled {
            unc.axpy(du_prev[a], &self.dmodel.b_d.column(a), 1.0);
        }
        let mut b = DVector::zeros(t * ns);
        for i in 0..t {
            let mut blk = b.rows_mut(i * ns, ns);
            blk.copy_from(&unc);
            if i == 0 {
                blk += &self.dmodel.a_d * x_now;
            }
        }

        let n_slack = if lay.soft { lay.n_loads() } else { 0 };
        let mut d = DVector::zeros(lay.n_loads() + n_slack + 2 * t * nc);
        for i in 0..lay.n_loads() {
            d[i] = y_max - self.load_const(i, x_now, &du_prev);
        }
        let mut row = lay.n_loads() + n_slack;
        for upper in [true, false] {
            for _ in 0..t {
                for &a in &self.controlled {
                    d[row] = if upper {
                        self.cfg.u_max[a] - self.u_trim[a]
                    } else {
                        self.u_trim[a] - self.cfg.u_min[a]
                    };
                    row += 1;
                }
            }
        }
        (g, b, d)
    }
}

/// Direct-transcription QP plus what is needed to read the solution back.
#[derive(Clone, Debug)]
pub struct MpcProblem {
    pub qp: QpProblem,
    pub layout: Layout,
    pub x_now: DVector<f64>,
    pub u_pilot_prev: DVector<f64>,
    pub y_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpcSolution {
    /// Absolute controls per step, %, all axes.
    pub u_traj: Vec<DVector<f64>>,
    /// Predicted slow-state perturbations `X(1..=T)`.
    pub x_traj: Vec<DVector<f64>>,
    /// Linearized load prediction over `k..=k+T`, lbs.
    pub y_pred: Vec<f64>,
    /// Extremal control at the first step, %, all axes.
    pub u_ext: DVector<f64>,
    pub direction: DVector<f64>,
    pub controlled: Vec<usize>,
    pub kkt_residual: f64,
    pub status: QpStatus,
    pub iterations: usize,
}

pub fn build_qp(model: &LlcModel, x_now: &DVector<f64>, u_pilot_prev: &DVector<f64>, y_max_now: f64) -> Result<MpcProblem> {
    check_inputs(model, x_now, u_pilot_prev, y_max_now)?;
    let (h, a_eq, c) = model.matrices();
    let (g, b_eq, d) = model.vectors(x_now, u_pilot_prev, y_max_now);
    Ok(MpcProblem {
        qp: QpProblem { h, g, a_eq, b_eq, c, d },
        layout: model.layout(),
        x_now: x_now.clone(),
        u_pilot_prev: u_pilot_prev.clone(),
        y_max: y_max_now,
    })
}

fn check_inputs(model: &LlcModel, x_now: &DVector<f64>, u_prev: &DVector<f64>, y_max: f64) -> Result<()> {
    if x_now.len() != model.dmodel.a_d.nrows() || u_prev.len() != model.u_trim.len() {
        return Err(Error::Dimension("x_now/u_pilot_prev do not match the model".into()));
    }
    if !y_max.is_finite() {
        return Err(Error::InvalidParam("y_max must be finite to build a QP".into()));
    }
    Ok(())
}

pub fn solve_mpc(model: &LlcModel, problem: &MpcProblem, opts: &QpOptions) -> Result<MpcSolution> {
    let sol = super::qp::solve_qp(&problem.qp, opts)?;
    Ok(read_solution(model, &problem.x_now, &problem.u_pilot_prev, &sol))
}

fn read_solution(model: &LlcModel, x_now: &DVector<f64>, u_pilot_prev: &DVector<f64>, sol: &QpSolution) -> MpcSolution {
    let lay = &model.layout();
    let du_prev = u_pilot_prev - &model.u_trim;
    let u_traj: Vec<DVector<f64>> = (0..lay.n_steps)
        .map(|i| {
            let mut u = u_pilot_prev.clone();
            for (ai, &a) in model.controlled.iter().enumerate() {
                u[a] = sol.x[lay.u(i, ai)] + model.u_trim[a];
            }
            u
        })
        .collect();
    let x_traj = (1..=lay.n_steps)
        .map(|i| sol.x.rows(lay.x(i), lay.n_state).into_owned())
        .collect();
    let y_pred = (0..lay.n_loads())
        .map(|i| model.load_const(i, x_now, &du_prev) + model.load_row(lay, i).dot(&sol.x))
        .collect();
    let mut u_ext = u_traj[0].clone();
    if sol.status == QpStatus::Infeasible {
        for &a in &model.controlled {
            u_ext[a] = if model.direction[a] > 0.0 {
                model.cfg.u_min[a]
            } else {
                model.cfg.u_max[a]
            };
        }
    }
    MpcSolution {
        u_traj,
        x_traj,
        y_pred,
        u_ext,
        direction: model.direction.clone(),
        controlled: model.controlled.clone(),
        kkt_residual: sol.kkt_residual,
        status: sol.status,
        iterations: sol.iterations,
    }
}

/// Limiter with the frame-invariant factorizations cached.
#[derive(Clone, Debug)]
pub struct LoadLimiter {
    pub model: LlcModel,
    prepared: PreparedQp,
}

impl LoadLimiter {
    pub fn new(model: LlcModel) -> Result<Self> {
        let (h, a_eq, c) = model.matrices();
        let prepared = PreparedQp::new(&h, &a_eq, &c)?;
        Ok(Self { model, prepared })
    }

    pub fn solve(&self, x_now: &DVector<f64>, u_pilot_prev: &DVector<f64>, y_max: f64) -> Result<MpcSolution> {
        check_inputs(&self.model, x_now, u_pilot_prev, y_max)?;
        let (g, b, d) = self.model.vectors(x_now, u_pilot_prev, y_max);
        let sol = self.prepared.solve(&g, &b, &d, &self.model.cfg.qp_options())?;
        Ok(read_solution(&self.model, x_now, u_pilot_prev, &sol))
    }
}
