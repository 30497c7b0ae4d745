//! Dense primal-dual interior-point solver for strictly convex QPs
//!
//! ```text
//! minimize ½xᵀHx + gᵀx  subject to  A x = b,  C x ≤ d
//! ```
//!
//! Equalities are eliminated with a null-space basis from a QR factorization
//! of `Aᵀ`; the remaining inequality-constrained problem is solved with
//! Mehrotra's predictor-corrector method.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub c: DMatrix<f64>,
    pub d: DVector<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

impl QpStatus {
    pub fn code(self) -> u8 {
        match self {
            QpStatus::Optimal => 0,
            QpStatus::MaxIter => 1,
            QpStatus::Infeasible => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(QpStatus::Optimal),
            1 => Some(QpStatus::MaxIter),
            2 => Some(QpStatus::Infeasible),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct QpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Equality multipliers.
    pub y: DVector<f64>,
    /// Inequality multipliers, `z ≥ 0`.
    pub z: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
}

/// Factorizations that depend only on `(H, A, C)`, reusable across solves
/// with different `(g, b, d)`.
#[derive(Clone, Debug)]
pub struct PreparedQp {
    h: DMatrix<f64>,
    a_eq: DMatrix<f64>,
    c: DMatrix<f64>,
    q1: DMatrix<f64>,
    r: DMatrix<f64>,
    z: DMatrix<f64>,
    h_r: DMatrix<f64>,
    c_r: DMatrix<f64>,
}

impl PreparedQp {
    pub fn new(h: &DMatrix<f64>, a_eq: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<Self> {
        let n = h.nrows();
        let me = a_eq.nrows();
        if h.ncols() != n || a_eq.ncols() != n || c.ncols() != n {
            return Err(Error::Dimension(format!(
                "QP with {n} variables: H {}x{}, A {}x{}, C {}x{}",
                h.nrows(),
                h.ncols(),
                a_eq.nrows(),
                a_eq.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        if me > n {
            return Err(Error::Dimension(format!("{me} equalities exceed {n} variables")));
        }
        let (q1, r, z) = if me == 0 {
            (DMatrix::zeros(n, 0), DMatrix::zeros(0, 0), DMatrix::identity(n, n))
        } else {
            let mut padded = DMatrix::zeros(n, n);
            padded.view_mut((0, 0), (n, me)).copy_from(&a_eq.transpose());
            let qr = padded.qr();
            let q = qr.q();
            let r = qr.r().view((0, 0), (me, me)).into_owned();
            let scale = (0..me).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
            if (0..me).any(|i| r[(i, i)].abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE)) {
                return Err(Error::Singular("equality constraints are rank deficient".into()));
            }
            (
                q.columns(0, me).into_owned(),
                r,
                q.columns(me, n - me).into_owned(),
            )
        };
        let mut h_r = z.transpose() * (h * &z);
        h_r = (&h_r + h_r.transpose()) * 0.5;
        let c_r = c * &z;
        Ok(Self {
            h: h.clone(),
            a_eq: a_eq.clone(),
            c: c.clone(),
            q1,
            r,
            z,
            h_r,
            c_r,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.h.nrows()
    }

    pub fn solve(&self, g: &DVector<f64>, b_eq: &DVector<f64>, d: &DVector<f64>, opts: &QpOptions) -> Result<QpSolution> {
        let n = self.n_vars();
        let (me, mi) = (self.a_eq.nrows(), self.c.nrows());
        if g.len() != n || b_eq.len() != me || d.len() != mi {
            return Err(Error::Dimension("QP vector lengths do not match the matrices".into()));
        }
        let x0 = if me == 0 {
            DVector::zeros(n)
        } else {
            let v = self
                .r
                .transpose()
                .solve_lower_triangular(b_eq)
                .ok_or_else(|| Error::Singular("equality factor".into()))?;
            &self.q1 * v
        };
        let g_r = self.z.transpose() * (&self.h * &x0 + g);
        let d_r = d - &self.c * &x0;
        let p = self.z.ncols();

        let (w, zdual, status, iterations) = if mi == 0 {
            let w = if p == 0 {
                DVector::zeros(0)
            } else {
                cholesky_solve(&self.h_r, &(-&g_r))?
            };
            (w, DVector::zeros(0), QpStatus::Optimal, 0)
        } else if p == 0 {
            let feasible = d_r.iter().all(|v| *v >= -opts.tol);
            let st = if feasible { QpStatus::Optimal } else { QpStatus::Infeasible };
            (DVector::zeros(0), DVector::zeros(mi), st, 0)
        } else {
            self.interior_point(&g_r, &d_r, opts)?
        };

        let x = &x0 + &self.z * &w;
        let grad = &self.h * &x + g + self.c.transpose() * &zdual;
        let y = if me == 0 {
            DVector::zeros(0)
        } else {
            let t = -(self.q1.transpose() * &grad);
            self.r
                .solve_upper_triangular(&t)
                .ok_or_else(|| Error::Singular("equality factor".into()))?
        };
        let kkt_residual = self.kkt(&x, &y, &zdual, g, b_eq, d);
        let objective = 0.5 * x.dot(&(&self.h * &x)) + g.dot(&x);
        let status = match status {
            QpStatus::Optimal if kkt_residual > opts.tol => QpStatus::MaxIter,
            s => s,
        };
        Ok(QpSolution {
            x,
            y,
            z: zdual,
            status,
            iterations,
            kkt_residual,
            objective,
        })
    }

    /// Max of stationarity, primal feasibility, dual feasibility and
    /// complementarity, all in the ∞-norm.
    pub fn kkt(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>, g: &DVector<f64>, b: &DVector<f64>, d: &DVector<f64>) -> f64 {
        let stat = (&self.h * x + g + self.a_eq.transpose() * y + self.c.transpose() * z).amax();
        let eq = if b.is_empty() { 0.0 } else { (&self.a_eq * x - b).amax() };
        let slack = d - &self.c * x;
        let viol = slack.iter().fold(0.0, |m: f64, s| m.max(-s));
        let dual = z.iter().fold(0.0, |m: f64, v| m.max(-v));
        let comp = z
            .iter()
            .zip(slack.iter())
            .fold(0.0, |m: f64, (zi, si)| m.max((zi * si).abs()));
        stat.max(eq).max(viol).max(dual).max(comp)
    }

    fn interior_point(&self, q: &DVector<f64>, h: &DVector<f64>, opts: &QpOptions) -> Result<(DVector<f64>, DVector<f64>, QpStatus, usize)> {
        let pm = &self.h_r;
        let gm = &self.c_r;
        let mi = gm.nrows();
        let mf = mi as f64;

        // starting point from the regularized least-squares system
        let k0 = pm + gm.transpose() * gm;
        let mut w = cholesky_solve(&k0, &(gm.transpose() * h - q))?;
        let mut s = h - gm * &w;
        let mut z = -s.clone();
        let ds = (-1.5 * s.min()).max(0.0);
        let dz = (-1.5 * z.min()).max(0.0);
        s.add_scalar_mut(ds);
        z.add_scalar_mut(dz);
        let sz = s.dot(&z);
        if sz > 0.0 && z.sum() > 0.0 && s.sum() > 0.0 {
            s.add_scalar_mut(0.5 * sz / z.sum());
            z.add_scalar_mut(0.5 * sz / s.sum());
        }
        if !(s.min() > 0.0 && z.min() > 0.0) {
            s.fill(1.0);
            z.fill(1.0);
        }

        let scale_inf = 1.0 + h.amax() + gm.amax();
        for it in 0..opts.max_iter {
            let r_d = pm * &w + q + gm.transpose() * &z;
            let r_p = gm * &w + &s - h;
            let mu = s.dot(&z) / mf;

            let stat = (&self.z * &r_d).amax();
            let true_slack = &s - &r_p;
            let viol = true_slack.iter().fold(0.0, |m: f64, v| m.max(-v));
            let comp = z
                .iter()
                .zip(true_slack.iter())
                .fold(0.0, |m: f64, (a, b)| m.max((a * b).abs()));
            if stat.max(viol).max(comp) <= 0.1 * opts.tol {
                return Ok((w, z, QpStatus::Optimal, it));
            }

            let zsum = z.sum();
            if zsum > 0.0 {
                let zn = &z / zsum;
                let cert = (gm.transpose() * &zn).amax();
                let gap = h.dot(&zn);
                if gap < -1e-9 * scale_inf && cert <= 1e-7 * gap.abs() {
                    return Ok((w, z, QpStatus::Infeasible, it));
                }
            }

            let wdiag = z.component_div(&s);
            let mut kmat = pm.clone();
            kmat += gm.transpose() * DMatrix::from_diagonal(&wdiag) * gm;
            let chol = factor_spd(kmat)?;

            let newton = |r_c: &DVector<f64>| -> (DVector<f64>, DVector<f64>, DVector<f64>) {
                let rc_s = r_c.component_div(&s);
                let rhs = -&r_d - gm.transpose() * (wdiag.component_mul(&r_p) - &rc_s);
                let dw = chol.solve(&rhs);
                let gdw = gm * &dw;
                let dz = wdiag.component_mul(&(&gdw + &r_p)) - rc_s;
                let dsv = -&r_p - gdw;
                (dw, dsv, dz)
            };

            let r_c = s.component_mul(&z);
            let (_, ds_a, dz_a) = newton(&r_c);
            let alpha_a = max_step(&s, &ds_a).min(max_step(&z, &dz_a)).min(1.0);
            let mu_aff = (&s + &ds_a * alpha_a).dot(&(&z + &dz_a * alpha_a)) / mf;
            let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
            let r_c = r_c + ds_a.component_mul(&dz_a) - DVector::from_element(mi, sigma * mu);
            let (dw, dsv, dzv) = newton(&r_c);
            let alpha = (0.99 * max_step(&s, &dsv).min(max_step(&z, &dzv))).min(1.0);
            w += &dw * alpha;
            s += &dsv * alpha;
            z += &dzv * alpha;
            if !(w.iter().chain(s.iter()).chain(z.iter()).all(|v| v.is_finite())) {
                return Err(Error::Singular("interior-point iterate became non-finite".into()));
            }
        }
        Ok((w, z, QpStatus::MaxIter, opts.max_iter))
    }
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

fn factor_spd(mut k: DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let diag_max = k.diagonal().amax().max(1.0);
    let mut ridge = 0.0;
    for _ in 0..8 {
        if let Some(c) = k.clone().cholesky() {
            return Ok(c);
        }
        let bump = if ridge == 0.0 { 1e-14 * diag_max } else { ridge * 99.0 };
        for i in 0..k.nrows() {
            k[(i, i)] += bump;
        }
        ridge += bump;
    }
    Err(Error::Singular("reduced Hessian is not positive definite".into()))
}

fn cholesky_solve(k: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(factor_spd(k.clone())?.solve(b))
}

pub fn solve_qp(p: &QpProblem, opts: &QpOptions) -> Result<QpSolution> {
    PreparedQp::new(&p.h, &p.a_eq, &p.c)?.solve(&p.g, &p.b_eq, &p.d, opts)
}
