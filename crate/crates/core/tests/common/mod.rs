//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod criteria;

use std::f64::consts::TAU;

use llc_core::llc::QpProblem;
use llc_core::plant::{HarmonicPair, LtpModel, PeriodicMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(r: &mut impl Rng, nr: usize, nc: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(nr, nc, |_, _| scale * r.random_range(-1.0..1.0))
}

pub fn random_periodic(r: &mut impl Rng, nr: usize, nc: usize, order: usize, scale: f64) -> PeriodicMatrix {
    PeriodicMatrix {
        constant: random_matrix(r, nr, nc, scale),
        harmonics: (0..order)
            .map(|_| HarmonicPair {
                cos: random_matrix(r, nr, nc, scale),
                sin: random_matrix(r, nr, nc, scale),
            })
            .collect(),
    }
}

pub fn random_ltp(r: &mut impl Rng, max_states: usize, max_order: usize) -> LtpModel {
    let n = r.random_range(1..=max_states);
    let m = r.random_range(1..=3);
    let l = r.random_range(1..=2);
    let order = r.random_range(0..=max_order);
    let mut f = random_periodic(r, n, n, order, 1.0);
    for i in 0..n {
        f.constant[(i, i)] -= 3.0;
    }
    let omega = r.random_range(5.0..40.0);
    let (og, op, or) = (r.random_range(0..=max_order), r.random_range(0..=max_order), r.random_range(0..=max_order));
    let g = random_periodic(r, n, m, og, 1.0);
    let p = random_periodic(r, l, n, op, 1.0);
    let rr = random_periodic(r, l, m, or, 1.0);
    LtpModel::new(omega, f, g, p, rr)
}

/// Basis function `k` of a harmonic block layout: 0 → 1, 2n−1 → cos nψ, 2n → sin nψ.
pub fn basis(k: usize, psi: f64) -> f64 {
    if k == 0 {
        1.0
    } else {
        let n = k.div_ceil(2) as f64;
        if k % 2 == 1 {
            (n * psi).cos()
        } else {
            (n * psi).sin()
        }
    }
}

/// Galerkin projection by midpoint quadrature of the sampled matrix:
/// block (i, j) = w_i/(2π) ∫ basis_i(ψ)·M(ψ)·basis_j(ψ) dψ with w = 1 (mean) or 2.
pub fn galerkin(pm: &PeriodicMatrix, row_order: usize, col_order: usize, nq: usize) -> DMatrix<f64> {
    let (r, c) = pm.shape();
    let (nbr, nbc) = (2 * row_order + 1, 2 * col_order + 1);
    let mut out = DMatrix::zeros(r * nbr, c * nbc);
    for q in 0..nq {
        let psi = TAU * (q as f64 + 0.5) / nq as f64;
        let m = pm.eval(psi);
        for i in 0..nbr {
            let wi = if i == 0 { 1.0 } else { 2.0 } / nq as f64;
            let bi = basis(i, psi);
            for j in 0..nbc {
                let f = wi * bi * basis(j, psi);
                let mut blk = out.view_mut((i * r, j * c), (r, c));
                blk += &m * f;
            }
        }
    }
    out
}

/// Full augmented state matrix from the quadrature route plus kinematic blocks.
pub fn galerkin_a(ltp: &LtpModel, n: usize) -> DMatrix<f64> {
    let ns = ltp.f.shape().0;
    let mut a = galerkin(&ltp.f, n, n, 128);
    for k in 1..=n {
        let w = k as f64 * ltp.omega;
        for i in 0..ns {
            a[((2 * k - 1) * ns + i, 2 * k * ns + i)] -= w;
            a[(2 * k * ns + i, (2 * k - 1) * ns + i)] += w;
        }
    }
    a
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).abs().max()
}

/// 89-state LTP with the ten default body/flap labels and 79 extra rotor/inflow states.
pub fn wide_ltp(order: usize) -> LtpModel {
    let mut r = rng(89);
    let n = 89;
    let mut f = random_periodic(&mut r, n, n, order, 0.05);
    for i in 0..n {
        f.constant[(i, i)] -= 2.0;
    }
    let mut ltp = LtpModel::new(
        27.0,
        f,
        random_periodic(&mut r, n, 4, order, 0.1),
        random_periodic(&mut r, 1, n, order, 0.1),
        random_periodic(&mut r, 1, 4, order, 0.1),
    );
    let mut labels: Vec<String> = llc_core::plant::DEFAULT_STATE_LABELS.iter().map(|s| s.to_string()).collect();
    labels.extend((labels.len()..n).map(|i| format!("rotor_{i}")));
    ltp.state_labels = labels;
    ltp.input_labels = llc_core::plant::DEFAULT_INPUT_LABELS.iter().map(|s| s.to_string()).collect();
    ltp
}

/// Strictly convex QP with a strictly feasible point, ≤ 6 variables,
/// ≤ 4 inequalities and ≤ 3 equalities.
pub fn random_qp(r: &mut impl Rng) -> QpProblem {
    let n = r.random_range(1..=6);
    let me = r.random_range(0..=3.min(n - 1));
    let mi = r.random_range(0..=4);
    let l = random_matrix(r, n, n, 1.0);
    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let x0 = DVector::from_fn(n, |_, _| r.random_range(-1.0..1.0));
    let a_eq = random_matrix(r, me, n, 1.0);
    let b_eq = &a_eq * &x0;
    let c = random_matrix(r, mi, n, 1.0);
    let d = &c * &x0 + DVector::from_fn(mi, |_, _| r.random_range(0.01..1.0));
    let g = DVector::from_fn(n, |_, _| r.random_range(-5.0..5.0));
    QpProblem { h, g, a_eq, b_eq, c, d }
}

/// Exhaustive active-set oracle: solves the equality-constrained KKT system
/// for every subset of inequalities and keeps the primal and dual feasible one.
pub fn active_set_oracle(p: &QpProblem) -> Option<DVector<f64>> {
    let n = p.h.nrows();
    let me = p.a_eq.nrows();
    let mi = p.c.nrows();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << mi) {
        let act: Vec<usize> = (0..mi).filter(|i| mask & (1 << i) != 0).collect();
        let k = me + act.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
        rhs.rows_mut(0, n).copy_from(&(-&p.g));
        for i in 0..me {
            for j in 0..n {
                kkt[(n + i, j)] = p.a_eq[(i, j)];
                kkt[(j, n + i)] = p.a_eq[(i, j)];
            }
            rhs[n + i] = p.b_eq[i];
        }
        for (t, &i) in act.iter().enumerate() {
            for j in 0..n {
                kkt[(n + me + t, j)] = p.c[(i, j)];
                kkt[(j, n + me + t)] = p.c[(i, j)];
            }
            rhs[n + me + t] = p.d[i];
        }
        let Some(sol) = kkt.clone().lu().solve(&rhs) else { continue };
        if (&kkt * &sol - &rhs).abs().max() > 1e-9 * (1.0 + rhs.abs().max()) {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        let primal_ok = (0..mi).all(|i| (p.c.row(i) * &x)[0] <= p.d[i] + 1e-9);
        let dual_ok = (0..act.len()).all(|t| sol[n + me + t] >= -1e-9);
        if primal_ok && dual_ok && sol.iter().all(|v| v.is_finite()) {
            let obj = 0.5 * x.dot(&(&p.h * &x)) + p.g.dot(&x);
            if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                best = Some((obj, x));
            }
        }
    }
    best.map(|(_, x)| x)
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
