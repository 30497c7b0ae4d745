//! One function per acceptance criterion. Each returns the measured numbers
//! and a verdict so the acceptance report and the enforcing tests agree.

use std::f64::consts::TAU;
use std::time::Instant;

use llc_core::harmonic::{assemble_lti, reconstruct_augmented};
use llc_core::harness::freq::{pair_cost, FidelityConfig};
use llc_core::harness::{attitude_step, run_with_setup, summarize, Mode, PilotPolicy, Scenario, Setup, SimTrace, TraceSummary};
use llc_core::llc::{discretize, solve_qp, QpOptions, QpStatus};
use llc_core::plant::{default_surrogate, step_plant, trim_plant, LtpModel, PeriodicMatrix, PlantState};
use llc_core::reduction::{dc_gain, residualize_blocks, Partition, ResidualizeOptions};
use llc_core::StateSpace;
use nalgebra::{Complex, DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use super::*;

pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, pass: bool, detail: String) -> Self {
        Self { name, pass, detail }
    }
}

pub fn dimension_bookkeeping() -> Check {
    let ltp = wide_ltp(2);
    let t0 = Instant::now();
    let lti = assemble_lti(&ltp, 8, 0, 2).expect("wide assembly");
    let secs = t0.elapsed().as_secs_f64();
    let n = lti.a.nrows();
    Check::new(
        "dimension bookkeeping (89 states, harmonics 0-8)",
        n == 1513 && lti.state_index.len() == 1513 && secs < 10.0,
        format!("states = {n} (expected 1513), assembly {secs:.2} s (limit 10 s)"),
    )
}

/// Closed-form constant-F pattern: block-diagonal F0 plus ±nΩ·I cross blocks.
pub fn constant_f_pattern(f0: &DMatrix<f64>, omega: f64, n: usize) -> DMatrix<f64> {
    let ns = f0.nrows();
    let mut a = DMatrix::zeros(ns * (2 * n + 1), ns * (2 * n + 1));
    for b in 0..(2 * n + 1) {
        a.view_mut((b * ns, b * ns), (ns, ns)).copy_from(f0);
    }
    for k in 1..=n {
        for i in 0..ns {
            a[((2 * k - 1) * ns + i, 2 * k * ns + i)] = -(k as f64) * omega;
            a[(2 * k * ns + i, (2 * k - 1) * ns + i)] = k as f64 * omega;
        }
    }
    a
}

pub fn assembly_oracle() -> Check {
    let mut r = rng(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let ltp = random_ltp(&mut r, 6, 2);
        let n = r.random_range(0..=4);
        let m = r.random_range(0..=2);
        let l = r.random_range(0..=2);
        let lti = assemble_lti(&ltp, n, m, l).unwrap();
        worst = worst
            .max(max_abs_diff(&lti.a, &galerkin_a(&ltp, n)))
            .max(max_abs_diff(&lti.b, &galerkin(&ltp.g, n, m, 128)))
            .max(max_abs_diff(&lti.c, &galerkin(&ltp.p, l, n, 128)))
            .max(max_abs_diff(&lti.d, &galerkin(&ltp.r, l, m, 128)));
    }
    let f0 = random_matrix(&mut r, 4, 4, 1.0);
    let ltp = LtpModel::new(
        27.0,
        PeriodicMatrix::constant(f0.clone()),
        PeriodicMatrix::constant(random_matrix(&mut r, 4, 2, 1.0)),
        PeriodicMatrix::constant(random_matrix(&mut r, 1, 4, 1.0)),
        PeriodicMatrix::constant(DMatrix::zeros(1, 2)),
    );
    let exact = assemble_lti(&ltp, 3, 0, 0).unwrap().a == constant_f_pattern(&f0, 27.0, 3);
    Check::new(
        "harmonic assembly oracle",
        worst < 1e-8 && exact,
        format!("max |assembly - quadrature| = {worst:.2e} over 20 models (limit 1e-8); constant-F pattern exact: {exact}"),
    )
}

/// RMS error of the reconstructed LTI load over the final period relative to
/// the LTP peak-to-peak, for each N in `orders`.
pub fn equivalence_errors(orders: &[usize], output_extra: usize) -> Vec<f64> {
    let params = default_surrogate();
    let trim = trim_plant(&params).unwrap();
    let ltp = LtpModel::from_params(&params);
    let npsi = 128;
    let dt = TAU / params.omega / npsi as f64;
    let periods = 40;
    let du = DVector::from_vec(vec![2.0, -1.0, 0.0, 0.0]);
    let u = &trim.u_trim + &du;
    let y_trim: Vec<f64> = (0..npsi)
        .map(|k| {
            let psi = TAU * k as f64 / npsi as f64;
            params.output(&trim.state_at(psi), &trim.u_trim, psi)[params.load_output]
        })
        .collect();
    let mut s = PlantState::new(trim.state_at(0.0), 0.0, params.omega);
    let mut truth = Vec::with_capacity(periods * npsi);
    for k in 0..periods * npsi {
        s = step_plant(&params, &s, &u, dt).unwrap();
        truth.push(params.output(&s.x, &u, s.psi)[params.load_output] - y_trim[(k + 1) % npsi]);
    }
    let tail = &truth[truth.len() - npsi..];
    let ptp = tail.iter().copied().fold(f64::MIN, f64::max) - tail.iter().copied().fold(f64::MAX, f64::min);

    orders
        .iter()
        .map(|&n| {
            let lti = assemble_lti(&ltp, n, 0, n + output_extra).unwrap();
            let dm = discretize(&lti, dt).unwrap();
            let mut x = DVector::zeros(lti.a.nrows());
            let mut sq = 0.0;
            for k in 0..periods * npsi {
                x = &dm.a_d * &x + &dm.b_d * &du;
                if k >= (periods - 1) * npsi {
                    let y = &dm.c * &x + &dm.d * &du;
                    let psi = (k + 1) as f64 * dt * params.omega;
                    let e = reconstruct_augmented(&y, &lti.output_index, psi)[params.load_output] - truth[k];
                    sq += e * e;
                }
            }
            (sq / npsi as f64).sqrt() / ptp
        })
        .collect()
}

pub fn time_domain_equivalence() -> Check {
    let orders: Vec<usize> = (1..=6).collect();
    let order = default_surrogate().fourier_order;
    // output harmonics up to N + order keep every product P(ψ)·x(ψ)
    let errs = equivalence_errors(&orders, order);
    let small = orders.iter().zip(&errs).filter(|(n, _)| **n >= order + 2).all(|(_, e)| *e < 0.01);
    let monotone = errs.windows(2).all(|w| w[1] <= w[0]);
    let list: Vec<String> = orders.iter().zip(&errs).map(|(n, e)| format!("N={n}: {:.2e}%", 100.0 * e)).collect();
    Check::new(
        "LTP/LTI time-domain equivalence",
        small && monotone,
        format!("{} (limit 1% for N >= {}; non-increasing: {monotone})", list.join(", "), order + 2),
    )
}

/// Hurwitz matrix whose principal submatrices are Hurwitz too
/// (negative-definite symmetric part).
pub fn dissipative(r: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let l = random_matrix(r, n, n, 1.0);
    let k = random_matrix(r, n, n, 1.0);
    -(&l * l.transpose()) - DMatrix::identity(n, n) * 0.5 + (&k - k.transpose())
}

pub fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("x{i}")).collect()
}

pub fn dc_gain_errors(count: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let n = r.random_range(2..=8);
            let (mi, no) = (r.random_range(1..=3), r.random_range(1..=3));
            let full = llc_core::statespace::Abcd {
                a: dissipative(&mut r, n),
                b: random_matrix(&mut r, n, mi, 1.0),
                c: random_matrix(&mut r, no, n, 1.0),
                d: random_matrix(&mut r, no, mi, 1.0),
            };
            let mut rows: Vec<usize> = (0..n).collect();
            rows.shuffle(&mut r);
            rows.truncate(r.random_range(1..n));
            let p = Partition::new(rows, n, &labels(n)).unwrap();
            let (a, b, c, d) = residualize_blocks(&full.a, &full.b, &full.c, &full.d, &p, &labels(n), &ResidualizeOptions::default()).unwrap();
            let red = llc_core::statespace::Abcd { a, b, c, d };
            let g = dc_gain(&full).unwrap();
            (dc_gain(&red).unwrap() - &g).abs().max() / g.abs().max()
        })
        .collect()
}

pub fn response_at<S: StateSpace + ?Sized>(sys: &S, w: f64) -> DMatrix<Complex<f64>> {
    let n = sys.a().nrows();
    let a = sys.a().map(|v| Complex::new(v, 0.0));
    let m = DMatrix::from_fn(n, n, |i, j| if i == j { Complex::new(0.0, w) } else { Complex::new(0.0, 0.0) }) - a;
    let x = m.lu().solve(&sys.b().map(|v| Complex::new(v, 0.0))).unwrap();
    sys.c().map(|v| Complex::new(v, 0.0)) * x + sys.d().map(|v| Complex::new(v, 0.0))
}

/// Worst relative entry error between the 10-state model and the full LTI at
/// `w`, over entries above 1e-3 of the largest.
pub fn reduced_response_error(setup: &Setup, w: f64) -> f64 {
    let full = response_at(&setup.lti, w);
    let red = response_at(&setup.reduced, w);
    let scale = full.iter().map(|z| z.norm()).fold(0.0, f64::max);
    full.iter()
        .zip(red.iter())
        .filter(|(f, _)| f.norm() > 1e-3 * scale)
        .map(|(f, r)| (r - f).norm() / f.norm())
        .fold(0.0, f64::max)
}

pub fn reduction_correctness(setup: &Setup) -> Check {
    let m = |r, c, v: &[f64]| DMatrix::from_row_slice(r, c, v);
    let p = Partition::new(vec![0], 2, &labels(2)).unwrap();
    let (ah, bh, _, _) = residualize_blocks(
        &m(2, 2, &[-1.0, 0.5, 0.0, -10.0]),
        &m(2, 1, &[1.0, 2.0]),
        &m(1, 2, &[1.0, 0.0]),
        &m(1, 1, &[0.0]),
        &p,
        &labels(2),
        &ResidualizeOptions::default(),
    )
    .unwrap();
    let hand = ah[(0, 0)] == -1.0 && bh[(0, 0)] == 1.1;
    let dc = dc_gain_errors(20, 77).into_iter().fold(0.0, f64::max);
    let low = reduced_response_error(setup, 0.1);
    let high = reduced_response_error(setup, 100.0);
    Check::new(
        "reduction correctness",
        hand && dc < 1e-8 && low < 0.01,
        format!(
            "hand example A={} B={} (exact: {hand}); max DC-gain rel err {dc:.2e} (limit 1e-8); 0.1 rad/s err {:.3}% (limit 1%); 100 rad/s err {:.1}% (divergence permitted)",
            ah[(0, 0)],
            bh[(0, 0)],
            100.0 * low,
            100.0 * high
        ),
    )
}

pub struct QpStats {
    pub worst_oracle: f64,
    pub worst_kkt: f64,
    pub non_optimal: usize,
}

pub fn qp_oracle_stats(count: usize, seed: u64) -> QpStats {
    let mut r = rng(seed);
    let mut st = QpStats {
        worst_oracle: 0.0,
        worst_kkt: 0.0,
        non_optimal: 0,
    };
    for _ in 0..count {
        let p = random_qp(&mut r);
        let oracle = active_set_oracle(&p).expect("oracle finds the optimum of a feasible strictly convex QP");
        let sol = solve_qp(&p, &QpOptions::default()).unwrap();
        if sol.status == QpStatus::Optimal {
            st.worst_kkt = st.worst_kkt.max(sol.kkt_residual);
        } else {
            st.non_optimal += 1;
        }
        st.worst_oracle = st.worst_oracle.max((&sol.x - oracle).abs().max());
    }
    st
}

/// Median wall time of the load limiter over perturbed states, seconds.
pub fn median_limiter_solve(setup: &Setup, count: usize) -> f64 {
    let mut r = rng(5);
    let ns = setup.reduced.n_slow();
    let u = setup.trim.u_trim.clone();
    let mut times: Vec<f64> = (0..count)
        .map(|_| {
            let x = DVector::from_fn(ns, |_, _| r.random_range(-2.0..2.0));
            let t0 = Instant::now();
            let sol = setup.limiter.solve(&x, &u, 350.0).unwrap();
            let dt = t0.elapsed().as_secs_f64();
            std::hint::black_box(sol);
            dt
        })
        .collect();
    median(&mut times)
}

pub fn qp_solver(setup: &Setup) -> Check {
    let st = qp_oracle_stats(200, 11);
    let med = median_limiter_solve(setup, 400);
    Check::new(
        "QP solver",
        st.worst_oracle < 1e-6 && st.worst_kkt <= 1e-8 && med < 1e-3,
        format!(
            "max |x - oracle| = {:.2e} over 200 QPs (limit 1e-6); max KKT on optimal = {:.2e} (limit 1e-8); {} non-optimal; median limiter solve {:.1} us (limit 1000 us)",
            st.worst_oracle,
            st.worst_kkt,
            st.non_optimal,
            1e6 * med
        ),
    )
}

pub fn fidelity_metric() -> Vec<Check> {
    let cfg = FidelityConfig::default();
    let reference = vec![Complex::new(0.7, -0.3)];
    let gamma = [1.0];
    let mag = vec![reference[0] * 10f64.powf(1.0 / 20.0)];
    let ph = vec![reference[0] * Complex::from_polar(1.0, 7.57f64.to_radians())];
    let j_mag = pair_cost(&mag, &reference, Some(&gamma), &cfg).unwrap();
    let j_ph = pair_cost(&ph, &reference, Some(&gamma), &cfg).unwrap();
    let j_same = pair_cost(&reference, &reference, Some(&gamma), &cfg).unwrap();
    vec![
        Check::new(
            "fidelity metric: 1 dB example and identical responses",
            (j_mag - 19.950).abs() <= 1e-3 && j_same == 0.0,
            format!("J(1 dB) = {j_mag:.4} (expected 19.950 +- 1e-3); J(identical) = {j_same}"),
        ),
        Check::new(
            "fidelity metric: 1 dB equals 7.57 deg",
            (j_ph - j_mag).abs() <= 1e-3,
            format!("J(7.57 deg) = {j_ph:.4}, |J(7.57 deg) - J(1 dB)| = {:.1e} (limit 1e-3)", (j_ph - j_mag).abs()),
        ),
        Check::new(
            "fidelity metric: 7.57 deg example against the stated 19.951",
            (j_ph - 19.951).abs() <= 1e-3,
            format!("J(7.57 deg) = {j_ph:.4}, stated 19.951, difference {:.1e} (limit 1e-3)", (j_ph - 19.951).abs()),
        ),
    ]
}

/// Runs of the calibrated attitude step shared by the closed-loop criteria.
pub struct AttitudeRuns {
    pub setup: Setup,
    pub target: f64,
    pub off: SimTrace,
    pub auto: SimTrace,
    pub auto_no_aw: SimTrace,
    pub cue: SimTrace,
    pub seconds: f64,
}

pub fn scenario_in(mode: Mode) -> Scenario {
    let mut sc = attitude_step();
    sc.mode = mode;
    sc
}

impl AttitudeRuns {
    pub fn run() -> Self {
        let t0 = Instant::now();
        let base = attitude_step();
        let setup = Setup::build(&base).unwrap();
        let target = base.script[0].magnitude * setup.fcs.stick_gain;
        let off = run_with_setup(&setup, &scenario_in(Mode::LlcOff)).unwrap();
        let auto = run_with_setup(&setup, &scenario_in(Mode::AutoLimit)).unwrap();
        let seconds = t0.elapsed().as_secs_f64();

        let mut no_aw = scenario_in(Mode::AutoLimit);
        no_aw.set_param("anti_windup_gain", 0.0).unwrap();
        let no_aw_setup = Setup::build(&no_aw).unwrap();
        let auto_no_aw = run_with_setup(&no_aw_setup, &no_aw).unwrap();

        let mut cue_sc = scenario_in(Mode::Cue);
        cue_sc.pilot.policy = PilotPolicy::PerfectTracking;
        let cue = run_with_setup(&setup, &cue_sc).unwrap();
        Self {
            setup,
            target,
            off,
            auto,
            auto_no_aw,
            cue,
            seconds,
        }
    }

    pub fn summary(&self, trace: &SimTrace) -> TraceSummary {
        summarize(trace, &self.setup, self.target).unwrap()
    }
}

pub fn max_over_limit(trace: &SimTrace) -> f64 {
    trace.records.iter().map(|r| r.y_1rev_exact / r.y_max).fold(0.0, f64::max)
}

pub fn load_limiting(runs: &AttitudeRuns) -> Check {
    let off = runs.summary(&runs.off);
    let auto = runs.summary(&runs.auto);
    let y_max = runs.setup.mpc.y_max;
    let worst = max_over_limit(&runs.auto);
    let pass = off.peak_load >= 1.10 * y_max
        && auto.within_105 >= 0.99
        && worst <= 1.10
        && auto.t_reach.is_finite()
        && auto.t_reach > off.t_reach
        && runs.seconds < 60.0;
    Check::new(
        "closed-loop load limiting",
        pass,
        format!(
            "llc_off peak {:.1} lbs ({:+.1}% over {y_max}); auto_limit within 1.05*y_max on {:.2}% of frames, max {:.3}*y_max; attitude 98% reached at {:.2} s (auto_limit) vs {:.2} s (llc_off); runtime {:.2} s",
            off.peak_load,
            100.0 * (off.peak_load / y_max - 1.0),
            100.0 * auto.within_105,
            worst,
            auto.t_reach,
            off.t_reach,
            runs.seconds
        ),
    )
}

/// Unsaturated twin of the attitude step: small stick, limiter disabled.
pub fn unsaturated_traces_match() -> (bool, bool) {
    let mut sc = scenario_in(Mode::LlcOff);
    sc.script[0].magnitude = 5.0;
    sc.set_param("y_max", f64::INFINITY).unwrap();
    let setup = Setup::build(&sc).unwrap();
    let with = run_with_setup(&setup, &sc).unwrap();
    sc.set_param("anti_windup_gain", 0.0).unwrap();
    let setup0 = Setup::build(&sc).unwrap();
    let without = run_with_setup(&setup0, &sc).unwrap();
    let saturated = with
        .records
        .iter()
        .any(|r| r.u_cmd.iter().zip(&r.u_applied).any(|(a, b)| a != b));
    (csv_bytes(&with) == csv_bytes(&without), saturated)
}

pub fn csv_bytes(t: &SimTrace) -> Vec<u8> {
    let mut v = Vec::new();
    t.write_csv(&mut v).unwrap();
    v
}

pub fn anti_windup(runs: &AttitudeRuns) -> Check {
    let with = runs.summary(&runs.auto);
    let without = runs.summary(&runs.auto_no_aw);
    let clamped = runs.auto.records.iter().any(|r| r.u_applied != r.u_cmd);
    let (identical, saturated) = unsaturated_traces_match();
    Check::new(
        "anti-windup",
        clamped && with.peak_attitude < without.peak_attitude && identical && !saturated,
        format!(
            "peak attitude {:.3} deg with anti-windup vs {:.3} deg without (target {}); unsaturated traces identical: {identical}",
            with.peak_attitude, without.peak_attitude, runs.target
        ),
    )
}

/// Records where `cm` is not bit-for-bit `u_ext - u_pilot_prev`.
pub fn cm_mismatches(trace: &SimTrace) -> usize {
    trace
        .records
        .iter()
        .filter(|r| {
            r.cm.iter()
                .zip(r.u_ext.iter().zip(&r.u_pilot_prev))
                .any(|(cm, (e, p))| (e - p).to_bits() != cm.to_bits())
        })
        .count()
}

pub fn cm_semantics(runs: &AttitudeRuns) -> Check {
    let bad: usize = [&runs.off, &runs.auto, &runs.auto_no_aw, &runs.cue].iter().map(|t| cm_mismatches(t)).sum();
    let n: usize = [&runs.off, &runs.auto, &runs.auto_no_aw, &runs.cue].iter().map(|t| t.len()).sum();
    let cue = runs.summary(&runs.cue);
    let off = runs.summary(&runs.off);
    let auto = runs.summary(&runs.auto);
    let eps = 0.5;
    let between = cue.peak_load <= off.peak_load && cue.peak_load >= auto.peak_load;
    Check::new(
        "control-margin semantics",
        bad == 0 && cue.min_cm >= -eps && between,
        format!(
            "cm != u_ext - u_pilot_prev on {bad} of {n} records; perfect-tracking min cm {:.3}% (limit -{eps}%); peak load auto_limit {:.1} <= perfect-tracking {:.1} <= llc_off {:.1}",
            cue.min_cm, auto.peak_load, cue.peak_load, off.peak_load
        ),
    )
}

