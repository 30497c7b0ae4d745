mod common;

use common::criteria::{self, dc_gain_errors, labels, reduced_response_error};
use common::*;
use llc_core::harness::{attitude_step, Setup};
use llc_core::linalg::eigenvalues;
use llc_core::reduction::{residualize_blocks, Partition, ResidualizeOptions};
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn reduction_criterion() {
    let setup = Setup::build(&attitude_step()).unwrap();
    let c = criteria::reduction_correctness(&setup);
    assert!(c.pass, "{}", c.detail);
}

#[test]
fn reduced_model_is_ten_states() {
    let setup = Setup::build(&attitude_step()).unwrap();
    assert_eq!(setup.reduced.n_slow(), 10);
    assert!(reduced_response_error(&setup, 0.1) < 0.01);
}

/// Slow eigenvalues (sorted by real part) of a two-time-scale system whose
/// fast block is `ratio` times faster, against those of the reduced model.
fn containment_error(ratio: f64) -> f64 {
    let mut r = rng(3);
    let (ns, nf) = (3, 4);
    let n = ns + nf;
    let slow = criteria::dissipative(&mut r, ns);
    let fast = criteria::dissipative(&mut r, nf) * ratio;
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (ns, ns)).copy_from(&slow);
    a.view_mut((ns, ns), (nf, nf)).copy_from(&fast);
    a.view_mut((0, ns), (ns, nf)).copy_from(&random_matrix(&mut r, ns, nf, 1.0));
    a.view_mut((ns, 0), (nf, ns)).copy_from(&(random_matrix(&mut r, nf, ns, 1.0) * ratio));
    let p = Partition::new((0..ns).collect(), n, &labels(n)).unwrap();
    let (ah, ..) = residualize_blocks(
        &a,
        &DMatrix::zeros(n, 1),
        &DMatrix::zeros(1, n),
        &DMatrix::zeros(1, 1),
        &p,
        &labels(n),
        &ResidualizeOptions::default(),
    )
    .unwrap();
    let mut full = eigenvalues(&a);
    full.sort_by(|x, y| y.re.total_cmp(&x.re));
    let mut red = eigenvalues(&ah);
    red.sort_by(|x, y| y.re.total_cmp(&x.re));
    red.iter()
        .map(|l| full[..ns].iter().map(|f| (f - l).norm() / f.norm()).fold(f64::MAX, f64::min))
        .fold(0.0, f64::max)
}

#[test]
fn slow_eigenvalues_converge_with_separation() {
    let e: Vec<f64> = [10.0, 100.0, 1000.0].iter().map(|&r| containment_error(r)).collect();
    assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
    assert!(e[2] < 1e-2, "{e:?}");
}

#[test]
fn dc_gain_preserved_on_more_partitions() {
    let worst = dc_gain_errors(100, 1234).into_iter().fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reduced_entries_are_finite(seed in 0u64..10_000) {
        let e = dc_gain_errors(1, seed)[0];
        prop_assert!(e.is_finite() && e < 1e-8);
    }
}
