mod common;

use seqnma::bootstrap::{bootstrap_within_correlation, BootstrapError};
use seqnma::emulation::TrialPatients;

#[test]
fn independent_lines_interval_usually_covers_zero() {
    let covered = (0..20)
        .filter(|&seed| {
            let est = bootstrap_within_correlation(&common::bootstrap_trial(seed, 200, false), 400, seed).unwrap();
            est.lo <= 0.0 && 0.0 <= est.hi
        })
        .count();
    assert!(covered >= 18, "covered in {covered}/20");
}

#[test]
fn duplicated_outcomes_are_strongly_correlated() {
    for seed in 0..5 {
        let est = bootstrap_within_correlation(&common::bootstrap_trial(seed, 200, true), 400, seed).unwrap();
        assert!(est.estimate > 0.95, "seed {seed}: r = {}", est.estimate);
    }
}

#[test]
fn same_seed_same_estimate_and_bounds_hold() {
    let t = common::bootstrap_trial(3, 80, false);
    let a = bootstrap_within_correlation(&t, 200, 11).unwrap();
    assert_eq!(a, bootstrap_within_correlation(&t, 200, 11).unwrap());
    for x in [a.estimate, a.lo, a.hi] {
        assert!((-1.0..=1.0).contains(&x));
    }
    assert!(a.lo <= a.hi);
    assert_eq!((a.n_ctrl, a.n_exp, a.resamples), (80, 80, 200));
}

#[test]
fn small_arms_and_few_resamples_are_rejected() {
    let t = TrialPatients {
        study_id: "x".into(),
        ctrl: vec![[Some(true), Some(false)]; 4],
        exp: vec![[Some(true), Some(true)]; 10],
    };
    assert!(matches!(bootstrap_within_correlation(&t, 200, 1), Err(BootstrapError::ArmTooSmall { .. })));
    let t = common::bootstrap_trial(1, 30, false);
    assert_eq!(bootstrap_within_correlation(&t, 50, 1), Err(BootstrapError::TooFewResamples(50)));
}
