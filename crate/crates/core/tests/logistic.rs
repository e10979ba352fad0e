mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use seqnma::emulation::{fit_logistic, LogisticError};

fn to_matrix(x: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), x[0].len(), |i, j| x[i][j])
}

#[test]
fn irls_matches_newton_on_fixed_fixture() {
    let (x, y) = common::logistic_fixture(7, 40, 4);
    let fit = fit_logistic(&to_matrix(&x), &y).unwrap();
    let oracle = common::newton_logistic(&x, &y);
    for (a, b) in fit.coefficients.iter().zip(&oracle) {
        approx::assert_abs_diff_eq!(*a, *b, epsilon = 1e-6);
    }
}

#[test]
fn separated_data_is_reported() {
    let x: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64]).collect();
    let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
    assert_eq!(fit_logistic(&to_matrix(&x), &y), Err(LogisticError::Separation));
}

#[test]
fn rank_deficient_design_is_reported() {
    let x: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64, 2.0 * i as f64]).collect();
    let y: Vec<bool> = (0..20).map(|i| i % 3 == 0).collect();
    assert!(matches!(fit_logistic(&to_matrix(&x), &y), Err(LogisticError::RankDeficient { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn irls_agrees_with_newton(seed in any::<u64>(), p in 2usize..5) {
        let (x, y) = common::logistic_fixture(seed, 200, p);
        if let Ok(fit) = fit_logistic(&to_matrix(&x), &y) {
            let oracle = common::newton_logistic(&x, &y);
            for (a, b) in fit.coefficients.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }
}
