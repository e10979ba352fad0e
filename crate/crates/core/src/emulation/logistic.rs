//! Maximum-likelihood logistic regression by iteratively reweighted least squares.

use crate::stats::sigmoid;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub const MAX_ITERATIONS: usize = 100;
pub const TOLERANCE: f64 = 1e-8;
/// Coefficient magnitude beyond which a non-shrinking step sequence is
/// treated as divergence under separation.
pub const SEPARATION_BOUND: f64 = 15.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LogisticError {
    #[error("need more observations ({n_obs}) than coefficients ({p})")]
    TooFewObservations { n_obs: usize, p: usize },
    #[error("design has {rows} rows but outcome has {len} entries")]
    Shape { rows: usize, len: usize },
    #[error("design matrix is rank deficient (rank {rank} < {p})")]
    RankDeficient { rank: usize, p: usize },
    #[error("complete or quasi-complete separation: coefficients diverge")]
    Separation,
    #[error("IRLS did not converge within {0} iterations")]
    NonConvergence(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coefficients: DVector<f64>,
    pub iterations: usize,
}

impl LogisticFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let eta: f64 = row.iter().zip(self.coefficients.iter()).map(|(x, b)| x * b).sum();
        sigmoid(eta)
    }
}

fn rank(design: &DMatrix<f64>) -> usize {
    let svd = design.clone().svd(false, false);
    let max = svd.singular_values.max();
    let tol = max * design.nrows().max(design.ncols()) as f64 * f64::EPSILON * 16.0;
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}

/// Fits `P(y = 1) = sigmoid(X β)`. The design must include any intercept
/// column explicitly.
pub fn fit_logistic(design: &DMatrix<f64>, y: &[bool]) -> Result<LogisticFit, LogisticError> {
    let (n, p) = design.shape();
    if n != y.len() {
        return Err(LogisticError::Shape { rows: n, len: y.len() });
    }
    if n <= p {
        return Err(LogisticError::TooFewObservations { n_obs: n, p });
    }
    let r = rank(design);
    if r < p {
        return Err(LogisticError::RankDeficient { rank: r, p });
    }
    let yv = DVector::from_iterator(n, y.iter().map(|&b| if b { 1.0 } else { 0.0 }));
    let mut beta = DVector::zeros(p);
    let mut prev_step = f64::INFINITY;

    for iter in 1..=MAX_ITERATIONS {
        let eta = design * &beta;
        let prob = eta.map(sigmoid);
        let weights = prob.map(|q| q * (1.0 - q));
        let score = design.transpose() * (&yv - &prob);
        let mut weighted = design.clone();
        for (mut row, w) in weighted.row_iter_mut().zip(weights.iter()) {
            row *= *w;
        }
        let info = design.transpose() * weighted;
        let step = match info.cholesky() {
            Some(ch) => ch.solve(&score),
            None if beta.amax() > SEPARATION_BOUND => return Err(LogisticError::Separation),
            None => return Err(LogisticError::RankDeficient { rank: r, p }),
        };
        let step_size = step.amax();
        beta += &step;
        if !beta.iter().all(|b| b.is_finite()) {
            return Err(LogisticError::Separation);
        }
        if step_size < TOLERANCE {
            return Ok(LogisticFit { coefficients: beta, iterations: iter });
        }
        if beta.amax() > SEPARATION_BOUND && step_size >= 0.99 * prev_step {
            return Err(LogisticError::Separation);
        }
        prev_step = step_size;
    }
    if beta.amax() > SEPARATION_BOUND {
        Err(LogisticError::Separation)
    } else {
        Err(LogisticError::NonConvergence(MAX_ITERATIONS))
    }
}
