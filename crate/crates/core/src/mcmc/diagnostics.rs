use crate::stats::{mean, variance};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("need at least {needed} chains, got {got}")]
    TooFewChains { needed: usize, got: usize },
    #[error("need at least 10 draws per chain, got {0}")]
    TooFewDraws(usize),
    #[error("zero within-chain variance")]
    ZeroVariance,
}

/// Split-chain potential scale reduction factor.
pub fn compute_rhat<S: AsRef<[f64]>>(chains: &[S]) -> Result<f64, DiagnosticsError> {
    if chains.len() < 2 {
        return Err(DiagnosticsError::TooFewChains { needed: 2, got: chains.len() });
    }
    let shortest = chains.iter().map(|c| c.as_ref().len()).min().unwrap_or(0);
    if shortest < 10 {
        return Err(DiagnosticsError::TooFewDraws(shortest));
    }
    let half = shortest / 2;
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let c = &c.as_ref()[..shortest];
        halves.push(&c[..half]);
        halves.push(&c[shortest - half..]);
    }
    let n = half as f64;
    let w = halves.iter().map(|h| variance(h)).sum::<f64>() / halves.len() as f64;
    if !(w > 0.0) {
        return Err(DiagnosticsError::ZeroVariance);
    }
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let b = n * variance(&means);
    Ok((((n - 1.0) / n * w + b / n) / w).sqrt())
}

/// Effective sample size of one chain, truncating the autocorrelation sum at
/// the first negative pair of consecutive lags.
pub fn compute_ess(draws: &[f64]) -> Result<f64, DiagnosticsError> {
    let n = draws.len();
    if n < 10 {
        return Err(DiagnosticsError::TooFewDraws(n));
    }
    let m = mean(draws);
    let centred: Vec<f64> = draws.iter().map(|x| x - m).collect();
    let c0 = centred.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        return Err(DiagnosticsError::ZeroVariance);
    }
    let rho = |t: usize| -> f64 {
        centred[..n - t].iter().zip(&centred[t..]).map(|(a, b)| a * b).sum::<f64>() / n as f64 / c0
    };
    // Pairs (rho_{2k}, rho_{2k+1}) starting from k = 0, where rho_0 = 1.
    let mut sum_pairs = 0.0;
    let mut t = 0;
    while t + 1 < n {
        let pair = if t == 0 { 1.0 + rho(1) } else { rho(t) + rho(t + 1) };
        if pair < 0.0 {
            break;
        }
        sum_pairs += pair;
        t += 2;
    }
    let tau = (2.0 * sum_pairs - 1.0).max(1.0 / n as f64);
    Ok(n as f64 / tau)
}

/// Sum of per-chain effective sample sizes.
pub fn pooled_ess<S: AsRef<[f64]>>(chains: &[S]) -> Result<f64, DiagnosticsError> {
    chains.iter().map(|c| compute_ess(c.as_ref())).sum()
}
