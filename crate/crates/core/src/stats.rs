//! Small numerical helpers shared by the likelihood, sampler and reporting code.

use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln(sigmoid(x))` without overflow for large |x|.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln C(n, k)`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Binomial log-pmf with success log-odds `theta`.
pub fn binomial_logit_lpmf(r: u64, n: u64, theta: f64) -> f64 {
    ln_choose(n, r) + r as f64 * log_sigmoid(theta) + (n - r) as f64 * log_sigmoid(-theta)
}

pub fn normal_lpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * LN_2PI - sd.ln() - 0.5 * z * z
}

/// Location-scale Student-t log density.
pub fn student_t_lpdf(x: f64, loc: f64, scale: f64, df: f64) -> f64 {
    let z = (x - loc) / scale;
    ln_gamma(0.5 * (df + 1.0))
        - ln_gamma(0.5 * df)
        - 0.5 * (df * PI).ln()
        - scale.ln()
        - 0.5 * (df + 1.0) * (z * z / df).ln_1p()
}

/// Shape of a (bivariate) random-effects distribution.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum Shape {
    #[default]
    Normal,
    StudentT {
        df: f64,
    },
}

impl Shape {
    pub fn univariate_lpdf(&self, x: f64, loc: f64, scale: f64) -> f64 {
        match *self {
            Shape::Normal => normal_lpdf(x, loc, scale),
            Shape::StudentT { df } => student_t_lpdf(x, loc, scale, df),
        }
    }

    /// Log density of a bivariate vector with marginal scales `s1`, `s2`
    /// and correlation `rho` (covariance `[[s1², s1 s2 ρ], [s1 s2 ρ, s2²]]`).
    ///
    /// Returns `None` when the covariance is singular.
    pub fn bivariate_lpdf(&self, x: [f64; 2], loc: [f64; 2], s1: f64, s2: f64, rho: f64) -> Option<f64> {
        let one_minus = 1.0 - rho * rho;
        if !(s1 > 0.0 && s2 > 0.0 && one_minus > 0.0) {
            return None;
        }
        let z1 = (x[0] - loc[0]) / s1;
        let z2 = (x[1] - loc[1]) / s2;
        let q = (z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / one_minus;
        let half_log_det = s1.ln() + s2.ln() + 0.5 * one_minus.ln();
        Some(match *self {
            Shape::Normal => -LN_2PI - half_log_det - 0.5 * q,
            Shape::StudentT { df } => {
                ln_gamma(0.5 * (df + 2.0))
                    - ln_gamma(0.5 * df)
                    - (df * PI).ln()
                    - half_log_det
                    - 0.5 * (df + 2.0) * (q / df).ln_1p()
            }
        })
    }
}

/// Log density of a correlation `rho = 2r - 1` with `r ~ Beta(a, b)`.
pub fn scaled_beta_lpdf(rho: f64, a: f64, b: f64) -> f64 {
    if !(rho > -1.0 && rho < 1.0) {
        return f64::NEG_INFINITY;
    }
    let r = 0.5 * (rho + 1.0);
    let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    (a - 1.0) * r.ln() + (b - 1.0) * (1.0 - r).ln() - ln_beta - std::f64::consts::LN_2
}

pub fn uniform_lpdf(x: f64, upper: f64) -> f64 {
    if (0.0..=upper).contains(&x) {
        -upper.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Quantile by linear interpolation between order statistics
/// (`h = (n - 1) p`, the "type 7" rule). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}
