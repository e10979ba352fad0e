//! Within-study correlation of first- and second-line log odds ratios,
//! estimated by resampling patients within arms.

use crate::emulation::TrialPatients;
use crate::stats::{logit, pearson, quantile_sorted, sorted_copy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

pub const MIN_ARM_SIZE: usize = 5;
pub const MIN_RESAMPLES: usize = 100;
pub const DEFAULT_RESAMPLES: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BootstrapError {
    #[error("study {study_id}: {arm} arm has {n} patients evaluable in both lines, need at least {MIN_ARM_SIZE}")]
    ArmTooSmall { study_id: String, arm: &'static str, n: usize },
    #[error("need at least {MIN_RESAMPLES} resamples, got {0}")]
    TooFewResamples(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationEstimate {
    pub study_id: String,
    /// Pearson correlation of the resampled (line 1, line 2) log odds ratios.
    pub estimate: f64,
    /// Percentile interval of the per-resample plug-in correlation.
    pub lo: f64,
    pub hi: f64,
    pub resamples: usize,
    pub n_ctrl: usize,
    pub n_exp: usize,
}

/// Per-arm 2×2 tallies: responders in line 1, line 2, and both.
#[derive(Clone, Copy, Default)]
struct Tally {
    n: f64,
    r1: f64,
    r2: f64,
    r12: f64,
}

impl Tally {
    fn add(&mut self, p: (bool, bool)) {
        self.n += 1.0;
        self.r1 += f64::from(u8::from(p.0));
        self.r2 += f64::from(u8::from(p.1));
        self.r12 += f64::from(u8::from(p.0 && p.1));
    }

    fn needs_correction(&self) -> bool {
        [self.r1, self.n - self.r1, self.r2, self.n - self.r2].contains(&0.0)
    }

    fn props(&self, c: f64) -> (f64, f64, f64) {
        let d = self.n + 2.0 * c;
        ((self.r1 + c) / d, (self.r2 + c) / d, (self.r12 + c / 2.0) / d)
    }
}

fn log_ors(ctrl: &Tally, exp: &Tally) -> (f64, f64) {
    let c = if ctrl.needs_correction() || exp.needs_correction() { 0.5 } else { 0.0 };
    let (c1, c2, _) = ctrl.props(c);
    let (e1, e2, _) = exp.props(c);
    (logit(e1) - logit(c1), logit(e2) - logit(c2))
}

/// Delta-method correlation of the two log odds ratios of one resample.
fn plug_in_correlation(ctrl: &Tally, exp: &Tally) -> f64 {
    let c = if ctrl.needs_correction() || exp.needs_correction() { 0.5 } else { 0.0 };
    let (mut cov, mut v1, mut v2) = (0.0, 0.0, 0.0);
    for t in [ctrl, exp] {
        let (p1, p2, p12) = t.props(c);
        let (q1, q2) = (p1 * (1.0 - p1), p2 * (1.0 - p2));
        cov += (p12 - p1 * p2) / (t.n * q1 * q2);
        v1 += 1.0 / (t.n * q1);
        v2 += 1.0 / (t.n * q2);
    }
    (cov / (v1 * v2).sqrt()).clamp(-1.0, 1.0)
}

fn complete(arm: &[[Option<bool>; 2]]) -> Vec<(bool, bool)> {
    arm.iter().filter_map(|p| Some((p[0]?, p[1]?))).collect()
}

pub fn bootstrap_within_correlation(
    trial: &TrialPatients,
    resamples: usize,
    seed: u64,
) -> Result<CorrelationEstimate, BootstrapError> {
    if resamples < MIN_RESAMPLES {
        return Err(BootstrapError::TooFewResamples(resamples));
    }
    let ctrl = complete(&trial.ctrl);
    let exp = complete(&trial.exp);
    for (arm, v) in [("control", &ctrl), ("experimental", &exp)] {
        if v.len() < MIN_ARM_SIZE {
            return Err(BootstrapError::ArmTooSmall { study_id: trial.study_id.clone(), arm, n: v.len() });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |arm: &[(bool, bool)]| {
        let mut t = Tally::default();
        for _ in 0..arm.len() {
            t.add(arm[rng.random_range(0..arm.len())]);
        }
        t
    };
    let mut l1 = Vec::with_capacity(resamples);
    let mut l2 = Vec::with_capacity(resamples);
    let mut plug = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let tc = draw(&ctrl);
        let te = draw(&exp);
        let (a, b) = log_ors(&tc, &te);
        l1.push(a);
        l2.push(b);
        plug.push(plug_in_correlation(&tc, &te));
    }
    let r = pearson(&l1, &l2);
    let estimate = if r.is_finite() { r.clamp(-1.0, 1.0) } else { 0.0 };
    let sorted = sorted_copy(&plug);
    Ok(CorrelationEstimate {
        study_id: trial.study_id.clone(),
        estimate,
        lo: quantile_sorted(&sorted, 0.025),
        hi: quantile_sorted(&sorted, 0.975),
        resamples,
        n_ctrl: ctrl.len(),
        n_exp: exp.len(),
    })
}
