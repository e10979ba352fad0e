//! Covariate adjustment of emulated-trial responder counts and baseline
//! balance summaries.
//!
//! Adjustment fits a logistic model of response on a treatment indicator and
//! baseline covariates, pooled over both arms of one line, and standardizes
//! each arm's response probability over the pooled covariate distribution
//! (G-computation). Counts are then `round(p * n)`.

use super::arms::{ArmMember, EmulatedTrialPlan};
use super::logistic::fit_logistic;
use super::response::{classify_response, ResponseStatus};
use super::EmulationError;
use crate::registry::Gender;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    Age,
    Gender,
    DiseaseDuration,
    Tender28,
    Swollen28,
    RfPositive,
    /// ESR when recorded, else CRP.
    AcutePhase,
    Das28,
}

impl Covariate {
    pub const ALL: [Covariate; 8] = [
        Covariate::Age,
        Covariate::Gender,
        Covariate::DiseaseDuration,
        Covariate::Tender28,
        Covariate::Swollen28,
        Covariate::RfPositive,
        Covariate::AcutePhase,
        Covariate::Das28,
    ];

    pub fn is_binary(self) -> bool {
        matches!(self, Covariate::Gender | Covariate::RfPositive)
    }

    pub fn name(self) -> &'static str {
        match self {
            Covariate::Age => "age",
            Covariate::Gender => "gender",
            Covariate::DiseaseDuration => "disease_duration",
            Covariate::Tender28 => "tender28",
            Covariate::Swollen28 => "swollen28",
            Covariate::RfPositive => "rf_positive",
            Covariate::AcutePhase => "acute_phase",
            Covariate::Das28 => "das28",
        }
    }
}

/// Which baseline supplies the clinical covariates of a second-line analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateTiming {
    /// Baseline of the line being analysed.
    #[default]
    LineInitiation,
    /// First-line baseline for both lines.
    Registration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdjustmentConfig {
    pub covariates: Vec<Covariate>,
    pub timing: CovariateTiming,
}

impl Default for AdjustmentConfig {
    fn default() -> Self {
        Self { covariates: Covariate::ALL.to_vec(), timing: CovariateTiming::LineInitiation }
    }
}

/// Value of a covariate for a member, measured for analysis line `line`.
pub fn covariate_value(m: &ArmMember, line: usize, cov: Covariate, timing: CovariateTiming) -> Option<f64> {
    let idx = match timing {
        CovariateTiming::LineInitiation => line - 1,
        CovariateTiming::Registration => 0,
    };
    let base = &m.lines[idx].baseline;
    match cov {
        Covariate::Age => Some(m.age),
        Covariate::Gender => Some(if m.gender == Gender::F { 1.0 } else { 0.0 }),
        Covariate::DiseaseDuration => Some(m.disease_duration),
        Covariate::Tender28 => base.tender28.map(f64::from),
        Covariate::Swollen28 => base.swollen28.map(f64::from),
        Covariate::RfPositive => m.rf_positive.map(|b| if b { 1.0 } else { 0.0 }),
        Covariate::AcutePhase => base.esr.or(base.crp),
        Covariate::Das28 => base.das28,
    }
}

/// One analysable patient: covariates and outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRow {
    pub covariates: Vec<f64>,
    pub responder: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exclusion {
    pub patient_id: String,
    pub reason: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjustedCounts {
    pub r_ctrl: u64,
    pub n_ctrl: u64,
    pub r_exp: u64,
    pub n_exp: u64,
    pub p_ctrl: f64,
    pub p_exp: f64,
    /// Covariates dropped because they were constant in the pooled sample.
    pub dropped_covariates: Vec<usize>,
}

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Standardized responder counts for two arms given per-patient covariate
/// rows. Covariates that are constant over the pooled sample are dropped
/// before fitting (they are collinear with the intercept).
pub fn standardized_counts(ctrl: &[PatientRow], exp: &[PatientRow]) -> Result<AdjustedCounts, EmulationError> {
    if ctrl.is_empty() || exp.is_empty() {
        return Err(EmulationError::EmptyArm);
    }
    let width = ctrl[0].covariates.len();
    let pooled: Vec<&PatientRow> = ctrl.iter().chain(exp).collect();
    let dropped: Vec<usize> = (0..width)
        .filter(|&c| {
            let v0 = pooled[0].covariates[c];
            pooled.iter().all(|r| r.covariates[c] == v0)
        })
        .collect();
    let kept: Vec<usize> = (0..width).filter(|c| !dropped.contains(c)).collect();
    let row = |r: &PatientRow, treat: f64| -> Vec<f64> {
        let mut v = Vec::with_capacity(kept.len() + 2);
        v.push(1.0);
        v.push(treat);
        v.extend(kept.iter().map(|&c| r.covariates[c]));
        v
    };
    let n_ctrl = ctrl.len();
    let p = kept.len() + 2;
    let mut data = Vec::with_capacity(pooled.len() * p);
    for (i, r) in pooled.iter().enumerate() {
        data.extend(row(r, if i < n_ctrl { 0.0 } else { 1.0 }));
    }
    let design = DMatrix::from_row_slice(pooled.len(), p, &data);
    let y: Vec<bool> = pooled.iter().map(|r| r.responder).collect();
    let fit = fit_logistic(&design, &y)?;

    let standardized =
        |treat: f64| pooled.iter().map(|r| fit.predict(&row(r, treat))).sum::<f64>() / pooled.len() as f64;
    let p_ctrl = standardized(0.0);
    let p_exp = standardized(1.0);
    let count = |p: f64, n: usize| round_half_up(p * n as f64).clamp(0.0, n as f64) as u64;
    Ok(AdjustedCounts {
        r_ctrl: count(p_ctrl, ctrl.len()),
        n_ctrl: ctrl.len() as u64,
        r_exp: count(p_exp, exp.len()),
        n_exp: exp.len() as u64,
        p_ctrl,
        p_exp,
        dropped_covariates: dropped,
    })
}

/// Response status of a member in analysis line `line` (1 or 2).
pub fn member_response(m: &ArmMember, line: usize) -> Result<ResponseStatus, EmulationError> {
    let l = &m.lines[line - 1];
    match &l.followup {
        Some(f) => classify_response(&l.baseline, f),
        None => Ok(ResponseStatus::NOT_EVALUABLE),
    }
}

fn analysable(
    members: &[ArmMember],
    line: usize,
    cfg: &AdjustmentConfig,
    excluded: &mut Vec<Exclusion>,
) -> Result<Vec<PatientRow>, EmulationError> {
    let mut rows = Vec::with_capacity(members.len());
    for m in members {
        let status = member_response(m, line)?;
        if !status.evaluable {
            excluded.push(Exclusion { patient_id: m.patient_id.clone(), reason: "response not evaluable" });
            continue;
        }
        let covs: Option<Vec<f64>> = cfg.covariates.iter().map(|&c| covariate_value(m, line, c, cfg.timing)).collect();
        match covs {
            Some(covariates) => rows.push(PatientRow { covariates, responder: status.responder }),
            None => excluded.push(Exclusion { patient_id: m.patient_id.clone(), reason: "incomplete covariates" }),
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineAdjustment {
    pub counts: AdjustedCounts,
    pub raw_r_ctrl: u64,
    pub raw_r_exp: u64,
    pub excluded: Vec<Exclusion>,
}

/// Adjusted counts for one line of a plan. Patients who are not evaluable or
/// lack any configured covariate are excluded and listed.
pub fn adjust_counts(
    plan: &EmulatedTrialPlan,
    line: usize,
    cfg: &AdjustmentConfig,
) -> Result<LineAdjustment, EmulationError> {
    let mut excluded = Vec::new();
    let ctrl = analysable(&plan.control.members, line, cfg, &mut excluded)?;
    let exp = analysable(&plan.experimental.members, line, cfg, &mut excluded)?;
    let counts = standardized_counts(&ctrl, &exp)?;
    let raw = |rows: &[PatientRow]| rows.iter().filter(|r| r.responder).count() as u64;
    Ok(LineAdjustment { raw_r_ctrl: raw(&ctrl), raw_r_exp: raw(&exp), counts, excluded })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Smd {
    Value(f64),
    /// Zero pooled spread with differing means.
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceRow {
    pub covariate: Covariate,
    pub mean_exp: f64,
    pub mean_ctrl: f64,
    pub smd: Smd,
}

fn mean_and_var(xs: &[f64], binary: bool) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = if binary {
        m * (1.0 - m)
    } else if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v)
}

/// `(mean_exp - mean_ctrl) / sqrt((var_exp + var_ctrl) / 2)`; binary
/// covariates use proportions and `p (1 - p)` variances.
pub fn standardized_difference(exp: &[f64], ctrl: &[f64], binary: bool) -> (f64, f64, Smd) {
    let (me, ve) = mean_and_var(exp, binary);
    let (mc, vc) = mean_and_var(ctrl, binary);
    let sd = ((ve + vc) / 2.0).sqrt();
    let smd = if sd > 0.0 {
        Smd::Value((me - mc) / sd)
    } else if me == mc {
        Smd::Value(0.0)
    } else {
        Smd::Undefined
    };
    (me, mc, smd)
}

/// Standardized mean differences of baseline covariates between the arms of
/// one line, using every member with the covariate recorded.
pub fn baseline_balance(plan: &EmulatedTrialPlan, line: usize, cfg: &AdjustmentConfig) -> Vec<BalanceRow> {
    cfg.covariates
        .iter()
        .filter_map(|&cov| {
            let vals = |ms: &[ArmMember]| -> Vec<f64> {
                ms.iter().filter_map(|m| covariate_value(m, line, cov, cfg.timing)).collect()
            };
            let e = vals(&plan.experimental.members);
            let c = vals(&plan.control.members);
            if e.is_empty() || c.is_empty() {
                return None;
            }
            let (mean_exp, mean_ctrl, smd) = standardized_difference(&e, &c, cov.is_binary());
            Some(BalanceRow { covariate: cov, mean_exp, mean_ctrl, smd })
        })
        .collect()
}
