//! Relaxed ACR20 response classification.
//!
//! A patient responds when at least one joint count (tender or swollen)
//! improves by 20% or more AND at least one of the five other core measures
//! (physician global, patient global, pain, HAQ, acute-phase reactant) does.
//! ESR is the acute-phase reactant when it is present at both visits,
//! otherwise CRP.

use super::EmulationError;
use crate::registry::{AssessmentRecord, FOLLOWUP_WEEK};
use serde::Serialize;

pub const IMPROVEMENT_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ResponseStatus {
    pub responder: bool,
    /// False when no joint-count pair or no other-component pair is observed
    /// at both visits.
    pub evaluable: bool,
}

impl ResponseStatus {
    pub const NOT_EVALUABLE: Self = Self { responder: false, evaluable: false };
}

/// `Some(improved)` when the component is observed at both visits.
/// A zero baseline cannot improve.
fn improved(base: Option<f64>, follow: Option<f64>) -> Option<bool> {
    let (b, f) = (base?, follow?);
    Some(b > 0.0 && (b - f) / b >= IMPROVEMENT_THRESHOLD - 1e-12)
}

fn acute_phase(baseline: &AssessmentRecord, followup: &AssessmentRecord) -> Option<bool> {
    improved(baseline.esr, followup.esr).or_else(|| improved(baseline.crp, followup.crp))
}

pub fn classify_response(
    baseline: &AssessmentRecord,
    followup: &AssessmentRecord,
) -> Result<ResponseStatus, EmulationError> {
    if baseline.week != 0 || followup.week < FOLLOWUP_WEEK {
        return Err(EmulationError::AssessmentWeeks { baseline: baseline.week, followup: followup.week });
    }
    let count = |v: Option<u8>| v.map(f64::from);
    let joints = [
        improved(count(baseline.tender28), count(followup.tender28)),
        improved(count(baseline.swollen28), count(followup.swollen28)),
    ];
    let others = [
        improved(baseline.physician_global, followup.physician_global),
        improved(baseline.patient_global, followup.patient_global),
        improved(baseline.pain, followup.pain),
        improved(baseline.haq, followup.haq),
        acute_phase(baseline, followup),
    ];
    let any_observed = |xs: &[Option<bool>]| xs.iter().any(Option::is_some);
    let any_improved = |xs: &[Option<bool>]| xs.contains(&Some(true));

    if !any_observed(&joints) || !any_observed(&others) {
        return Ok(ResponseStatus::NOT_EVALUABLE);
    }
    Ok(ResponseStatus { responder: any_improved(&joints) && any_improved(&others), evaluable: true })
}
