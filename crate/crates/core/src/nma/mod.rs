//! Binomial-logit network meta-analysis across treatment lines.

mod data;
mod model;
mod spec;
mod state;

pub use data::{ModelData, StudyData, StudyLine};
pub use model::{NmaModel, RandomEffectsDensity, SummaryLayout};
pub use spec::{reference_treatments, LineFilter, ModelSpec, PriorConfig, Variant, DEFAULT_T_DF};
pub use state::{ParamRef, ParameterState};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("study {study_id}: treatment {code} is not in the treatment ordering")]
    UnknownTreatment { study_id: String, code: String },
    #[error("study {study_id}: {reason}")]
    InvalidStudy { study_id: String, reason: String },
    #[error("no studies contribute data to the modelled lines")]
    NoData,
    #[error("line {line}: treatment {code} is not connected to the reference {reference}")]
    Disconnected { line: usize, code: String, reference: String },
}

/// Expands basic parameters (effects against the reference, index 0) into
/// every pairwise contrast: `out[b][k] = d[k] - d[b]`.
pub fn consistency_expand(d: &[f64]) -> Vec<Vec<f64>> {
    d.iter().map(|db| d.iter().map(|dk| dk - db).collect()).collect()
}
