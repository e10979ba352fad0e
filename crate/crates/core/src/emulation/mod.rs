//! Target trial emulation from registry treatment sequences.
//!
//! The pipeline is eligibility filtering, grouping of courses into sequence
//! arms, greedy pairing of arms into experimental/control plans, and per-line
//! response classification with covariate-adjusted responder counts. Each plan
//! becomes one two-line [`TrialSummary`].

pub mod adjust;
pub mod arms;
pub mod logistic;
pub mod response;

pub use adjust::{
    adjust_counts, baseline_balance, standardized_counts, AdjustmentConfig, BalanceRow, Covariate, CovariateTiming,
    PatientRow, Smd,
};
pub use arms::{build_sequence_arms, match_arms, ArmMember, EmulatedTrialPlan, MatchOutcome, SequenceArm};
pub use logistic::{fit_logistic, LogisticError, LogisticFit};
pub use response::{classify_response, ResponseStatus};

use crate::registry::{apply_eligibility, EligibilityCriteria, RegistryDataset};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmulationError {
    #[error("assessment weeks violate preconditions (baseline week {baseline}, follow-up week {followup})")]
    AssessmentWeeks { baseline: u32, followup: u32 },
    #[error("an arm has no analysable patients")]
    EmptyArm,
    #[error("logistic regression failed: {0}")]
    Logistic(#[from] LogisticError),
    #[error("{}", format_study_errors(.0))]
    Studies(Vec<StudyError>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyError {
    pub study_id: String,
    pub line: usize,
    pub error: Box<EmulationError>,
}

fn format_study_errors(errs: &[StudyError]) -> String {
    errs.iter().map(|e| format!("{} line {}: {}", e.study_id, e.line, e.error)).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    RctFirstLine,
    RctSecondLine,
    TargetTrial,
}

impl Design {
    pub fn as_str(self) -> &'static str {
        match self {
            Design::RctFirstLine => "rct_first_line",
            Design::RctSecondLine => "rct_second_line",
            Design::TargetTrial => "target_trial",
        }
    }

    pub fn is_rct(self) -> bool {
        !matches!(self, Design::TargetTrial)
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Design {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rct_first_line" => Ok(Design::RctFirstLine),
            "rct_second_line" => Ok(Design::RctSecondLine),
            "target_trial" => Ok(Design::TargetTrial),
            other => Err(format!("unknown design `{other}`")),
        }
    }
}

/// Arm-level responder counts of one line of one study.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineArms {
    pub treat_ctrl: String,
    pub treat_exp: String,
    pub n_ctrl: u64,
    pub r_ctrl: u64,
    pub n_exp: u64,
    pub r_exp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub study_id: String,
    pub design: Design,
    /// Index 0 is line 1, index 1 is line 2.
    pub lines: [Option<LineArms>; 2],
}

impl TrialSummary {
    pub fn line(&self, line: usize) -> Option<&LineArms> {
        self.lines.get(line.wrapping_sub(1)).and_then(Option::as_ref)
    }

    pub fn validate(&self) -> Result<(), SummaryError> {
        let err = |reason: String| SummaryError::Invalid { study_id: self.study_id.clone(), reason };
        let present: Vec<usize> = (1..=2).filter(|&j| self.line(j).is_some()).collect();
        let expected: &[usize] = match self.design {
            Design::RctFirstLine => &[1],
            Design::RctSecondLine => &[2],
            Design::TargetTrial => &[1, 2],
        };
        if present != expected {
            return Err(err(format!("design {} requires lines {:?}, found {:?}", self.design, expected, present)));
        }
        for j in present {
            let a = self.line(j).expect("present line");
            if a.treat_ctrl == a.treat_exp {
                return Err(err(format!("line {j} compares {} with itself", a.treat_ctrl)));
            }
            if a.r_ctrl > a.n_ctrl || a.r_exp > a.n_exp {
                return Err(err(format!("line {j} has more responders than patients")));
            }
        }
        Ok(())
    }
}

pub const SUMMARY_HEADER: [&str; 9] =
    ["study_id", "design", "line", "treat_ctrl", "treat_exp", "n_ctrl", "r_ctrl", "n_exp", "r_exp"];

#[derive(Debug, Error)]
pub enum SummaryError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected trial-summary header `{0}`")]
    Header(String),
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("study {study_id}: {reason}")]
    Invalid { study_id: String, reason: String },
}

/// Reads trial summaries (one row per study and line). Rows of a study are
/// grouped in order of first appearance.
pub fn read_summaries<R: Read>(reader: R) -> Result<Vec<TrialSummary>, SummaryError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(SUMMARY_HEADER.iter().copied()) {
        return Err(SummaryError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut out: Vec<TrialSummary> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let bad = |reason: String| SummaryError::Row { row, reason };
        if rec.len() != SUMMARY_HEADER.len() {
            return Err(bad(format!("expected {} columns, found {}", SUMMARY_HEADER.len(), rec.len())));
        }
        let field = |k: usize| rec.get(k).unwrap_or("").trim();
        let num = |k: usize| -> Result<u64, SummaryError> {
            field(k).parse().map_err(|_| bad(format!("cannot parse {} value `{}`", SUMMARY_HEADER[k], field(k))))
        };
        let design: Design = field(1).parse().map_err(&bad)?;
        let line = num(2)? as usize;
        if !(1..=2).contains(&line) {
            return Err(bad(format!("line must be 1 or 2, found {line}")));
        }
        let arms = LineArms {
            treat_ctrl: field(3).to_string(),
            treat_exp: field(4).to_string(),
            n_ctrl: num(5)?,
            r_ctrl: num(6)?,
            n_exp: num(7)?,
            r_exp: num(8)?,
        };
        let id = field(0).to_string();
        let pos = *index.entry(id.clone()).or_insert_with(|| {
            out.push(TrialSummary { study_id: id.clone(), design, lines: [None, None] });
            out.len() - 1
        });
        let s = &mut out[pos];
        if s.design != design {
            return Err(bad(format!("study {id} mixes designs")));
        }
        if s.lines[line - 1].replace(arms).is_some() {
            return Err(bad(format!("duplicate (study, line) = ({id}, {line}); multi-arm studies are not supported")));
        }
    }
    for s in &out {
        s.validate()?;
    }
    Ok(out)
}

pub fn load_summaries(path: &Path) -> Result<Vec<TrialSummary>, SummaryError> {
    read_summaries(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_summaries<W: Write>(studies: &[TrialSummary], writer: W) -> Result<(), SummaryError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER)?;
    for s in studies {
        for (j, arms) in s.lines.iter().enumerate() {
            if let Some(a) = arms {
                w.write_record([
                    s.study_id.as_str(),
                    s.design.as_str(),
                    &(j + 1).to_string(),
                    &a.treat_ctrl,
                    &a.treat_exp,
                    &a.n_ctrl.to_string(),
                    &a.r_ctrl.to_string(),
                    &a.n_exp.to_string(),
                    &a.r_exp.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_summaries(studies: &[TrialSummary], path: &Path) -> Result<(), SummaryError> {
    write_summaries(studies, std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Per-patient responses of one emulated trial, used by the within-study
/// correlation bootstrap. `None` marks a line that could not be classified.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialPatients {
    pub study_id: String,
    pub ctrl: Vec<[Option<bool>; 2]>,
    pub exp: Vec<[Option<bool>; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmulatedTrial {
    pub study_id: String,
    pub plan: EmulatedTrialPlan,
    pub adjustments: [adjust::LineAdjustment; 2],
    pub balance: [Vec<BalanceRow>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmulationReport {
    pub summaries: Vec<TrialSummary>,
    pub trials: Vec<EmulatedTrial>,
    pub leftover: Vec<SequenceArm>,
    pub patients: Vec<TrialPatients>,
}

fn responses(members: &[ArmMember]) -> Result<Vec<[Option<bool>; 2]>, EmulationError> {
    members
        .iter()
        .map(|m| {
            let mut out = [None, None];
            for (j, slot) in out.iter_mut().enumerate() {
                let s = adjust::member_response(m, j + 1)?;
                *slot = s.evaluable.then_some(s.responder);
            }
            Ok(out)
        })
        .collect()
}

/// Full emulation pipeline with diagnostics. Study ids are `TT01`, `TT02`, ...
/// in plan order.
pub fn emulate(
    ds: &RegistryDataset,
    crit: &EligibilityCriteria,
    cfg: &AdjustmentConfig,
) -> Result<EmulationReport, EmulationError> {
    let eligible = apply_eligibility(ds, crit);
    let arms = build_sequence_arms(&eligible);
    let MatchOutcome { plans, leftover } = match_arms(arms);

    let mut trials = Vec::new();
    let mut summaries = Vec::new();
    let mut patients = Vec::new();
    let mut errors = Vec::new();
    for (i, plan) in plans.into_iter().enumerate() {
        let study_id = format!("TT{:02}", i + 1);
        let mut adjusted = Vec::with_capacity(2);
        for line in 1..=2 {
            match adjust_counts(&plan, line, cfg) {
                Ok(a) => adjusted.push(a),
                Err(e) => errors.push(StudyError { study_id: study_id.clone(), line, error: Box::new(e) }),
            }
        }
        if adjusted.len() != 2 {
            continue;
        }
        let lines: Vec<LineArms> = adjusted
            .iter()
            .enumerate()
            .map(|(j, a)| LineArms {
                treat_ctrl: plan.control.treatment(j + 1).code.clone(),
                treat_exp: plan.experimental.treatment(j + 1).code.clone(),
                n_ctrl: a.counts.n_ctrl,
                r_ctrl: a.counts.r_ctrl,
                n_exp: a.counts.n_exp,
                r_exp: a.counts.r_exp,
            })
            .collect();
        let [l1, l2]: [LineArms; 2] = lines.try_into().expect("two lines");
        summaries.push(TrialSummary {
            study_id: study_id.clone(),
            design: Design::TargetTrial,
            lines: [Some(l1), Some(l2)],
        });
        patients.push(TrialPatients {
            study_id: study_id.clone(),
            ctrl: responses(&plan.control.members)?,
            exp: responses(&plan.experimental.members)?,
        });
        let balance = [baseline_balance(&plan, 1, cfg), baseline_balance(&plan, 2, cfg)];
        let [a1, a2]: [adjust::LineAdjustment; 2] = adjusted.try_into().expect("two lines");
        trials.push(EmulatedTrial { study_id, plan, adjustments: [a1, a2], balance });
    }
    if !errors.is_empty() {
        return Err(EmulationError::Studies(errors));
    }
    Ok(EmulationReport { summaries, trials, leftover, patients })
}

/// Emulated target trials as two-line trial summaries.
pub fn emulate_trials(
    ds: &RegistryDataset,
    crit: &EligibilityCriteria,
    cfg: &AdjustmentConfig,
) -> Result<Vec<TrialSummary>, EmulationError> {
    emulate(ds, crit, cfg).map(|r| r.summaries)
}

/// Distinct treatment codes used by a set of studies in one line.
pub fn line_treatments(studies: &[TrialSummary], line: usize) -> HashSet<String> {
    studies.iter().filter_map(|s| s.line(line)).flat_map(|a| [a.treat_ctrl.clone(), a.treat_exp.clone()]).collect()
}
