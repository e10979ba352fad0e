//! Longitudinal registry data model, CSV ingestion and eligibility filtering.
//!
//! A registry file has one row per (patient, line of therapy, assessment
//! week). Rows are grouped into one [`TreatmentCourse`] per patient; the week-0
//! row of a line is its baseline and the first row at week 24 or later is its
//! follow-up assessment. Rows at other weeks are ignored.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

/// Exact header of the registry CSV.
pub const REGISTRY_HEADER: [&str; 19] = [
    "patient_id",
    "age",
    "gender",
    "disease_duration",
    "rf_positive",
    "prior_biologic",
    "ra_diagnosis",
    "line_index",
    "treatment",
    "week",
    "tender28",
    "swollen28",
    "physician_global",
    "patient_global",
    "pain",
    "haq",
    "esr",
    "crp",
    "das28",
];

/// Week at or after which an assessment counts as the line's follow-up.
pub const FOLLOWUP_WEEK: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentClass {
    SyntheticDmard,
    BiologicDmard,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Treatment {
    pub code: String,
    pub class: TreatmentClass,
}

impl Treatment {
    pub fn new(code: impl Into<String>, class: TreatmentClass) -> Self {
        Self { code: code.into(), class }
    }

    pub fn is_biologic(&self) -> bool {
        self.class == TreatmentClass::BiologicDmard
    }

    /// Eligible as a line in a sequence arm: a biologic DMARD or methotrexate.
    pub fn is_sequence_eligible(&self) -> bool {
        self.is_biologic() || self.code == METHOTREXATE
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code)
    }
}

pub const METHOTREXATE: &str = "MTX";
pub const RITUXIMAB: &str = "RTX";

#[derive(Debug, Error, PartialEq)]
pub enum CatalogueError {
    #[error("duplicate treatment code {0}")]
    DuplicateCode(String),
    #[error("{0} must be classed as a synthetic DMARD")]
    MethotrexateClass(String),
}

/// Ordered set of treatments known to an analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalogue {
    treatments: Vec<Treatment>,
}

impl Catalogue {
    pub fn new(treatments: Vec<Treatment>) -> Result<Self, CatalogueError> {
        let mut seen = HashSet::new();
        for t in &treatments {
            if !seen.insert(t.code.as_str()) {
                return Err(CatalogueError::DuplicateCode(t.code.clone()));
            }
            if t.code == METHOTREXATE && t.class != TreatmentClass::SyntheticDmard {
                return Err(CatalogueError::MethotrexateClass(t.code.clone()));
            }
        }
        Ok(Self { treatments })
    }

    /// MTX plus the six biologics of the rheumatoid-arthritis case study.
    pub fn reference() -> Self {
        let mut treatments = vec![Treatment::new(METHOTREXATE, TreatmentClass::SyntheticDmard)];
        for code in ["ADA", "ETA", "IFX", "GOL", "ABT", RITUXIMAB] {
            treatments.push(Treatment::new(code, TreatmentClass::BiologicDmard));
        }
        Self { treatments }
    }

    pub fn get(&self, code: &str) -> Option<&Treatment> {
        self.treatments.iter().find(|t| t.code == code)
    }

    pub fn treatments(&self) -> &[Treatment] {
        &self.treatments
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.treatments.iter().map(|t| t.code.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    F,
    M,
}

/// One assessment visit. Missing values are `None`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AssessmentRecord {
    pub week: u32,
    pub tender28: Option<u8>,
    pub swollen28: Option<u8>,
    pub physician_global: Option<f64>,
    pub patient_global: Option<f64>,
    pub pain: Option<f64>,
    pub haq: Option<f64>,
    pub esr: Option<f64>,
    pub crp: Option<f64>,
    pub das28: Option<f64>,
}

impl AssessmentRecord {
    /// Names of fields whose values fall outside their permitted ranges.
    pub fn range_violations(&self) -> Vec<&'static str> {
        let mut bad = Vec::new();
        if self.tender28.is_some_and(|v| v > 28) {
            bad.push("tender28");
        }
        if self.swollen28.is_some_and(|v| v > 28) {
            bad.push("swollen28");
        }
        let score = |v: Option<f64>| v.is_some_and(|x| !(0.0..=100.0).contains(&x));
        if score(self.physician_global) {
            bad.push("physician_global");
        }
        if score(self.patient_global) {
            bad.push("patient_global");
        }
        if score(self.pain) {
            bad.push("pain");
        }
        if self.haq.is_some_and(|x| !(0.0..=3.0).contains(&x) || (x * 8.0 - (x * 8.0).round()).abs() > 1e-9) {
            bad.push("haq");
        }
        if self.esr.is_some_and(|x| !(x >= 0.0)) {
            bad.push("esr");
        }
        if self.crp.is_some_and(|x| !(x >= 0.0)) {
            bad.push("crp");
        }
        if self.das28.is_some_and(|x| !(x > 0.0)) {
            bad.push("das28");
        }
        bad
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TherapyLine {
    pub line_index: u32,
    pub treatment: Treatment,
    pub baseline: AssessmentRecord,
    pub followup: Option<AssessmentRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentCourse {
    pub patient_id: String,
    pub age: f64,
    pub gender: Gender,
    pub disease_duration: f64,
    pub rf_positive: Option<bool>,
    pub prior_biologic: bool,
    pub ra_diagnosis: bool,
    pub lines: Vec<TherapyLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EligibilityCriteria {
    pub min_age: f64,
    pub require_ra_diagnosis: bool,
    pub exclude_prior_biologic: bool,
    pub min_lines: usize,
}

impl Default for EligibilityCriteria {
    fn default() -> Self {
        Self { min_age: 18.0, require_ra_diagnosis: true, exclude_prior_biologic: true, min_lines: 2 }
    }
}

impl EligibilityCriteria {
    pub fn admits(&self, course: &TreatmentCourse) -> bool {
        course.age >= self.min_age
            && (!self.require_ra_diagnosis || course.ra_diagnosis)
            && (!self.exclude_prior_biologic || !course.prior_biologic)
            && course.lines.len() >= self.min_lines
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryDataset {
    pub courses: Vec<TreatmentCourse>,
    pub catalogue: Catalogue,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("row {row}: expected {expected} columns, found {found}")]
    ColumnCount { row: usize, expected: usize, found: usize },
    #[error("row {row}: cannot parse {field} value `{value}`")]
    Parse { row: usize, field: &'static str, value: String },
    #[error("row {row}: {field} is required")]
    MissingValue { row: usize, field: &'static str },
    #[error("row {row}: unknown treatment code `{code}`")]
    UnknownTreatment { row: usize, code: String },
    #[error("row {row}: {field} value {value} out of range")]
    Range { row: usize, field: &'static str, value: String },
    #[error("row {row}: duplicate assessment for patient {patient_id}, line {line_index}, week {week}")]
    Duplicate { row: usize, patient_id: String, line_index: u32, week: u32 },
    #[error("row {row}: patient {patient_id} has inconsistent {field} across rows")]
    InconsistentPatient { row: usize, patient_id: String, field: &'static str },
    #[error("row {row}: line {line_index} of patient {patient_id} changes treatment")]
    InconsistentLine { row: usize, patient_id: String, line_index: u32 },
    #[error("patient {patient_id}: line {line_index} has no week-0 baseline row")]
    MissingBaseline { patient_id: String, line_index: u32 },
    #[error("patient {patient_id}: line indices must run 1, 2, ... without gaps (found {found:?})")]
    LineSequence { patient_id: String, found: Vec<u32> },
}

struct RowFields<'a> {
    row: usize,
    record: &'a csv::StringRecord,
}

impl RowFields<'_> {
    fn raw(&self, idx: usize) -> &str {
        self.record.get(idx).unwrap_or("").trim()
    }

    fn opt<T: std::str::FromStr>(&self, idx: usize) -> Result<Option<T>, RegistryError> {
        let s = self.raw(idx);
        if s.is_empty() {
            return Ok(None);
        }
        s.parse().map(Some).map_err(|_| RegistryError::Parse {
            row: self.row,
            field: REGISTRY_HEADER[idx],
            value: s.to_string(),
        })
    }

    fn req<T: std::str::FromStr>(&self, idx: usize) -> Result<T, RegistryError> {
        self.opt(idx)?.ok_or(RegistryError::MissingValue { row: self.row, field: REGISTRY_HEADER[idx] })
    }

    fn opt_bool(&self, idx: usize) -> Result<Option<bool>, RegistryError> {
        match self.raw(idx) {
            "" => Ok(None),
            "0" => Ok(Some(false)),
            "1" => Ok(Some(true)),
            other => Err(RegistryError::Parse { row: self.row, field: REGISTRY_HEADER[idx], value: other.to_string() }),
        }
    }

    fn req_bool(&self, idx: usize) -> Result<bool, RegistryError> {
        self.opt_bool(idx)?.ok_or(RegistryError::MissingValue { row: self.row, field: REGISTRY_HEADER[idx] })
    }

    /// Counts are parsed wide so that e.g. 35 reports a range error rather than
    /// a parse error.
    fn opt_count(&self, idx: usize) -> Result<Option<u8>, RegistryError> {
        match self.opt::<u32>(idx)? {
            None => Ok(None),
            Some(v) if v <= 28 => Ok(Some(v as u8)),
            Some(v) => Err(RegistryError::Range { row: self.row, field: REGISTRY_HEADER[idx], value: v.to_string() }),
        }
    }
}

struct ParsedRow {
    row: usize,
    patient_id: String,
    age: f64,
    gender: Gender,
    disease_duration: f64,
    rf_positive: Option<bool>,
    prior_biologic: bool,
    ra_diagnosis: bool,
    line_index: u32,
    treatment: Treatment,
    assessment: AssessmentRecord,
}

fn parse_row(row: usize, record: &csv::StringRecord, catalogue: &Catalogue) -> Result<ParsedRow, RegistryError> {
    if record.len() != REGISTRY_HEADER.len() {
        return Err(RegistryError::ColumnCount { row, expected: REGISTRY_HEADER.len(), found: record.len() });
    }
    let f = RowFields { row, record };
    let patient_id = f.raw(0).to_string();
    if patient_id.is_empty() {
        return Err(RegistryError::MissingValue { row, field: "patient_id" });
    }
    let gender = match f.raw(2) {
        "F" => Gender::F,
        "M" => Gender::M,
        "" => return Err(RegistryError::MissingValue { row, field: "gender" }),
        other => return Err(RegistryError::Parse { row, field: "gender", value: other.to_string() }),
    };
    let code = f.raw(8);
    let treatment =
        catalogue.get(code).cloned().ok_or_else(|| RegistryError::UnknownTreatment { row, code: code.to_string() })?;
    let age: f64 = f.req(1)?;
    let disease_duration: f64 = f.req(3)?;
    for (field, v) in [("age", age), ("disease_duration", disease_duration)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(RegistryError::Range { row, field, value: v.to_string() });
        }
    }
    let line_index: u32 = f.req(7)?;
    if line_index == 0 {
        return Err(RegistryError::Range { row, field: "line_index", value: "0".into() });
    }
    let assessment = AssessmentRecord {
        week: f.req(9)?,
        tender28: f.opt_count(10)?,
        swollen28: f.opt_count(11)?,
        physician_global: f.opt(12)?,
        patient_global: f.opt(13)?,
        pain: f.opt(14)?,
        haq: f.opt(15)?,
        esr: f.opt(16)?,
        crp: f.opt(17)?,
        das28: f.opt(18)?,
    };
    if let Some(field) = assessment.range_violations().first() {
        let idx = REGISTRY_HEADER.iter().position(|h| h == field).unwrap_or(0);
        return Err(RegistryError::Range { row, field, value: f.raw(idx).to_string() });
    }
    Ok(ParsedRow {
        row,
        patient_id,
        age,
        gender,
        disease_duration,
        rf_positive: f.opt_bool(4)?,
        prior_biologic: f.req_bool(5)?,
        ra_diagnosis: f.req_bool(6)?,
        line_index,
        treatment,
        assessment,
    })
}

/// Reads a registry CSV from any reader. Row numbers in errors count the
/// header as row 1.
pub fn read_registry<R: Read>(reader: R, catalogue: &Catalogue) -> Result<RegistryDataset, RegistryError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(REGISTRY_HEADER.iter().copied()) {
        return Err(RegistryError::Header {
            expected: REGISTRY_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    struct Pending {
        first: ParsedRow,
        lines: BTreeMap<u32, (Treatment, BTreeMap<u32, AssessmentRecord>)>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut pending: HashMap<String, Pending> = HashMap::new();

    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let parsed = parse_row(row, &rec, catalogue)?;
        let entry = match pending.get_mut(&parsed.patient_id) {
            Some(p) => {
                let first = &p.first;
                let mismatch = if first.age != parsed.age {
                    Some("age")
                } else if first.gender != parsed.gender {
                    Some("gender")
                } else if first.disease_duration != parsed.disease_duration {
                    Some("disease_duration")
                } else if first.rf_positive != parsed.rf_positive {
                    Some("rf_positive")
                } else if first.prior_biologic != parsed.prior_biologic {
                    Some("prior_biologic")
                } else if first.ra_diagnosis != parsed.ra_diagnosis {
                    Some("ra_diagnosis")
                } else {
                    None
                };
                if let Some(field) = mismatch {
                    return Err(RegistryError::InconsistentPatient { row, patient_id: parsed.patient_id, field });
                }
                p
            }
            None => {
                order.push(parsed.patient_id.clone());
                pending
                    .entry(parsed.patient_id.clone())
                    .or_insert(Pending { first: clone_row_header(&parsed), lines: BTreeMap::new() })
            }
        };
        let (treatment, weeks) =
            entry.lines.entry(parsed.line_index).or_insert_with(|| (parsed.treatment.clone(), BTreeMap::new()));
        if *treatment != parsed.treatment {
            return Err(RegistryError::InconsistentLine {
                row,
                patient_id: parsed.patient_id,
                line_index: parsed.line_index,
            });
        }
        let week = parsed.assessment.week;
        if weeks.insert(week, parsed.assessment).is_some() {
            return Err(RegistryError::Duplicate {
                row,
                patient_id: parsed.patient_id,
                line_index: parsed.line_index,
                week,
            });
        }
    }

    let mut courses = Vec::with_capacity(order.len());
    for id in order {
        let p = pending.remove(&id).expect("pending patient");
        let indices: Vec<u32> = p.lines.keys().copied().collect();
        if indices.iter().enumerate().any(|(i, &li)| li != i as u32 + 1) {
            return Err(RegistryError::LineSequence { patient_id: id, found: indices });
        }
        let mut lines = Vec::with_capacity(p.lines.len());
        for (line_index, (treatment, mut weeks)) in p.lines {
            let baseline = weeks
                .remove(&0)
                .ok_or_else(|| RegistryError::MissingBaseline { patient_id: id.clone(), line_index })?;
            let followup = weeks.range(FOLLOWUP_WEEK..).next().map(|(_, a)| a.clone());
            lines.push(TherapyLine { line_index, treatment, baseline, followup });
        }
        let h = p.first;
        courses.push(TreatmentCourse {
            patient_id: id,
            age: h.age,
            gender: h.gender,
            disease_duration: h.disease_duration,
            rf_positive: h.rf_positive,
            prior_biologic: h.prior_biologic,
            ra_diagnosis: h.ra_diagnosis,
            lines,
        });
    }
    Ok(RegistryDataset { courses, catalogue: catalogue.clone() })
}

fn clone_row_header(r: &ParsedRow) -> ParsedRow {
    ParsedRow {
        row: r.row,
        patient_id: r.patient_id.clone(),
        age: r.age,
        gender: r.gender,
        disease_duration: r.disease_duration,
        rf_positive: r.rf_positive,
        prior_biologic: r.prior_biologic,
        ra_diagnosis: r.ra_diagnosis,
        line_index: r.line_index,
        treatment: r.treatment.clone(),
        assessment: AssessmentRecord::default(),
    }
}

pub fn load_registry(path: &Path, catalogue: &Catalogue) -> Result<RegistryDataset, RegistryError> {
    let file = std::fs::File::open(path)?;
    read_registry(std::io::BufReader::new(file), catalogue)
}

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn bool_str(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Writes a dataset in the registry CSV format (baseline and follow-up rows
/// only).
pub fn write_registry<W: Write>(ds: &RegistryDataset, writer: W) -> Result<(), RegistryError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REGISTRY_HEADER)?;
    for c in &ds.courses {
        for line in &c.lines {
            for a in std::iter::once(&line.baseline).chain(line.followup.as_ref()) {
                w.write_record([
                    c.patient_id.clone(),
                    c.age.to_string(),
                    format!("{:?}", c.gender),
                    c.disease_duration.to_string(),
                    c.rf_positive.map(|b| bool_str(b).to_string()).unwrap_or_default(),
                    bool_str(c.prior_biologic).to_string(),
                    bool_str(c.ra_diagnosis).to_string(),
                    line.line_index.to_string(),
                    line.treatment.code.clone(),
                    a.week.to_string(),
                    opt_str(a.tender28),
                    opt_str(a.swollen28),
                    opt_str(a.physician_global),
                    opt_str(a.patient_global),
                    opt_str(a.pain),
                    opt_str(a.haq),
                    opt_str(a.esr),
                    opt_str(a.crp),
                    opt_str(a.das28),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_registry(ds: &RegistryDataset, path: &Path) -> Result<(), RegistryError> {
    let file = std::fs::File::create(path)?;
    write_registry(ds, std::io::BufWriter::new(file))
}

/// Keeps the courses admitted by `crit`, preserving order.
pub fn apply_eligibility(ds: &RegistryDataset, crit: &EligibilityCriteria) -> RegistryDataset {
    RegistryDataset {
        courses: ds.courses.iter().filter(|c| crit.admits(c)).cloned().collect(),
        catalogue: ds.catalogue.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Invariant {
    DuplicatePatientId,
    UnknownTreatment,
    LineSequence,
    BaselineNotWeekZero,
    FollowupBeforeWeek24,
    AssessmentOutOfRange,
    DemographicsOutOfRange,
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Invariant::DuplicatePatientId => "patient_id not unique",
            Invariant::UnknownTreatment => "treatment not in catalogue",
            Invariant::LineSequence => "line indices not 1..L",
            Invariant::BaselineNotWeekZero => "baseline not at week 0",
            Invariant::FollowupBeforeWeek24 => "follow-up before week 24",
            Invariant::AssessmentOutOfRange => "assessment value out of range",
            Invariant::DemographicsOutOfRange => "demographic value out of range",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub invariant: Invariant,
    /// Patient identifiers involved, one entry per offending occurrence.
    pub ids: Vec<String>,
}

impl Violation {
    pub fn count(&self) -> usize {
        self.ids.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn get(&self, invariant: Invariant) -> Option<&Violation> {
        self.violations.iter().find(|v| v.invariant == invariant)
    }
}

/// Checks every dataset invariant and groups the offenders per invariant.
pub fn validate_dataset(ds: &RegistryDataset) -> ValidationReport {
    let mut found: BTreeMap<Invariant, Vec<String>> = BTreeMap::new();
    let mut note = |inv: Invariant, id: &str| found.entry(inv).or_default().push(id.to_string());

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for c in &ds.courses {
        *counts.entry(c.patient_id.as_str()).or_default() += 1;
    }
    let mut dup_seen = HashSet::new();
    for c in &ds.courses {
        if counts[c.patient_id.as_str()] > 1 && dup_seen.insert(c.patient_id.as_str()) {
            note(Invariant::DuplicatePatientId, &c.patient_id);
        }
    }

    for c in &ds.courses {
        let id = c.patient_id.as_str();
        if !(c.age >= 0.0 && c.disease_duration >= 0.0) {
            note(Invariant::DemographicsOutOfRange, id);
        }
        if c.lines.iter().enumerate().any(|(i, l)| l.line_index != i as u32 + 1) {
            note(Invariant::LineSequence, id);
        }
        for line in &c.lines {
            if ds.catalogue.get(&line.treatment.code) != Some(&line.treatment) {
                note(Invariant::UnknownTreatment, id);
            }
            if line.baseline.week != 0 {
                note(Invariant::BaselineNotWeekZero, id);
            }
            if line.followup.as_ref().is_some_and(|f| f.week < FOLLOWUP_WEEK) {
                note(Invariant::FollowupBeforeWeek24, id);
            }
            let out_of_range = !line.baseline.range_violations().is_empty()
                || line.followup.as_ref().is_some_and(|f| !f.range_violations().is_empty());
            if out_of_range {
                note(Invariant::AssessmentOutOfRange, id);
            }
        }
    }
    ValidationReport { violations: found.into_iter().map(|(invariant, ids)| Violation { invariant, ids }).collect() }
}
