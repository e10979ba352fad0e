use super::{ModelError, ModelSpec};
use crate::emulation::{Design, TrialSummary};

/// One line of one study, oriented so that `b < k` in the treatment ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyLine {
    pub b: usize,
    pub k: usize,
    pub r_b: u64,
    pub n_b: u64,
    pub r_k: u64,
    pub n_k: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyData {
    pub study_id: String,
    pub design: Design,
    pub lines: [Option<StudyLine>; 2],
}

impl StudyData {
    pub fn both_lines(&self) -> bool {
        self.lines[0].is_some() && self.lines[1].is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelData {
    pub treatments: Vec<String>,
    pub studies: Vec<StudyData>,
}

impl ModelData {
    /// Keeps the lines selected by the spec and drops studies left empty.
    pub fn build(summaries: &[TrialSummary], spec: &ModelSpec) -> Result<Self, ModelError> {
        spec.validate()?;
        let mut studies = Vec::new();
        for s in summaries {
            s.validate()
                .map_err(|e| ModelError::InvalidStudy { study_id: s.study_id.clone(), reason: e.to_string() })?;
            let mut lines = [None, None];
            for &j in spec.lines() {
                let Some(a) = s.line(j) else { continue };
                let index = |code: &str| {
                    spec.index_of(code).ok_or_else(|| ModelError::UnknownTreatment {
                        study_id: s.study_id.clone(),
                        code: code.to_string(),
                    })
                };
                let (c, e) = (index(&a.treat_ctrl)?, index(&a.treat_exp)?);
                lines[j - 1] = Some(if c < e {
                    StudyLine { b: c, k: e, r_b: a.r_ctrl, n_b: a.n_ctrl, r_k: a.r_exp, n_k: a.n_exp }
                } else {
                    StudyLine { b: e, k: c, r_b: a.r_exp, n_b: a.n_exp, r_k: a.r_ctrl, n_k: a.n_ctrl }
                });
            }
            if lines.iter().any(Option::is_some) {
                studies.push(StudyData { study_id: s.study_id.clone(), design: s.design, lines });
            }
        }
        if studies.is_empty() {
            return Err(ModelError::NoData);
        }
        Ok(Self { treatments: spec.treatments.clone(), studies })
    }

    pub fn n_t(&self) -> usize {
        self.treatments.len()
    }

    /// Treatments connected to the reference through line-`line` evidence.
    pub fn connected(&self, line: usize) -> Vec<bool> {
        let n = self.n_t();
        let mut reach = vec![false; n];
        reach[0] = true;
        loop {
            let mut changed = false;
            for l in self.studies.iter().filter_map(|s| s.lines[line - 1].as_ref()) {
                if reach[l.b] != reach[l.k] {
                    reach[l.b] = true;
                    reach[l.k] = true;
                    changed = true;
                }
            }
            if !changed {
                return reach;
            }
        }
    }

    /// Treatments with any evidence in line `line`.
    pub fn observed(&self, line: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n_t()];
        for l in self.studies.iter().filter_map(|s| s.lines[line - 1].as_ref()) {
            seen[l.b] = true;
            seen[l.k] = true;
        }
        seen
    }
}

impl ModelData {
    /// Removes every line-`line` comparison involving `treatment`; studies
    /// left without data are dropped.
    pub fn drop_line_evidence(&mut self, line: usize, treatment: usize) {
        for s in &mut self.studies {
            if s.lines[line - 1].as_ref().is_some_and(|l| l.b == treatment || l.k == treatment) {
                s.lines[line - 1] = None;
            }
        }
        self.studies.retain(|s| s.lines.iter().any(Option::is_some));
    }
}
