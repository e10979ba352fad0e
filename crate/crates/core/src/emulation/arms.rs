//! Sequence treatment arms and their pairing into emulated trials.

use crate::registry::{Gender, RegistryDataset, TherapyLine, Treatment, METHOTREXATE, RITUXIMAB};
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::BTreeMap;

/// A patient in a sequence arm, carrying both lines of the sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmMember {
    pub patient_id: String,
    pub age: f64,
    pub gender: Gender,
    pub disease_duration: f64,
    pub rf_positive: Option<bool>,
    pub lines: [TherapyLine; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceArm {
    pub first_line: Treatment,
    pub second_line: Treatment,
    pub members: Vec<ArmMember>,
}

impl SequenceArm {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn treatment(&self, line: usize) -> &Treatment {
        match line {
            1 => &self.first_line,
            2 => &self.second_line,
            _ => panic!("line must be 1 or 2, got {line}"),
        }
    }

    fn contains(&self, code: &str) -> bool {
        self.first_line.code == code || self.second_line.code == code
    }

    pub fn role(&self) -> ArmRole {
        match (self.contains(METHOTREXATE), self.contains(RITUXIMAB)) {
            (true, true) => ArmRole::Unusable,
            (true, false) => ArmRole::ControlOnly,
            (false, true) => ArmRole::ExperimentalOnly,
            (false, false) => ArmRole::Either,
        }
    }

    pub fn can_be_experimental(&self) -> bool {
        matches!(self.role(), ArmRole::ExperimentalOnly | ArmRole::Either)
    }

    pub fn can_be_control(&self) -> bool {
        matches!(self.role(), ArmRole::ControlOnly | ArmRole::Either)
    }

    fn key(&self) -> (&str, &str) {
        (&self.first_line.code, &self.second_line.code)
    }
}

/// Which side of an emulated trial an arm may take. MTX is always control
/// and RTX always experimental, so an arm with both can never be matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmRole {
    ControlOnly,
    ExperimentalOnly,
    Either,
    Unusable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmulatedTrialPlan {
    pub experimental: SequenceArm,
    pub control: SequenceArm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchOutcome {
    pub plans: Vec<EmulatedTrialPlan>,
    pub leftover: Vec<SequenceArm>,
}

/// Groups eligible courses by their (first line, second line) sequence.
///
/// Only lines 1 and 2 of a course are used; a course is dropped when it has
/// fewer than two lines or when either line is neither a biologic DMARD nor
/// MTX. Arms are returned ordered by treatment codes.
pub fn build_sequence_arms(ds: &RegistryDataset) -> Vec<SequenceArm> {
    let mut arms: BTreeMap<(String, String), SequenceArm> = BTreeMap::new();
    for c in &ds.courses {
        let [first, second] = match c.lines.as_slice() {
            [a, b, ..] => [a, b],
            _ => continue,
        };
        if !first.treatment.is_sequence_eligible() || !second.treatment.is_sequence_eligible() {
            continue;
        }
        let member = ArmMember {
            patient_id: c.patient_id.clone(),
            age: c.age,
            gender: c.gender,
            disease_duration: c.disease_duration,
            rf_positive: c.rf_positive,
            lines: [first.clone(), second.clone()],
        };
        arms.entry((first.treatment.code.clone(), second.treatment.code.clone()))
            .or_insert_with(|| SequenceArm {
                first_line: first.treatment.clone(),
                second_line: second.treatment.clone(),
                members: Vec::new(),
            })
            .members
            .push(member);
    }
    arms.into_values().collect()
}

/// Side assignment for a candidate pair: `Some(true)` when `a` would be the
/// experimental arm, `Some(false)` when `b` would, `None` when the pair cannot
/// form a trial. `a` is preferred as experimental when both sides are free.
pub fn assign_roles(a: &SequenceArm, b: &SequenceArm) -> Option<bool> {
    if a.first_line == b.first_line || a.second_line == b.second_line {
        return None;
    }
    if a.can_be_experimental() && b.can_be_control() {
        Some(true)
    } else if b.can_be_experimental() && a.can_be_control() {
        Some(false)
    } else {
        None
    }
}

fn by_size_then_codes(a: &SequenceArm, b: &SequenceArm) -> Ordering {
    b.size().cmp(&a.size()).then_with(|| a.key().cmp(&b.key()))
}

/// Greedy pairing: the largest unmatched arm is paired with the largest
/// compatible unmatched arm; ties go to the lexicographically smaller
/// (first, second) codes. Arms left without a partner are returned in
/// `leftover`, in the same order.
pub fn match_arms(arms: Vec<SequenceArm>) -> MatchOutcome {
    let mut pool = arms;
    pool.sort_by(by_size_then_codes);
    let mut slots: Vec<Option<SequenceArm>> = pool.into_iter().map(Some).collect();
    let mut plans = Vec::new();
    let mut leftover = Vec::new();

    for i in 0..slots.len() {
        let Some(anchor) = slots[i].take() else { continue };
        let partner = (i + 1..slots.len())
            .find_map(|j| slots[j].as_ref().and_then(|cand| assign_roles(&anchor, cand)).map(|exp| (j, exp)));
        match partner {
            Some((j, anchor_is_exp)) => {
                let other = slots[j].take().expect("partner slot");
                let (experimental, control) = if anchor_is_exp { (anchor, other) } else { (other, anchor) };
                plans.push(EmulatedTrialPlan { experimental, control });
            }
            None => leftover.push(anchor),
        }
    }
    MatchOutcome { plans, leftover }
}
