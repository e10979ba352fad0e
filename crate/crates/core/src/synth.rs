//! Synthetic registries and trial summaries with known effects.

use crate::emulation::{Design, LineArms, TrialSummary};
use crate::registry::{
    AssessmentRecord, Catalogue, Gender, RegistryDataset, TherapyLine, TreatmentCourse, FOLLOWUP_WEEK,
};
use crate::stats::{logit, sigmoid};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid truth configuration: {0}")]
    Config(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

/// Two treatment sequences compared in one planned target trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTrialSpec {
    /// Experimental sequence (line 1, line 2).
    pub experimental: [String; 2],
    /// Control sequence (line 1, line 2).
    pub control: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RctSpec {
    pub line: usize,
    pub control: String,
    pub experimental: String,
    /// Falls back to `n_rct_per_contrast`.
    #[serde(default)]
    pub n_studies: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthConfig {
    /// Log odds ratio of each treatment against the reference MTX, per line.
    /// Missing entries are zero.
    pub true_d: [BTreeMap<String, f64>; 2],
    /// Reference-arm response log-odds per line.
    pub baseline_logit: [f64; 2],
    pub tau_true: [f64; 2],
    pub rho_true: f64,
    /// Shift of the latent disease-activity score between arms and its
    /// log-odds effect on response.
    pub confounder_strength: f64,
    /// Size of the smallest registry arm; larger arms add 5 patients each.
    pub patients_per_arm: usize,
    pub rct_patients_per_arm: usize,
    pub n_rct_per_contrast: usize,
    /// SD of study baselines around the reference log-odds.
    pub baseline_sd: f64,
    pub target_trials: Vec<TargetTrialSpec>,
    pub rcts: Vec<RctSpec>,
    /// Ineligible or single-line courses mixed into the registry.
    pub noise_courses: usize,
    /// Uniform missingness rate for follow-up ACR components.
    pub missing_rate: f64,
    pub seed: u64,
}

fn codes_map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(c, v)| (c.to_string(), *v)).collect()
}

fn seq(a: &str, b: &str) -> [String; 2] {
    [a.to_string(), b.to_string()]
}

/// The six sequence comparisons of the registry analysis.
pub fn registry_target_trials() -> Vec<TargetTrialSpec> {
    [
        (("IFX", "RTX"), ("ADA", "IFX")),
        (("ADA", "RTX"), ("ETA", "IFX")),
        (("ETA", "RTX"), ("IFX", "ADA")),
        (("IFX", "ETA"), ("ETA", "MTX")),
        (("ETA", "ADA"), ("ADA", "MTX")),
        (("ADA", "ETA"), ("IFX", "MTX")),
    ]
    .into_iter()
    .map(|((e1, e2), (c1, c2))| TargetTrialSpec { experimental: seq(e1, e2), control: seq(c1, c2) })
    .collect()
}

fn rct(line: usize, exp: &str, n: usize) -> RctSpec {
    RctSpec { line, control: "MTX".into(), experimental: exp.into(), n_studies: Some(n) }
}

/// Randomised evidence: MTX-controlled trials per biologic and line.
pub fn table1_rcts() -> Vec<RctSpec> {
    vec![
        rct(1, "ADA", 6),
        rct(1, "ETA", 1),
        rct(1, "IFX", 4),
        rct(1, "GOL", 5),
        rct(1, "ABT", 2),
        rct(1, "RTX", 1),
        rct(2, "GOL", 1),
        rct(2, "RTX", 1),
    ]
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            true_d: [
                codes_map(&[("ADA", 1.0), ("ETA", 1.2), ("IFX", 0.8), ("GOL", 0.9), ("ABT", 0.7), ("RTX", 0.6)]),
                codes_map(&[("ADA", 0.6), ("ETA", 0.8), ("IFX", 0.4), ("GOL", 0.5), ("ABT", 0.5), ("RTX", 1.0)]),
            ],
            baseline_logit: [-0.85, -1.2],
            tau_true: [0.2, 0.2],
            rho_true: 0.3,
            confounder_strength: 0.5,
            patients_per_arm: 250,
            rct_patients_per_arm: 150,
            n_rct_per_contrast: 1,
            baseline_sd: 0.3,
            target_trials: registry_target_trials(),
            rcts: table1_rcts(),
            noise_courses: 60,
            missing_rate: 0.05,
            seed: 1,
        }
    }
}

impl TruthConfig {
    /// Named configurations: `table1` (default truth with the reference
    /// randomised-evidence structure), `recovery` (one line-1 ADA trial
    /// fewer, 20 randomised studies in total) and `small` (fast runs).
    pub fn preset(name: &str) -> Result<Self, SynthError> {
        let mut cfg = Self::default();
        match name {
            "table1" => {}
            "recovery" => cfg.rcts[0].n_studies = Some(5),
            "small" => {
                cfg.patients_per_arm = 80;
                cfg.rct_patients_per_arm = 80;
                cfg.noise_courses = 10;
            }
            other => return Err(SynthError::UnknownPreset(other.to_string())),
        }
        Ok(cfg)
    }

    pub fn d(&self, line: usize, code: &str) -> f64 {
        self.true_d[line - 1].get(code).copied().unwrap_or(0.0)
    }

    /// True log odds ratio of `exp` against `ctrl` in `line`.
    pub fn contrast(&self, line: usize, ctrl: &str, exp: &str) -> f64 {
        self.d(line, exp) - self.d(line, ctrl)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if !(-1.0..=1.0).contains(&self.rho_true) {
            return bad(format!("rho_true {} outside [-1, 1]", self.rho_true));
        }
        if self.tau_true.iter().any(|t| !(*t >= 0.0)) {
            return bad("tau_true must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad("missing_rate must lie in [0, 1)".into());
        }
        if self.baseline_sd < 0.0 {
            return bad("baseline_sd must be non-negative".into());
        }
        if self.patients_per_arm < 10 || self.rct_patients_per_arm < 1 {
            return bad("arm sizes too small".into());
        }
        let cat = Catalogue::reference();
        let known = |c: &str| cat.get(c).is_some();
        for t in &self.target_trials {
            if let Some(c) = t.experimental.iter().chain(&t.control).find(|c| !known(c)) {
                return bad(format!("unknown treatment {c}"));
            }
        }
        for r in &self.rcts {
            if !(r.line == 1 || r.line == 2) || !known(&r.control) || !known(&r.experimental) {
                return bad(format!("invalid randomised contrast {r:?}"));
            }
            if r.control == r.experimental {
                return bad(format!("randomised contrast compares {} with itself", r.control));
            }
        }
        for line in &self.true_d {
            if let Some(c) = line.keys().find(|c| !known(c)) {
                return bad(format!("unknown treatment {c} in true_d"));
            }
        }
        Ok(())
    }
}

/// Realised study-level effect of one study line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyEffect {
    pub study_id: String,
    pub line: usize,
    pub control: String,
    pub experimental: String,
    pub log_or: f64,
}

/// Configuration plus realised study effects, written as JSON for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub config: TruthConfig,
    pub study_effects: Vec<StudyEffect>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const REGISTRY_STREAM: u64 = 1;
const RCT_STREAM: u64 = 2;
const EFFECT_STREAM: u64 = 3;

fn bvn(rng: &mut ChaCha8Rng, tau: [f64; 2], rho: f64) -> [f64; 2] {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    [tau[0] * z1, tau[1] * (rho * z1 + (1.0 - rho * rho).max(0.0).sqrt() * z2)]
}

/// Study-level deviations of each planned target trial, one pair per trial.
fn target_trial_deviations(cfg: &TruthConfig) -> Vec<[f64; 2]> {
    let mut rng = stream(cfg.seed, EFFECT_STREAM);
    cfg.target_trials.iter().map(|_| bvn(&mut rng, cfg.tau_true, cfg.rho_true)).collect()
}

/// Realised line effects of the planned target trials, with ids `TT01`...
/// in the order the emulation assigns them.
pub fn target_trial_effects(cfg: &TruthConfig) -> Vec<StudyEffect> {
    let dev = target_trial_deviations(cfg);
    let mut out = Vec::new();
    for (i, (t, e)) in cfg.target_trials.iter().zip(&dev).enumerate() {
        for line in 1..=2 {
            out.push(StudyEffect {
                study_id: format!("TT{:02}", i + 1),
                line,
                control: t.control[line - 1].clone(),
                experimental: t.experimental[line - 1].clone(),
                log_or: cfg.contrast(line, &t.control[line - 1], &t.experimental[line - 1]) + e[line - 1],
            });
        }
    }
    out
}

const DAS28_MEAN: f64 = 5.0;
const DAS28_SD: f64 = 1.0;

fn bounded_normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let n = Normal::new(mean, sd).expect("valid normal");
    n.sample(rng).clamp(lo, hi)
}

fn haq_round(x: f64, up: bool) -> f64 {
    let steps = x * 8.0;
    let s = if up { steps.ceil() } else { steps.floor() };
    (s / 8.0).clamp(0.0, 3.0)
}

fn baseline_record(rng: &mut ChaCha8Rng, z: f64) -> AssessmentRecord {
    AssessmentRecord {
        week: 0,
        tender28: Some(rng.random_range(6..=28)),
        swollen28: Some(rng.random_range(4..=20)),
        physician_global: Some(rng.random_range(30.0..90.0)),
        patient_global: Some(rng.random_range(30.0..90.0)),
        pain: Some(rng.random_range(30.0..90.0)),
        haq: Some(rng.random_range(8..=22) as f64 / 8.0),
        esr: Some(rng.random_range(10.0..80.0)),
        crp: Some(rng.random_range(5.0..50.0)),
        das28: Some((DAS28_MEAN + DAS28_SD * z).max(0.5)),
    }
}

#[derive(Clone, Copy)]
enum Change {
    /// At least 25% improvement.
    Improve,
    /// Less than 20% improvement.
    Fail,
    Any,
}

fn next_count(rng: &mut ChaCha8Rng, b: u8, how: Change) -> u8 {
    let b = f64::from(b);
    let v = match how {
        Change::Improve => (b * rng.random_range(0.1..0.75)).floor(),
        Change::Fail => (b * rng.random_range(0.85..1.3)).ceil(),
        Change::Any => (b * rng.random_range(0.3..1.3)).round(),
    };
    v.clamp(0.0, 28.0) as u8
}

fn factor(rng: &mut ChaCha8Rng, how: Change) -> f64 {
    match how {
        Change::Improve => rng.random_range(0.1..0.75),
        Change::Fail => rng.random_range(0.85..1.3),
        Change::Any => rng.random_range(0.3..1.3),
    }
}

fn next_score(rng: &mut ChaCha8Rng, b: f64, how: Change) -> f64 {
    (b * factor(rng, how)).min(100.0)
}

fn next_haq(rng: &mut ChaCha8Rng, b: f64, how: Change) -> f64 {
    let raw = b * factor(rng, how);
    haq_round(raw, !matches!(how, Change::Improve))
}

/// Follow-up consistent with the responder flag: responders improve every
/// component; non-responders fail either both joint counts or every other
/// component.
fn followup_record(rng: &mut ChaCha8Rng, b: &AssessmentRecord, responder: bool, missing: f64) -> AssessmentRecord {
    let (joints, others) = if responder {
        (Change::Improve, Change::Improve)
    } else if rng.random_bool(0.5) {
        (Change::Fail, Change::Any)
    } else {
        (Change::Any, Change::Fail)
    };
    let mut f = AssessmentRecord {
        week: FOLLOWUP_WEEK,
        tender28: Some(next_count(rng, b.tender28.unwrap_or(0), joints)),
        swollen28: Some(next_count(rng, b.swollen28.unwrap_or(0), joints)),
        physician_global: b.physician_global.map(|x| next_score(rng, x, others)),
        patient_global: b.patient_global.map(|x| next_score(rng, x, others)),
        pain: b.pain.map(|x| next_score(rng, x, others)),
        haq: b.haq.map(|x| next_haq(rng, x, others)),
        esr: b.esr.map(|x| x * factor(rng, others)),
        crp: b.crp.map(|x| x * factor(rng, others)),
        das28: b.das28.map(|x| (x * if responder { 0.7 } else { 1.0 }).max(0.5)),
    };
    if missing > 0.0 {
        let mut drop = |slot: &mut Option<f64>| {
            if rng.random_bool(missing) {
                *slot = None;
            }
        };
        drop(&mut f.physician_global);
        drop(&mut f.patient_global);
        drop(&mut f.pain);
        drop(&mut f.haq);
        drop(&mut f.esr);
        drop(&mut f.crp);
        for c in [&mut f.tender28, &mut f.swollen28] {
            if rng.random_bool(missing) {
                *c = None;
            }
        }
    }
    f
}

struct PatientDraw<'a> {
    id: String,
    sequence: &'a [String; 2],
    /// Arm-level shift of the latent activity score.
    z_shift: f64,
    /// Study deviation added to the response log-odds per line.
    deviation: [f64; 2],
}

fn simulate_course(rng: &mut ChaCha8Rng, cfg: &TruthConfig, cat: &Catalogue, p: PatientDraw<'_>) -> TreatmentCourse {
    let mut lines = Vec::with_capacity(2);
    for j in 0..2 {
        let z = p.z_shift + rng.sample::<f64, _>(StandardNormal);
        let baseline = baseline_record(rng, z);
        // Use the recorded DAS28 so that adjustment sees the exact confounder.
        let zr = (baseline.das28.expect("set") - DAS28_MEAN) / DAS28_SD;
        let eta = cfg.baseline_logit[j] + cfg.d(j + 1, &p.sequence[j]) + p.deviation[j] + cfg.confounder_strength * zr;
        let responder = rng.random_bool(sigmoid(eta));
        let followup = followup_record(rng, &baseline, responder, cfg.missing_rate);
        lines.push(TherapyLine {
            line_index: j as u32 + 1,
            treatment: cat.get(&p.sequence[j]).expect("validated").clone(),
            baseline,
            followup: Some(followup),
        });
    }
    TreatmentCourse {
        patient_id: p.id,
        age: bounded_normal(rng, 55.0, 12.0, 18.0, 90.0),
        gender: if rng.random_bool(0.5) { Gender::F } else { Gender::M },
        disease_duration: bounded_normal(rng, 10.0, 6.0, 0.5, 50.0),
        rf_positive: Some(rng.random_bool(0.65)),
        prior_biologic: false,
        ra_diagnosis: true,
        lines,
    }
}

fn noise_course(rng: &mut ChaCha8Rng, cfg: &TruthConfig, cat: &Catalogue, id: String, kind: usize) -> TreatmentCourse {
    let sequence = seq("ADA", "ETA");
    let mut c =
        simulate_course(rng, cfg, cat, PatientDraw { id, sequence: &sequence, z_shift: 0.0, deviation: [0.0; 2] });
    match kind % 4 {
        0 => c.age = rng.random_range(16.0..18.0),
        1 => c.prior_biologic = true,
        2 => c.ra_diagnosis = false,
        _ => c.lines.truncate(1),
    }
    c
}

/// Registry in which each planned target trial's arms are sequences of
/// descending size, so greedy matching recovers the planned pairs in order.
pub fn generate_registry(cfg: &TruthConfig) -> Result<RegistryDataset, SynthError> {
    cfg.validate()?;
    let cat = Catalogue::reference();
    let mut rng = stream(cfg.seed, REGISTRY_STREAM);
    let deviations = target_trial_deviations(cfg);
    let n_arms = 2 * cfg.target_trials.len();
    let shift = cfg.confounder_strength / 2.0;
    let mut courses = Vec::new();
    let mut next_id = 0usize;
    let mut new_id = || {
        next_id += 1;
        format!("P{next_id:06}")
    };
    for (t, (trial, dev)) in cfg.target_trials.iter().zip(&deviations).enumerate() {
        for (arm, (sequence, is_exp)) in [(&trial.experimental, true), (&trial.control, false)].into_iter().enumerate()
        {
            let rank = 2 * t + arm;
            let size = cfg.patients_per_arm + 5 * (n_arms - 1 - rank);
            for _ in 0..size {
                let draw = PatientDraw {
                    id: new_id(),
                    sequence,
                    z_shift: if is_exp { shift } else { -shift },
                    deviation: if is_exp { *dev } else { [0.0; 2] },
                };
                courses.push(simulate_course(&mut rng, cfg, &cat, draw));
            }
        }
    }
    for k in 0..cfg.noise_courses {
        courses.push(noise_course(&mut rng, cfg, &cat, new_id(), k));
    }
    Ok(RegistryDataset { courses, catalogue: cat })
}

/// Randomised trial summaries plus their realised effects.
pub fn generate_rct_summaries_with_effects(
    cfg: &TruthConfig,
) -> Result<(Vec<TrialSummary>, Vec<StudyEffect>), SynthError> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, RCT_STREAM);
    let n = cfg.rct_patients_per_arm as u64;
    let mut studies = Vec::new();
    let mut effects = Vec::new();
    for r in &cfg.rcts {
        for s in 0..r.n_studies.unwrap_or(cfg.n_rct_per_contrast) {
            let j = r.line;
            let study_id = format!("RCT{j}_{}_{}_{:02}", r.control, r.experimental, s + 1);
            let delta = cfg.contrast(j, &r.control, &r.experimental)
                + cfg.tau_true[j - 1] * rng.sample::<f64, _>(StandardNormal);
            let mu = cfg.baseline_logit[j - 1]
                + cfg.d(j, &r.control)
                + cfg.baseline_sd * rng.sample::<f64, _>(StandardNormal);
            let draw =
                |rng: &mut ChaCha8Rng, eta: f64| Binomial::new(n, sigmoid(eta)).expect("valid binomial").sample(rng);
            let r_ctrl = draw(&mut rng, mu);
            let r_exp = draw(&mut rng, mu + delta);
            let arms = LineArms {
                treat_ctrl: r.control.clone(),
                treat_exp: r.experimental.clone(),
                n_ctrl: n,
                r_ctrl,
                n_exp: n,
                r_exp,
            };
            let (design, lines) = if j == 1 {
                (Design::RctFirstLine, [Some(arms), None])
            } else {
                (Design::RctSecondLine, [None, Some(arms)])
            };
            studies.push(TrialSummary { study_id: study_id.clone(), design, lines });
            effects.push(StudyEffect {
                study_id,
                line: j,
                control: r.control.clone(),
                experimental: r.experimental.clone(),
                log_or: delta,
            });
        }
    }
    Ok((studies, effects))
}

pub fn generate_rct_summaries(cfg: &TruthConfig) -> Result<Vec<TrialSummary>, SynthError> {
    generate_rct_summaries_with_effects(cfg).map(|(s, _)| s)
}

pub fn truth(cfg: &TruthConfig) -> Result<Truth, SynthError> {
    let (_, rct) = generate_rct_summaries_with_effects(cfg)?;
    let mut study_effects = target_trial_effects(cfg);
    study_effects.extend(rct);
    Ok(Truth { config: cfg.clone(), study_effects })
}

/// Empirical log odds ratio with a 0.5 correction when any cell is empty.
pub fn empirical_log_or(a: &LineArms) -> f64 {
    let cells = [a.r_exp, a.n_exp - a.r_exp, a.r_ctrl, a.n_ctrl - a.r_ctrl];
    let c = if cells.contains(&0) { 0.5 } else { 0.0 };
    let p = |r: u64, n: u64| (r as f64 + c) / (n as f64 + 2.0 * c);
    logit(p(a.r_exp, a.n_exp)) - logit(p(a.r_ctrl, a.n_ctrl))
}
