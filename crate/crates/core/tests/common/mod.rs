//! Independent reference implementations shared by the test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqnma::emulation::{ArmMember, Design, LineArms, TrialSummary};
use seqnma::emulation::{EmulatedTrialPlan, MatchOutcome, SequenceArm};
use seqnma::mcmc::{Coordinate, Target, Transform};
use seqnma::registry::{AssessmentRecord, Catalogue, Gender, TherapyLine};

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Newton–Raphson on the Bernoulli log-likelihood, iterated to a fixed count.
pub fn newton_logistic(x: &[Vec<f64>], y: &[bool]) -> Vec<f64> {
    let p = x[0].len();
    let mut beta = vec![0.0; p];
    for _ in 0..200 {
        let mut grad = vec![0.0; p];
        let mut hess = vec![vec![0.0; p]; p];
        for (row, &yi) in x.iter().zip(y) {
            let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mu = 1.0 / (1.0 + (-eta).exp());
            let w = mu * (1.0 - mu);
            let resid = if yi { 1.0 } else { 0.0 } - mu;
            for a in 0..p {
                grad[a] += row[a] * resid;
                for b in 0..p {
                    hess[a][b] += w * row[a] * row[b];
                }
            }
        }
        let step = solve(hess, grad);
        let size = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        for (b, s) in beta.iter_mut().zip(&step) {
            *b += s;
        }
        if size < 1e-13 {
            break;
        }
    }
    beta
}

/// Random design with an intercept column and a response drawn from a
/// moderate logistic model (no separation at these sizes in practice).
pub fn logistic_fixture(seed: u64, n: usize, p: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-0.8..0.8)).collect();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = vec![1.0];
        for _ in 1..p {
            row.push(rng.random_range(-1.5..1.5));
        }
        let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
        y.push(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()));
        x.push(row);
    }
    (x, y)
}

/// Expected classifier outcomes for the 64 combinations of six factors, most
/// significant first: tender observed, tender improved, swollen observed,
/// swollen improved, HAQ observed, HAQ improved. `R` responder, `N`
/// evaluable non-responder, `-` not evaluable.
pub const CLASSIFIER_TABLE: &str =
    concat!("----------NN--NR", "----------NN--NR", "--NN--NN--NN--NR", "--NR--NR--NR--NR",);

pub fn classifier_case(i: usize) -> (AssessmentRecord, AssessmentRecord) {
    let bit = |b: usize| (i >> b) & 1 == 1;
    let (t_obs, t_imp, s_obs, s_imp, h_obs, h_imp) = (bit(5), bit(4), bit(3), bit(2), bit(1), bit(0));
    let mut base = AssessmentRecord { week: 0, ..Default::default() };
    let mut fu = AssessmentRecord { week: 24, ..Default::default() };
    if t_obs {
        base.tender28 = Some(10);
        fu.tender28 = Some(if t_imp { 7 } else { 9 });
    }
    if s_obs {
        base.swollen28 = Some(10);
        fu.swollen28 = Some(if s_imp { 8 } else { 9 });
    }
    if h_obs {
        base.haq = Some(2.0);
        fu.haq = Some(if h_imp { 1.5 } else { 1.875 });
    }
    (base, fu)
}

/// Dense bivariate normal log density via an explicit 2×2 inverse.
pub fn dense_bvn(x: [f64; 2], mean: [f64; 2], cov: [[f64; 2]; 2]) -> f64 {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let inv = [[cov[1][1] / det, -cov[0][1] / det], [-cov[1][0] / det, cov[0][0] / det]];
    let d = [x[0] - mean[0], x[1] - mean[1]];
    let q = d[0] * (inv[0][0] * d[0] + inv[0][1] * d[1]) + d[1] * (inv[1][0] * d[0] + inv[1][1] * d[1]);
    -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * q
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * (x - mean).powi(2) / var
}

// ---- matching ----

pub fn contains(arm: &SequenceArm, code: &str) -> bool {
    arm.first_line.code == code || arm.second_line.code == code
}

pub fn can_pair(exp: &SequenceArm, ctrl: &SequenceArm) -> bool {
    exp.first_line != ctrl.first_line
        && exp.second_line != ctrl.second_line
        && !contains(exp, "MTX")
        && !contains(ctrl, "RTX")
}

pub fn plan_is_valid(p: &EmulatedTrialPlan) -> bool {
    can_pair(&p.experimental, &p.control)
}

/// Reference greedy matcher written from the rule statement.
pub fn greedy_oracle(arms: &[SequenceArm]) -> Vec<((String, String), (String, String))> {
    let mut order: Vec<&SequenceArm> = arms.iter().collect();
    order.sort_by(|a, b| b.members.len().cmp(&a.members.len()).then_with(|| key(a).cmp(&key(b))));
    let mut used = vec![false; order.len()];
    let mut plans = Vec::new();
    for i in 0..order.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        for j in i + 1..order.len() {
            if used[j] {
                continue;
            }
            let (a, b) = (order[i], order[j]);
            let pair = if can_pair(a, b) {
                Some((a, b))
            } else if can_pair(b, a) {
                Some((b, a))
            } else {
                None
            };
            if let Some((e, c)) = pair {
                used[j] = true;
                plans.push((key(e), key(c)));
                break;
            }
        }
    }
    plans
}

pub fn key(a: &SequenceArm) -> (String, String) {
    (a.first_line.code.clone(), a.second_line.code.clone())
}

/// Checks constraints, single use, greedy optimality of the leftovers and
/// agreement with the reference matcher. Returns a description of the first
/// problem found.
pub fn check_matching(arms: &[SequenceArm], out: &MatchOutcome) -> Result<(), String> {
    let mut seen = std::collections::BTreeSet::new();
    for p in &out.plans {
        if !plan_is_valid(p) {
            return Err(format!("invalid plan {:?} vs {:?}", key(&p.experimental), key(&p.control)));
        }
        for k in [key(&p.experimental), key(&p.control)] {
            if !seen.insert(k.clone()) {
                return Err(format!("arm {k:?} used twice"));
            }
        }
    }
    for a in &out.leftover {
        if !seen.insert(key(a)) {
            return Err(format!("arm {:?} both matched and left over", key(a)));
        }
    }
    if seen.len() != arms.len() {
        return Err("arms lost".into());
    }
    for (i, a) in out.leftover.iter().enumerate() {
        for b in &out.leftover[i + 1..] {
            if can_pair(a, b) || can_pair(b, a) {
                return Err(format!("missed compatible pair {:?} {:?}", key(a), key(b)));
            }
        }
    }
    let got: Vec<_> = out.plans.iter().map(|p| (key(&p.experimental), key(&p.control))).collect();
    if got != greedy_oracle(arms) {
        return Err(format!("plans differ from reference greedy: {got:?}"));
    }
    Ok(())
}

fn member(id: usize, first: &str, second: &str) -> ArmMember {
    let cat = Catalogue::reference();
    let line = |i: u32, code: &str| TherapyLine {
        line_index: i,
        treatment: cat.get(code).unwrap().clone(),
        baseline: AssessmentRecord { week: 0, ..Default::default() },
        followup: None,
    };
    ArmMember {
        patient_id: format!("P{id}"),
        age: 50.0,
        gender: Gender::F,
        disease_duration: 5.0,
        rf_positive: Some(true),
        lines: [line(1, first), line(2, second)],
    }
}

pub const CODES: [&str; 7] = ["MTX", "ADA", "ETA", "IFX", "GOL", "ABT", "RTX"];

/// Random distinct sequence arms with sizes in 1..=40.
pub fn random_arms(rng: &mut ChaCha8Rng) -> Vec<SequenceArm> {
    let n = rng.random_range(0..=12);
    let mut keys = std::collections::BTreeSet::new();
    while keys.len() < n {
        let a = CODES[rng.random_range(0..7)];
        let b = CODES[rng.random_range(0..7)];
        keys.insert((a, b));
    }
    let mut id = 0;
    keys.into_iter()
        .map(|(a, b)| {
            let size = rng.random_range(1..=40);
            let members = (0..size)
                .map(|_| {
                    id += 1;
                    member(id, a, b)
                })
                .collect();
            let cat = Catalogue::reference();
            SequenceArm { first_line: cat.get(a).unwrap().clone(), second_line: cat.get(b).unwrap().clone(), members }
        })
        .collect()
}

// ---- sampler targets ----

/// One normal observation y = 1 with unit variance and a N(0, 1) prior.
pub struct ConjugateToy {
    coords: Vec<Coordinate>,
}

impl ConjugateToy {
    pub fn new() -> Self {
        Self { coords: vec![Coordinate { name: "x".into(), transform: Transform::Identity }] }
    }
}

impl Target for ConjugateToy {
    type State = f64;
    fn coordinates(&self) -> &[Coordinate] {
        &self.coords
    }
    fn initial_state(&self) -> f64 {
        0.0
    }
    fn get(&self, s: &f64, _: usize) -> f64 {
        *s
    }
    fn set(&self, s: &mut f64, _: usize, v: f64) {
        *s = v;
    }
    fn log_density(&self, s: &f64) -> f64 {
        normal_logpdf(1.0, *s, 1.0) + normal_logpdf(*s, 0.0, 1.0)
    }
    fn recorded_names(&self) -> Vec<String> {
        vec!["x".into()]
    }
    fn record(&self, s: &f64, out: &mut Vec<f64>) {
        out.push(*s);
    }
}

/// Single binomial arm on the logit scale with a vague normal prior.
pub struct BinomialLogit {
    pub r: u64,
    pub n: u64,
    pub prior_var: f64,
    coords: Vec<Coordinate>,
}

impl BinomialLogit {
    pub fn new(r: u64, n: u64, prior_var: f64) -> Self {
        Self { r, n, prior_var, coords: vec![Coordinate { name: "theta".into(), transform: Transform::Identity }] }
    }

    pub fn log_density_at(&self, theta: f64) -> f64 {
        seqnma::stats::binomial_logit_lpmf(self.r, self.n, theta) + normal_logpdf(theta, 0.0, self.prior_var)
    }

    /// Posterior CDF by trapezoidal integration on a fine grid.
    pub fn grid_cdf(&self) -> impl Fn(f64) -> f64 {
        let (lo, hi, m) = (-15.0, 15.0, 60_001usize);
        let h = (hi - lo) / (m - 1) as f64;
        let xs: Vec<f64> = (0..m).map(|i| lo + h * i as f64).collect();
        let lmax = xs.iter().map(|&x| self.log_density_at(x)).fold(f64::NEG_INFINITY, f64::max);
        let dens: Vec<f64> = xs.iter().map(|&x| (self.log_density_at(x) - lmax).exp()).collect();
        let mut cum = vec![0.0; m];
        for i in 1..m {
            cum[i] = cum[i - 1] + 0.5 * h * (dens[i] + dens[i - 1]);
        }
        let total = cum[m - 1];
        move |x: f64| {
            if x <= lo {
                return 0.0;
            }
            if x >= hi {
                return 1.0;
            }
            let pos = (x - lo) / h;
            let i = pos.floor() as usize;
            let f = pos - i as f64;
            (cum[i] + f * (cum[i + 1] - cum[i])) / total
        }
    }
}

impl Target for BinomialLogit {
    type State = f64;
    fn coordinates(&self) -> &[Coordinate] {
        &self.coords
    }
    fn initial_state(&self) -> f64 {
        0.0
    }
    fn get(&self, s: &f64, _: usize) -> f64 {
        *s
    }
    fn set(&self, s: &mut f64, _: usize, v: f64) {
        *s = v;
    }
    fn log_density(&self, s: &f64) -> f64 {
        self.log_density_at(*s)
    }
    fn recorded_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }
    fn record(&self, s: &f64, out: &mut Vec<f64>) {
        out.push(*s);
    }
}

/// Seeded AR(1) series with coefficient `phi` and unit innovations.
pub fn ar1(seed: u64, n: usize, phi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = 0.0;
    (0..n)
        .map(|_| {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            x = phi * x + z;
            x
        })
        .collect()
}

// ---- bootstrap fixtures ----

/// Two-arm trial with `n` patients per arm; line-2 outcomes either copy line
/// 1 or are drawn independently.
pub fn bootstrap_trial(seed: u64, n: usize, duplicated: bool) -> seqnma::emulation::TrialPatients {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut arm = |p1: f64, p2: f64| -> Vec<[Option<bool>; 2]> {
        (0..n)
            .map(|_| {
                let a = rng.random_bool(p1);
                let b = if duplicated { a } else { rng.random_bool(p2) };
                [Some(a), Some(b)]
            })
            .collect()
    };
    let ctrl = arm(0.3, 0.25);
    let exp = arm(0.5, 0.4);
    seqnma::emulation::TrialPatients { study_id: "fixture".into(), ctrl, exp }
}

// ---- NMA fixtures ----

pub fn arms(c: &str, e: &str, n: u64, rc: u64, re: u64) -> LineArms {
    LineArms { treat_ctrl: c.into(), treat_exp: e.into(), n_ctrl: n, r_ctrl: rc, n_exp: n, r_exp: re }
}

pub fn two_line(id: &str, l1: LineArms, l2: LineArms) -> TrialSummary {
    TrialSummary { study_id: id.into(), design: Design::TargetTrial, lines: [Some(l1), Some(l2)] }
}

pub fn line2_rct(id: &str, l2: LineArms) -> TrialSummary {
    TrialSummary { study_id: id.into(), design: Design::RctSecondLine, lines: [None, Some(l2)] }
}

/// Two-line studies only, so study indices agree across line filters.
pub fn paired_fixture() -> Vec<TrialSummary> {
    vec![
        two_line("T1", arms("MTX", "ADA", 60, 18, 30), arms("MTX", "ADA", 55, 12, 20)),
        two_line("T2", arms("ADA", "ETA", 70, 30, 35), arms("ADA", "RTX", 65, 15, 22)),
        two_line("T3", arms("MTX", "ETA", 50, 14, 27), arms("MTX", "RTX", 45, 9, 17)),
    ]
}

/// Deterministic interior state: every coordinate shifted on its free scale.
pub fn perturbed_state(m: &seqnma::nma::NmaModel, seed: u64) -> seqnma::nma::ParameterState {
    let mut s = m.initial_state();
    for idx in 0..m.coordinates().len() {
        let tr = m.coordinates()[idx].transform;
        let u = tr.to_free(m.get(&s, idx));
        let wiggle = (((idx as u64 + 1) * 2654435761 + seed) % 1000) as f64 / 1000.0 - 0.5;
        m.set(&mut s, idx, tr.from_free(u + wiggle));
    }
    s
}
