use super::{ModelData, ModelError, ModelSpec, ParamRef, ParameterState, PriorConfig};
use crate::mcmc::{Coordinate, Target, Transform};
use crate::stats::{binomial_logit_lpmf, logit, normal_lpdf, scaled_beta_lpdf, uniform_lpdf, Shape};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomEffectsDensity {
    pub value: f64,
    /// Set when some study met a singular between-study covariance.
    pub singular: bool,
}

/// Which treatments have an effect estimate in each modelled line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryLayout {
    pub treatments: Vec<String>,
    pub lines: Vec<usize>,
    /// `available[j][t]` for line `j + 1`; the reference is always available
    /// in a modelled line.
    pub available: [Vec<bool>; 2],
}

impl SummaryLayout {
    pub fn d_name(&self, line: usize, treatment: usize) -> String {
        d_name(line, &self.treatments[treatment])
    }
}

fn d_name(line: usize, code: &str) -> String {
    format!("d[{line},{code}]")
}

/// Posterior of the network model, with parameters laid out for
/// component-wise updating.
#[derive(Debug, Clone)]
pub struct NmaModel {
    pub data: ModelData,
    pub spec: ModelSpec,
    pub prior: PriorConfig,
    refs: Vec<ParamRef>,
    coords: Vec<Coordinate>,
    available: [Vec<bool>; 2],
    free_d: [Vec<bool>; 2],
    exchangeable: Vec<bool>,
    line_modelled: [bool; 2],
    by_line: [Vec<usize>; 2],
    by_treatment: [Vec<Vec<usize>>; 2],
    two_line: Vec<usize>,
}

impl NmaModel {
    pub fn new(data: ModelData, spec: ModelSpec, prior: PriorConfig) -> Result<Self, ModelError> {
        spec.validate()?;
        prior.validate()?;
        if data.studies.is_empty() {
            return Err(ModelError::NoData);
        }
        let n_t = data.n_t();
        let block = spec.has_exchangeable_block();
        let mut exchangeable = vec![false; n_t];
        if block {
            for code in &spec.exchangeable_set {
                exchangeable[spec.index_of(code).expect("validated")] = true;
            }
        }
        let mut line_modelled = [false; 2];
        for &j in spec.lines() {
            line_modelled[j - 1] = true;
        }
        let mut available = [vec![false; n_t], vec![false; n_t]];
        let mut free_d = [vec![false; n_t], vec![false; n_t]];
        for j in 0..2 {
            if !line_modelled[j] {
                continue;
            }
            let connected = data.connected(j + 1);
            let observed = data.observed(j + 1);
            for t in 0..n_t {
                if observed[t] && !connected[t] && !exchangeable[t] {
                    return Err(ModelError::Disconnected {
                        line: j + 1,
                        code: data.treatments[t].clone(),
                        reference: data.treatments[0].clone(),
                    });
                }
                available[j][t] = t == 0 || connected[t] || exchangeable[t];
                free_d[j][t] = available[j][t] && t != 0 && !exchangeable[t];
            }
        }

        let mut by_line = [Vec::new(), Vec::new()];
        let mut by_treatment = [vec![Vec::new(); n_t], vec![Vec::new(); n_t]];
        let mut two_line = Vec::new();
        for (i, s) in data.studies.iter().enumerate() {
            for j in 0..2 {
                if let Some(l) = &s.lines[j] {
                    by_line[j].push(i);
                    by_treatment[j][l.b].push(i);
                    by_treatment[j][l.k].push(i);
                }
            }
            if s.both_lines() {
                two_line.push(i);
            }
        }

        let mut refs = Vec::new();
        let mut coords = Vec::new();
        let mut push = |r: ParamRef, name: String, transform: Transform| {
            refs.push(r);
            coords.push(Coordinate { name, transform });
        };
        let tau_t = Transform::Interval { lower: 0.0, upper: prior.tau_upper };
        let corr_t = Transform::Interval { lower: -1.0, upper: 1.0 };
        for (i, s) in data.studies.iter().enumerate() {
            for j in 0..2 {
                if s.lines[j].is_some() {
                    push(
                        ParamRef::Mu { study: i, line: j },
                        format!("mu[{},{}]", s.study_id, j + 1),
                        Transform::Identity,
                    );
                    push(
                        ParamRef::Delta { study: i, line: j },
                        format!("delta[{},{}]", s.study_id, j + 1),
                        Transform::Identity,
                    );
                }
            }
        }
        for j in 0..2 {
            for t in 0..n_t {
                if free_d[j][t] {
                    push(
                        ParamRef::D { line: j, treatment: t },
                        d_name(j + 1, &data.treatments[t]),
                        Transform::Identity,
                    );
                }
            }
        }
        for j in 0..2 {
            if line_modelled[j] {
                push(ParamRef::Tau { line: j }, format!("tau[{}]", j + 1), tau_t);
            }
        }
        if spec.estimates_rho() {
            push(ParamRef::Rho, "rho".into(), corr_t);
        }
        if block {
            let omega_t = Transform::Interval { lower: 0.0, upper: prior.omega_upper };
            for j in 0..2 {
                for t in 0..n_t {
                    if t == 0 || exchangeable[t] {
                        let name = format!("vartheta[{},{}]", j + 1, data.treatments[t]);
                        push(ParamRef::Vartheta { line: j, treatment: t }, name, Transform::Identity);
                    }
                }
            }
            for j in 0..2 {
                push(ParamRef::Eta { line: j }, format!("eta[{}]", j + 1), Transform::Identity);
            }
            for j in 0..2 {
                push(ParamRef::Omega { line: j }, format!("omega[{}]", j + 1), omega_t);
            }
            push(ParamRef::RhoT, "rho_t".into(), corr_t);
        }

        Ok(Self {
            data,
            spec,
            prior,
            refs,
            coords,
            available,
            free_d,
            exchangeable,
            line_modelled,
            by_line,
            by_treatment,
            two_line,
        })
    }

    pub fn param_refs(&self) -> &[ParamRef] {
        &self.refs
    }

    pub fn layout(&self) -> SummaryLayout {
        SummaryLayout {
            treatments: self.data.treatments.clone(),
            lines: self.spec.lines().to_vec(),
            available: self.available.clone(),
        }
    }

    fn block(&self) -> bool {
        self.spec.has_exchangeable_block()
    }

    fn shape(&self) -> Shape {
        self.spec.random_effects_shape
    }

    fn rho(&self, s: &ParameterState) -> f64 {
        self.spec.fixed_rho.unwrap_or(s.rho)
    }

    /// Recomputes basic parameters implied by the exchangeable block.
    pub fn refresh_derived(&self, s: &mut ParameterState) {
        if !self.block() {
            return;
        }
        for j in 0..2 {
            for t in 1..self.data.n_t() {
                if self.exchangeable[t] {
                    s.d[j][t] = s.vartheta[j][t] - s.vartheta[j][0];
                }
            }
        }
    }

    fn study_likelihood(&self, s: &ParameterState, i: usize, j: usize) -> f64 {
        let Some(l) = &self.data.studies[i].lines[j] else { return 0.0 };
        let mu = s.mu[i][j];
        binomial_logit_lpmf(l.r_b, l.n_b, mu) + binomial_logit_lpmf(l.r_k, l.n_k, mu + s.delta[i][j])
    }

    fn mean_effect(&self, s: &ParameterState, i: usize, j: usize) -> Option<f64> {
        self.data.studies[i].lines[j].as_ref().map(|l| s.d[j][l.k] - s.d[j][l.b])
    }

    /// Random-effects log density of one study.
    fn study_random_effects(&self, s: &ParameterState, i: usize) -> RandomEffectsDensity {
        let m = [self.mean_effect(s, i, 0), self.mean_effect(s, i, 1)];
        let shape = self.shape();
        let singular = RandomEffectsDensity { value: f64::NEG_INFINITY, singular: true };
        match (m[0], m[1]) {
            (Some(m1), Some(m2)) if self.spec.is_bivariate() => {
                match shape.bivariate_lpdf(s.delta[i], [m1, m2], s.tau[0], s.tau[1], self.rho(s)) {
                    Some(v) => RandomEffectsDensity { value: v, singular: false },
                    None => singular,
                }
            }
            _ => {
                let mut value = 0.0;
                for j in 0..2 {
                    if let Some(mj) = m[j] {
                        if !(s.tau[j] > 0.0) {
                            return singular;
                        }
                        value += shape.univariate_lpdf(s.delta[i][j], mj, s.tau[j]);
                    }
                }
                RandomEffectsDensity { value, singular: false }
            }
        }
    }

    fn random_effects_over(&self, s: &ParameterState, studies: &[usize]) -> f64 {
        studies.iter().map(|&i| self.study_random_effects(s, i).value).sum()
    }

    fn mu_prior(&self, s: &ParameterState, i: usize, j: usize) -> f64 {
        if self.data.studies[i].lines[j].is_some() {
            normal_lpdf(s.mu[i][j], 0.0, self.prior.mu_variance.sqrt())
        } else {
            0.0
        }
    }

    fn d_prior(&self, s: &ParameterState, j: usize, t: usize) -> f64 {
        normal_lpdf(s.d[j][t], 0.0, self.prior.d_variance.sqrt())
    }

    fn tau_prior(&self, s: &ParameterState, j: usize) -> f64 {
        uniform_lpdf(s.tau[j], self.prior.tau_upper)
    }

    fn rho_prior(&self, s: &ParameterState) -> f64 {
        let (a, b) = self.prior.rho_beta;
        scaled_beta_lpdf(s.rho, a, b)
    }

    fn exchangeable_pair(&self, s: &ParameterState, t: usize) -> f64 {
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        self.shape()
            .bivariate_lpdf(
                [s.vartheta[0][t], s.vartheta[1][t]],
                s.eta,
                s.omega[0] * scale,
                s.omega[1] * scale,
                s.rho_t,
            )
            .unwrap_or(f64::NEG_INFINITY)
    }

    fn exchangeable_pairs(&self, s: &ParameterState) -> f64 {
        (1..self.data.n_t()).filter(|&t| self.exchangeable[t]).map(|t| self.exchangeable_pair(s, t)).sum()
    }

    fn reference_line_prior(&self, s: &ParameterState, j: usize) -> f64 {
        normal_lpdf(s.vartheta[j][0], 0.0, self.prior.mu_variance.sqrt())
    }

    fn eta_prior(&self, s: &ParameterState, j: usize) -> f64 {
        normal_lpdf(s.eta[j], 0.0, self.prior.d_variance.sqrt())
    }

    fn omega_prior(&self, s: &ParameterState, j: usize) -> f64 {
        uniform_lpdf(s.omega[j], self.prior.omega_upper)
    }

    fn rho_t_prior(&self, s: &ParameterState) -> f64 {
        let (a, b) = self.prior.rho_t_beta;
        scaled_beta_lpdf(s.rho_t, a, b)
    }

    pub fn log_likelihood(&self, s: &ParameterState) -> f64 {
        (0..self.data.studies.len()).map(|i| self.study_likelihood(s, i, 0) + self.study_likelihood(s, i, 1)).sum()
    }

    pub fn log_random_effects(&self, s: &ParameterState) -> RandomEffectsDensity {
        let mut out = RandomEffectsDensity { value: 0.0, singular: false };
        for i in 0..self.data.studies.len() {
            let r = self.study_random_effects(s, i);
            out.value += r.value;
            out.singular |= r.singular;
        }
        out
    }

    /// Priors on baselines, free basic parameters and heterogeneity.
    pub fn log_prior(&self, s: &ParameterState) -> f64 {
        let mut lp = 0.0;
        for i in 0..self.data.studies.len() {
            lp += self.mu_prior(s, i, 0) + self.mu_prior(s, i, 1);
        }
        for j in 0..2 {
            if !self.line_modelled[j] {
                continue;
            }
            lp += self.tau_prior(s, j);
            for t in 0..self.data.n_t() {
                if self.free_d[j][t] {
                    lp += self.d_prior(s, j, t);
                }
            }
        }
        if self.spec.estimates_rho() {
            lp += self.rho_prior(s);
        }
        lp
    }

    /// Exchangeability level: zero unless the block is active.
    pub fn exchangeable_log_density(&self, s: &ParameterState) -> f64 {
        if !self.block() {
            return 0.0;
        }
        let mut lp = self.exchangeable_pairs(s) + self.rho_t_prior(s);
        for j in 0..2 {
            lp += self.reference_line_prior(s, j) + self.eta_prior(s, j) + self.omega_prior(s, j);
        }
        lp
    }

    pub fn log_posterior(&self, s: &ParameterState) -> f64 {
        self.log_likelihood(s) + self.log_random_effects(s).value + self.log_prior(s) + self.exchangeable_log_density(s)
    }

    /// Terms of the log posterior that involve the given parameter.
    pub fn local_log_density(&self, s: &ParameterState, r: ParamRef) -> f64 {
        match r {
            ParamRef::Mu { study, line } => self.study_likelihood(s, study, line) + self.mu_prior(s, study, line),
            ParamRef::Delta { study, line } => {
                self.study_likelihood(s, study, line) + self.study_random_effects(s, study).value
            }
            ParamRef::D { line, treatment } => {
                self.random_effects_over(s, &self.by_treatment[line][treatment]) + self.d_prior(s, line, treatment)
            }
            ParamRef::Tau { line } => self.random_effects_over(s, &self.by_line[line]) + self.tau_prior(s, line),
            ParamRef::Rho => self.random_effects_over(s, &self.two_line) + self.rho_prior(s),
            ParamRef::Vartheta { line, treatment: 0 } => {
                self.random_effects_over(s, &self.by_line[line]) + self.reference_line_prior(s, line)
            }
            ParamRef::Vartheta { line, treatment } => {
                self.random_effects_over(s, &self.by_treatment[line][treatment]) + self.exchangeable_pair(s, treatment)
            }
            ParamRef::Eta { line } => self.exchangeable_pairs(s) + self.eta_prior(s, line),
            ParamRef::Omega { line } => self.exchangeable_pairs(s) + self.omega_prior(s, line),
            ParamRef::RhoT => self.exchangeable_pairs(s) + self.rho_t_prior(s),
        }
    }

    /// Starting point: empirical baseline logits, null effects and moderate
    /// heterogeneity.
    pub fn default_state(&self) -> ParameterState {
        let n_t = self.data.n_t();
        let mut s = ParameterState::zeros(self.data.studies.len(), n_t);
        for (i, st) in self.data.studies.iter().enumerate() {
            for j in 0..2 {
                if let Some(l) = &st.lines[j] {
                    s.mu[i][j] = logit((l.r_b as f64 + 0.5) / (l.n_b as f64 + 1.0));
                }
            }
        }
        s.tau = [0.5f64.min(self.prior.tau_upper / 2.0); 2];
        s.rho = self.spec.fixed_rho.unwrap_or(0.0);
        s.omega = [0.5f64.min(self.prior.omega_upper / 2.0); 2];
        self.refresh_derived(&mut s);
        s
    }
}

impl Target for NmaModel {
    type State = ParameterState;

    fn coordinates(&self) -> &[Coordinate] {
        &self.coords
    }

    fn initial_state(&self) -> ParameterState {
        self.default_state()
    }

    fn get(&self, s: &ParameterState, index: usize) -> f64 {
        self.refs[index].get(s)
    }

    fn set(&self, s: &mut ParameterState, index: usize, value: f64) {
        let r = self.refs[index];
        r.set(s, value);
        if let ParamRef::Vartheta { line, treatment } = r {
            if treatment == 0 {
                for t in 1..self.data.n_t() {
                    if self.exchangeable[t] {
                        s.d[line][t] = s.vartheta[line][t] - value;
                    }
                }
            } else {
                s.d[line][treatment] = value - s.vartheta[line][0];
            }
        }
    }

    fn log_density(&self, s: &ParameterState) -> f64 {
        self.log_posterior(s)
    }

    fn log_conditional(&self, s: &ParameterState, index: usize) -> f64 {
        self.local_log_density(s, self.refs[index])
    }

    fn recorded_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for j in 0..2 {
            for t in 1..self.data.n_t() {
                if self.available[j][t] {
                    names.push(d_name(j + 1, &self.data.treatments[t]));
                }
            }
        }
        for j in 0..2 {
            if self.line_modelled[j] {
                names.push(format!("tau[{}]", j + 1));
            }
        }
        if self.spec.estimates_rho() {
            names.push("rho".into());
        }
        if self.block() {
            names.extend(["omega[1]", "omega[2]", "rho_t"].map(String::from));
        }
        names
    }

    fn record(&self, s: &ParameterState, out: &mut Vec<f64>) {
        for j in 0..2 {
            for t in 1..self.data.n_t() {
                if self.available[j][t] {
                    out.push(s.d[j][t]);
                }
            }
        }
        for j in 0..2 {
            if self.line_modelled[j] {
                out.push(s.tau[j]);
            }
        }
        if self.spec.estimates_rho() {
            out.push(s.rho);
        }
        if self.block() {
            out.extend([s.omega[0], s.omega[1], s.rho_t]);
        }
    }
}
