use serde::Serialize;

/// Full parameter vector of the network model. Per-line arrays use index 0
/// for line 1; per-treatment vectors follow the treatment ordering with the
/// reference at index 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterState {
    /// Study baselines, one slot per line (unused for absent lines).
    pub mu: Vec<[f64; 2]>,
    /// Study-specific log odds ratios.
    pub delta: Vec<[f64; 2]>,
    /// Basic parameters; `d[j][0]` is always zero.
    pub d: [Vec<f64>; 2],
    pub tau: [f64; 2],
    pub rho: f64,
    /// Absolute line effects under exchangeability.
    pub vartheta: [Vec<f64>; 2],
    pub eta: [f64; 2],
    pub omega: [f64; 2],
    pub rho_t: f64,
}

impl ParameterState {
    pub fn zeros(n_studies: usize, n_t: usize) -> Self {
        Self {
            mu: vec![[0.0; 2]; n_studies],
            delta: vec![[0.0; 2]; n_studies],
            d: [vec![0.0; n_t], vec![0.0; n_t]],
            tau: [0.0; 2],
            rho: 0.0,
            vartheta: [vec![0.0; n_t], vec![0.0; n_t]],
            eta: [0.0; 2],
            omega: [0.0; 2],
            rho_t: 0.0,
        }
    }
}

/// Addresses one scalar of [`ParameterState`]; `line` is 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamRef {
    Mu { study: usize, line: usize },
    Delta { study: usize, line: usize },
    D { line: usize, treatment: usize },
    Tau { line: usize },
    Rho,
    Vartheta { line: usize, treatment: usize },
    Eta { line: usize },
    Omega { line: usize },
    RhoT,
}

impl ParamRef {
    pub fn get(self, s: &ParameterState) -> f64 {
        match self {
            ParamRef::Mu { study, line } => s.mu[study][line],
            ParamRef::Delta { study, line } => s.delta[study][line],
            ParamRef::D { line, treatment } => s.d[line][treatment],
            ParamRef::Tau { line } => s.tau[line],
            ParamRef::Rho => s.rho,
            ParamRef::Vartheta { line, treatment } => s.vartheta[line][treatment],
            ParamRef::Eta { line } => s.eta[line],
            ParamRef::Omega { line } => s.omega[line],
            ParamRef::RhoT => s.rho_t,
        }
    }

    /// Raw assignment; derived quantities are not refreshed.
    pub fn set(self, s: &mut ParameterState, v: f64) {
        match self {
            ParamRef::Mu { study, line } => s.mu[study][line] = v,
            ParamRef::Delta { study, line } => s.delta[study][line] = v,
            ParamRef::D { line, treatment } => s.d[line][treatment] = v,
            ParamRef::Tau { line } => s.tau[line] = v,
            ParamRef::Rho => s.rho = v,
            ParamRef::Vartheta { line, treatment } => s.vartheta[line][treatment] = v,
            ParamRef::Eta { line } => s.eta[line] = v,
            ParamRef::Omega { line } => s.omega[line] = v,
            ParamRef::RhoT => s.rho_t = v,
        }
    }
}
