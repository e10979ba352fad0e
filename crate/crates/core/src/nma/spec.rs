use super::ModelError;
use crate::registry::METHOTREXATE;
use crate::stats::Shape;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Univariate,
    Bivariate,
    BivariateExchangeable,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Univariate => "univariate",
            Variant::Bivariate => "bivariate",
            Variant::BivariateExchangeable => "bivariate_exchangeable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineFilter {
    Line1,
    Line2,
    Both,
}

impl LineFilter {
    pub fn lines(self) -> &'static [usize] {
        match self {
            LineFilter::Line1 => &[1],
            LineFilter::Line2 => &[2],
            LineFilter::Both => &[1, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub line_filter: LineFilter,
    /// Treatment ordering; the first entry is the reference (index 1).
    pub treatments: Vec<String>,
    /// Treatments whose absolute effects are exchangeable across lines.
    #[serde(default)]
    pub exchangeable_set: Vec<String>,
    #[serde(default)]
    pub random_effects_shape: Shape,
    /// Holds the between-study correlation at a fixed value instead of
    /// estimating it.
    #[serde(default)]
    pub fixed_rho: Option<f64>,
}

/// MTX followed by the six biologics.
pub fn reference_treatments() -> Vec<String> {
    crate::registry::Catalogue::reference().codes().map(str::to_string).collect()
}

impl ModelSpec {
    pub fn new(variant: Variant, line_filter: LineFilter, treatments: Vec<String>) -> Self {
        let exchangeable_set = match variant {
            Variant::BivariateExchangeable => treatments.iter().skip(1).cloned().collect(),
            _ => Vec::new(),
        };
        Self {
            variant,
            line_filter,
            treatments,
            exchangeable_set,
            random_effects_shape: Shape::Normal,
            fixed_rho: None,
        }
    }

    pub fn reference(&self) -> &str {
        &self.treatments[0]
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.treatments.iter().position(|t| t == code)
    }

    pub fn lines(&self) -> &'static [usize] {
        self.line_filter.lines()
    }

    pub fn is_bivariate(&self) -> bool {
        self.variant != Variant::Univariate
    }

    /// The exchangeability level is present only for the exchangeable variant
    /// with a non-empty set.
    pub fn has_exchangeable_block(&self) -> bool {
        self.variant == Variant::BivariateExchangeable && !self.exchangeable_set.is_empty()
    }

    pub fn estimates_rho(&self) -> bool {
        self.is_bivariate() && self.fixed_rho.is_none()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Spec(m));
        if self.treatments.is_empty() {
            return bad("treatment list is empty".into());
        }
        for (i, t) in self.treatments.iter().enumerate() {
            if self.treatments[..i].contains(t) {
                return bad(format!("treatment {t} listed twice"));
            }
        }
        if self.is_bivariate() && self.line_filter != LineFilter::Both {
            return bad(format!("{} models need both lines", self.variant.as_str()));
        }
        for t in &self.exchangeable_set {
            if self.index_of(t).is_none() {
                return bad(format!("exchangeable treatment {t} not in ordering"));
            }
            if t == self.reference() {
                return bad("reference treatment cannot be exchangeable".into());
            }
        }
        if !self.exchangeable_set.is_empty() && self.variant != Variant::BivariateExchangeable {
            return bad("exchangeable_set requires the bivariate_exchangeable variant".into());
        }
        if let Some(r) = self.fixed_rho {
            if !(-1.0..=1.0).contains(&r) {
                return bad(format!("fixed_rho {r} outside [-1, 1]"));
            }
        }
        if let Shape::StudentT { df } = self.random_effects_shape {
            if !(df > 0.0) {
                return bad(format!("student-t df must be positive, got {df}"));
            }
        }
        Ok(())
    }
}

/// Default degrees of freedom for the Student-t sensitivity analysis.
pub const DEFAULT_T_DF: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    pub tau_upper: f64,
    pub rho_beta: (f64, f64),
    /// Variance of the normal prior on baselines.
    pub mu_variance: f64,
    /// Variance of the normal prior on basic parameters.
    pub d_variance: f64,
    pub omega_upper: f64,
    pub rho_t_beta: (f64, f64),
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            tau_upper: 2.0,
            rho_beta: (1.5, 1.5),
            mu_variance: 1e3,
            d_variance: 1e3,
            omega_upper: 2.0,
            rho_t_beta: (1.5, 1.5),
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let vals = [
            self.tau_upper,
            self.rho_beta.0,
            self.rho_beta.1,
            self.mu_variance,
            self.d_variance,
            self.omega_upper,
            self.rho_t_beta.0,
            self.rho_t_beta.1,
        ];
        if vals.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(ModelError::Spec("prior hyperparameters must be positive".into()))
        }
    }
}

impl Default for ModelSpec {
    fn default() -> Self {
        let mut s = Self::new(Variant::Bivariate, LineFilter::Both, reference_treatments());
        debug_assert_eq!(s.treatments[0], METHOTREXATE);
        s.exchangeable_set.clear();
        s
    }
}
