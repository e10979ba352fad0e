use crate::stats::{log_sigmoid, logit, sigmoid};

/// Map from a constrained coordinate to the real line used by the sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Identity,
    /// `u = logit((x - lower) / (upper - lower))`.
    Interval {
        lower: f64,
        upper: f64,
    },
}

impl Transform {
    pub fn to_free(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Interval { lower, upper } => logit((x - lower) / (upper - lower)),
        }
    }

    pub fn from_free(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::Interval { lower, upper } => lower + (upper - lower) * sigmoid(u),
        }
    }

    /// `ln |dx/du|` at free value `u`.
    pub fn log_jacobian(self, u: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Interval { lower, upper } => (upper - lower).ln() + log_sigmoid(u) + log_sigmoid(-u),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coordinate {
    pub name: String,
    pub transform: Transform,
}

/// A log density over named scalar coordinates, updated one at a time.
pub trait Target: Sync {
    type State: Clone + Send;

    fn coordinates(&self) -> &[Coordinate];
    fn initial_state(&self) -> Self::State;
    fn get(&self, state: &Self::State, index: usize) -> f64;
    fn set(&self, state: &mut Self::State, index: usize, value: f64);
    /// Unnormalised log density on the constrained scale.
    fn log_density(&self, state: &Self::State) -> f64;

    /// Sum of the terms of `log_density` that depend on coordinate `index`.
    /// Differences between two states that differ only in that coordinate
    /// must match differences of `log_density`.
    fn log_conditional(&self, state: &Self::State, index: usize) -> f64 {
        let _ = index;
        self.log_density(state)
    }

    fn recorded_names(&self) -> Vec<String>;
    fn record(&self, state: &Self::State, out: &mut Vec<f64>);
}
