//! Adaptive random-walk Metropolis-within-Gibbs, convergence diagnostics and
//! posterior summaries.

mod diagnostics;
mod sampler;
mod summary;
mod target;

pub use diagnostics::{compute_ess, compute_rhat, pooled_ess, DiagnosticsError};
pub use sampler::{run_chain_traced, run_chains, ChainSamples, SamplerConfig, SamplerError, StepRecord, Trace};
pub use summary::{
    read_draws, summarize, write_draws, write_summary_csv, ContrastSummary, ParamSummary, PosteriorSummary, Quantiles,
    CONVERGENCE_ESS, CONVERGENCE_RHAT, SUMMARY_CSV_HEADER,
};
pub use target::{Coordinate, Target, Transform};
