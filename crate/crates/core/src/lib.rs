//! Sequential network meta-analysis of treatment lines combining randomised
//! trials with trials emulated from registry data.

pub mod bootstrap;
pub mod emulation;
pub mod mcmc;
pub mod network;
pub mod nma;
pub mod pipeline;
pub mod registry;
pub mod report;
pub mod stats;
pub mod synth;
