use super::target::Target;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_chains: usize,
    /// Kept iterations after burn-in, before thinning.
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub target_acceptance: f64,
    pub adapt_window: usize,
    /// Defaults to `burn_in`; never extends past it.
    pub adaptation_end: Option<usize>,
    pub initial_scale: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_iter: 20_000,
            burn_in: 10_000,
            thin: 1,
            seed: 1,
            target_acceptance: 0.44,
            adapt_window: 50,
            adaptation_end: None,
            initial_scale: 0.5,
        }
    }
}

impl SamplerConfig {
    pub fn adaptation_end(&self) -> usize {
        self.adaptation_end.unwrap_or(self.burn_in).min(self.burn_in)
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: &str| Err(SamplerError::Config(m.to_string()));
        if self.n_iter == 0 {
            return bad("n_iter must be positive");
        }
        if self.thin == 0 {
            return bad("thin must be at least 1");
        }
        if self.n_chains == 0 {
            return bad("n_chains must be positive");
        }
        if self.adapt_window == 0 {
            return bad("adapt_window must be positive");
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return bad("target_acceptance must lie in (0, 1)");
        }
        if !(self.initial_scale > 0.0 && self.initial_scale.is_finite()) {
            return bad("initial_scale must be positive");
        }
        Ok(())
    }

    /// Generator of one chain: ChaCha8 keyed by `seed`, with the chain index
    /// as the stream number.
    pub fn chain_rng(&self, chain: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(chain as u64);
        rng
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("sampler configuration: {0}")]
    Config(String),
    #[error("initial state has log density {0}")]
    InitialState(f64),
    #[error("target has no coordinates")]
    NoCoordinates,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSamples {
    pub chain: usize,
    pub parameter_names: Vec<String>,
    /// Kept iterations × parameters.
    pub draws: Vec<Vec<f64>>,
    /// Post-burn-in acceptance rate per coordinate.
    pub acceptance_rates: Vec<f64>,
    pub coordinate_names: Vec<String>,
    pub seed_used: u64,
}

impl ChainSamples {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.parameter_names.iter().position(|n| n == name)
    }

    pub fn column(&self, index: usize) -> Vec<f64> {
        self.draws.iter().map(|row| row[index]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.index_of(name).map(|i| self.column(i))
    }
}

/// One Metropolis decision.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub iteration: usize,
    pub coordinate: usize,
    /// Log acceptance ratio on the free scale, Jacobian included.
    pub log_ratio: f64,
    pub log_u: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub steps: Vec<StepRecord>,
    /// Proposal scales at the end of every iteration that changed them, plus
    /// the final scales, as (iteration, scales).
    pub scales: Vec<(usize, Vec<f64>)>,
}

struct TraceSink<'a> {
    trace: Option<&'a mut Trace>,
    max_steps: usize,
}

fn sample_chain<T: Target>(
    target: &T,
    cfg: &SamplerConfig,
    chain: usize,
    mut sink: TraceSink<'_>,
) -> Result<ChainSamples, SamplerError> {
    let coords = target.coordinates();
    if coords.is_empty() {
        return Err(SamplerError::NoCoordinates);
    }
    let mut rng = cfg.chain_rng(chain);
    let mut state = target.initial_state();
    let lp0 = target.log_density(&state);
    if !lp0.is_finite() {
        return Err(SamplerError::InitialState(lp0));
    }
    let p = coords.len();
    let mut free: Vec<f64> = (0..p).map(|i| coords[i].transform.to_free(target.get(&state, i))).collect();
    let mut scales = vec![cfg.initial_scale; p];
    let mut window_accepts = vec![0usize; p];
    let mut kept_accepts = vec![0usize; p];
    let total = cfg.burn_in + cfg.n_iter;
    let adapt_end = cfg.adaptation_end();
    let mut draws = Vec::with_capacity(cfg.n_iter / cfg.thin + 1);
    let mut row = Vec::new();

    for iter in 0..total {
        for i in 0..p {
            let tr = coords[i].transform;
            let old_x = target.get(&state, i);
            let current = target.log_conditional(&state, i) + tr.log_jacobian(free[i]);
            let z: f64 = rng.sample(StandardNormal);
            let proposal = free[i] + scales[i] * z;
            target.set(&mut state, i, tr.from_free(proposal));
            let proposed = target.log_conditional(&state, i) + tr.log_jacobian(proposal);
            let log_ratio = proposed - current;
            let log_u = rng.random::<f64>().ln();
            let accepted = log_u < log_ratio;
            if accepted {
                free[i] = proposal;
                window_accepts[i] += 1;
                if iter >= cfg.burn_in {
                    kept_accepts[i] += 1;
                }
            } else {
                target.set(&mut state, i, old_x);
            }
            if let Some(t) = sink.trace.as_deref_mut() {
                if t.steps.len() < sink.max_steps {
                    t.steps.push(StepRecord { iteration: iter, coordinate: i, log_ratio, log_u, accepted });
                }
            }
        }
        if (iter + 1) % cfg.adapt_window == 0 {
            if iter < adapt_end {
                for i in 0..p {
                    let rate = window_accepts[i] as f64 / cfg.adapt_window as f64;
                    scales[i] *= if rate > cfg.target_acceptance { 0.1f64.exp() } else { (-0.1f64).exp() };
                }
                if let Some(t) = sink.trace.as_deref_mut() {
                    t.scales.push((iter, scales.clone()));
                }
            }
            window_accepts.iter_mut().for_each(|a| *a = 0);
        }
        if iter >= cfg.burn_in && (iter - cfg.burn_in).is_multiple_of(cfg.thin) {
            row.clear();
            target.record(&state, &mut row);
            draws.push(row.clone());
        }
    }
    if let Some(t) = sink.trace.as_deref_mut() {
        t.scales.push((total, scales.clone()));
    }
    Ok(ChainSamples {
        chain,
        parameter_names: target.recorded_names(),
        draws,
        acceptance_rates: kept_accepts.iter().map(|&a| a as f64 / cfg.n_iter as f64).collect(),
        coordinate_names: coords.iter().map(|c| c.name.clone()).collect(),
        seed_used: cfg.seed,
    })
}

/// Runs `cfg.n_chains` chains concurrently, one thread per chain.
pub fn run_chains<T: Target>(target: &T, cfg: &SamplerConfig) -> Result<Vec<ChainSamples>, SamplerError> {
    cfg.validate()?;
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.n_chains)
            .map(|c| scope.spawn(move || sample_chain(target, cfg, c, TraceSink { trace: None, max_steps: 0 })))
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    })
}

/// Runs a single chain while logging up to `max_steps` Metropolis decisions
/// and every proposal-scale update.
pub fn run_chain_traced<T: Target>(
    target: &T,
    cfg: &SamplerConfig,
    chain: usize,
    max_steps: usize,
) -> Result<(ChainSamples, Trace), SamplerError> {
    cfg.validate()?;
    let mut trace = Trace::default();
    let samples = sample_chain(target, cfg, chain, TraceSink { trace: Some(&mut trace), max_steps })?;
    Ok((samples, trace))
}
