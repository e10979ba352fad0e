mod common;

use common::{ar1, BinomialLogit, ConjugateToy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use seqnma::mcmc::{
    compute_ess, compute_rhat, pooled_ess, run_chain_traced, run_chains, Coordinate, DiagnosticsError, SamplerConfig,
    SamplerError, Target, Transform,
};
use seqnma::stats::{mean, quantile_sorted, sorted_copy, variance};

fn cfg(seed: u64) -> SamplerConfig {
    SamplerConfig { n_chains: 4, n_iter: 5000, burn_in: 2000, seed, ..SamplerConfig::default() }
}

fn pooled(chains: &[seqnma::mcmc::ChainSamples], col: usize) -> Vec<f64> {
    chains.iter().flat_map(|c| c.column(col)).collect()
}

#[test]
fn conjugate_normal_posterior() {
    for seed in 1..=5 {
        let chains = run_chains(&ConjugateToy::new(), &cfg(seed)).unwrap();
        let xs = pooled(&chains, 0);
        let cols: Vec<Vec<f64>> = chains.iter().map(|c| c.column(0)).collect();
        let ess = pooled_ess(&cols).unwrap();
        let mcse = (variance(&xs) / ess).sqrt();
        assert!((mean(&xs) - 0.5).abs() < 3.0 * mcse, "seed {seed}: mean {}", mean(&xs));
        assert!((variance(&xs) / 0.5 - 1.0).abs() < 0.1, "seed {seed}: var {}", variance(&xs));
    }
}

#[test]
fn binomial_posterior_matches_grid() {
    let target = BinomialLogit::new(7, 20, 1e3);
    let cdf = target.grid_cdf();
    let chains = run_chains(&target, &cfg(3)).unwrap();
    let sorted = sorted_copy(&pooled(&chains, 0));
    for p in [0.025, 0.1, 0.25, 0.5, 0.75, 0.9, 0.975] {
        let q = quantile_sorted(&sorted, p);
        assert!((cdf(q) - p).abs() < 0.02, "p = {p}: grid cdf {}", cdf(q));
    }
}

#[test]
fn rhat_behaviour() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut draw = |shift: f64| -> Vec<f64> {
        (0..1000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                shift + z
            })
            .collect::<Vec<f64>>()
    };
    let same = [draw(0.0), draw(0.0), draw(0.0), draw(0.0)];
    assert!(compute_rhat(&same).unwrap() < 1.05);
    let apart = [draw(0.0), draw(10.0)];
    assert!(compute_rhat(&apart).unwrap() > 3.0);
    let constant = [vec![1.0; 100], vec![1.0; 100]];
    assert_eq!(compute_rhat(&constant), Err(DiagnosticsError::ZeroVariance));
    assert!(matches!(compute_rhat(&[draw(0.0)]), Err(DiagnosticsError::TooFewChains { .. })));
}

#[test]
fn ess_of_iid_and_ar1() {
    let n = 20_000;
    let iid = ar1(1, n, 0.0);
    let e = compute_ess(&iid).unwrap();
    assert!((0.8 * n as f64..=1.2 * n as f64).contains(&e), "iid ess {e}");
    // Integrated autocorrelation time of AR(1) is (1 + φ) / (1 - φ) = 3.
    let ar = ar1(2, n, 0.5);
    let e = compute_ess(&ar).unwrap();
    let expected = n as f64 / 3.0;
    assert!((e / expected - 1.0).abs() < 0.2, "ar1 ess {e}");
}

#[test]
fn identical_seeds_identical_chains() {
    let t = BinomialLogit::new(4, 30, 1e3);
    let c = SamplerConfig { n_iter: 500, burn_in: 200, ..cfg(9) };
    assert_eq!(run_chains(&t, &c).unwrap(), run_chains(&t, &c).unwrap());
    let other = run_chains(&t, &SamplerConfig { seed: 10, ..c.clone() }).unwrap();
    assert_ne!(run_chains(&t, &c).unwrap(), other);
    let chains = run_chains(&t, &c).unwrap();
    assert_ne!(chains[0].draws, chains[1].draws);
}

#[test]
fn zero_iterations_rejected() {
    let c = SamplerConfig { n_iter: 0, ..cfg(1) };
    assert!(matches!(run_chains(&ConjugateToy::new(), &c), Err(SamplerError::Config(_))));
}

#[test]
fn scales_frozen_after_adaptation() {
    let c = SamplerConfig { n_chains: 1, n_iter: 1000, burn_in: 500, adaptation_end: Some(300), ..cfg(2) };
    let (_, trace) = run_chain_traced(&ConjugateToy::new(), &c, 0, 0).unwrap();
    let last_adapt = trace.scales.iter().rev().nth(1).unwrap();
    assert!(last_adapt.0 < 300);
    assert_eq!(last_adapt.1, trace.scales.last().unwrap().1);
}

#[test]
fn metropolis_decisions_follow_the_ratio() {
    let c = SamplerConfig { n_chains: 1, n_iter: 2000, burn_in: 500, ..cfg(5) };
    let (_, trace) = run_chain_traced(&BinomialLogit::new(3, 12, 1e3), &c, 0, 5000).unwrap();
    assert_eq!(trace.steps.len(), 2500);
    let mut always = 0;
    for s in &trace.steps {
        assert_eq!(s.accepted, s.log_u < s.log_ratio);
        always += usize::from(s.log_ratio >= 0.0);
        if s.log_ratio >= 0.0 {
            assert!(s.accepted);
        }
    }
    assert!(always > 0);
}

/// Flat density on (0, 2); draws must stay inside the interval.
struct Bounded {
    coords: Vec<Coordinate>,
}

impl Target for Bounded {
    type State = f64;
    fn coordinates(&self) -> &[Coordinate] {
        &self.coords
    }
    fn initial_state(&self) -> f64 {
        1.0
    }
    fn get(&self, s: &f64, _: usize) -> f64 {
        *s
    }
    fn set(&self, s: &mut f64, _: usize, v: f64) {
        *s = v;
    }
    fn log_density(&self, s: &f64) -> f64 {
        if (0.0..=2.0).contains(s) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }
    fn recorded_names(&self) -> Vec<String> {
        vec!["x".into()]
    }
    fn record(&self, s: &f64, out: &mut Vec<f64>) {
        out.push(*s);
    }
}

#[test]
fn interval_transform_keeps_support_and_uniformity() {
    let t = Bounded {
        coords: vec![Coordinate { name: "x".into(), transform: Transform::Interval { lower: 0.0, upper: 2.0 } }],
    };
    let chains = run_chains(&t, &cfg(6)).unwrap();
    let xs = pooled(&chains, 0);
    assert!(xs.iter().all(|x| *x > 0.0 && *x < 2.0));
    assert!((mean(&xs) - 1.0).abs() < 0.05);
    assert!((variance(&xs) - 1.0 / 3.0).abs() < 0.03);
}
