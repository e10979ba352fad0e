mod common;

use common::{dense_bvn, normal_logpdf};
use proptest::prelude::*;
use seqnma::emulation::TrialSummary;
use seqnma::mcmc::{run_chains, SamplerConfig, Target};
use seqnma::nma::{
    consistency_expand, reference_treatments, LineFilter, ModelData, ModelSpec, NmaModel, PriorConfig, Variant,
};

use common::{arms, line2_rct, paired_fixture, perturbed_state, two_line};

fn model(studies: &[TrialSummary], spec: ModelSpec) -> NmaModel {
    spec.validate().unwrap();
    let data = ModelData::build(studies, &spec).unwrap();
    NmaModel::new(data, spec, PriorConfig::default()).unwrap()
}

fn spec(variant: Variant, filter: LineFilter) -> ModelSpec {
    ModelSpec::new(variant, filter, reference_treatments())
}

#[test]
fn bivariate_random_effects_match_dense_oracle() {
    let m = model(&paired_fixture(), spec(Variant::Bivariate, LineFilter::Both));
    let mut s = perturbed_state(&m, 11);
    s.rho = 0.5;
    s.tau = [0.4, 0.7];
    let t = s.tau;
    let cov = [[t[0] * t[0], t[0] * t[1] * 0.5], [t[0] * t[1] * 0.5, t[1] * t[1]]];
    let mut oracle = 0.0;
    for (i, st) in m.data.studies.iter().enumerate() {
        let mean = [0, 1].map(|j| {
            let l = st.lines[j].as_ref().unwrap();
            s.d[j][l.k] - s.d[j][l.b]
        });
        oracle += dense_bvn(s.delta[i], mean, cov);
    }
    let got = m.log_random_effects(&s);
    assert!(!got.singular);
    approx::assert_abs_diff_eq!(got.value, oracle, epsilon = 1e-10);
}

#[test]
fn density_at_mode_with_unit_scales() {
    let m = model(&paired_fixture(), spec(Variant::Bivariate, LineFilter::Both));
    let mut s = m.initial_state();
    s.tau = [1.0, 1.0];
    s.rho = 0.0;
    for (i, st) in m.data.studies.iter().enumerate() {
        for j in 0..2 {
            let l = st.lines[j].as_ref().unwrap();
            s.delta[i][j] = s.d[j][l.k] - s.d[j][l.b];
        }
    }
    let per_study = -(2.0 * std::f64::consts::PI).ln();
    approx::assert_abs_diff_eq!(m.log_random_effects(&s).value, 3.0 * per_study, epsilon = 1e-12);
}

#[test]
fn zero_correlation_factorizes_random_effects() {
    let m = model(&paired_fixture(), spec(Variant::Bivariate, LineFilter::Both));
    let mut s = perturbed_state(&m, 5);
    s.rho = 0.0;
    let mut oracle = 0.0;
    for (i, st) in m.data.studies.iter().enumerate() {
        for j in 0..2 {
            let l = st.lines[j].as_ref().unwrap();
            oracle += normal_logpdf(s.delta[i][j], s.d[j][l.k] - s.d[j][l.b], s.tau[j] * s.tau[j]);
        }
    }
    approx::assert_abs_diff_eq!(m.log_random_effects(&s).value, oracle, epsilon = 1e-12);
}

#[test]
fn fixed_zero_rho_equals_two_univariate_posteriors() {
    let studies = paired_fixture();
    let biv = model(&studies, ModelSpec { fixed_rho: Some(0.0), ..spec(Variant::Bivariate, LineFilter::Both) });
    let u1 = model(&studies, spec(Variant::Univariate, LineFilter::Line1));
    let u2 = model(&studies, spec(Variant::Univariate, LineFilter::Line2));
    for seed in 0..5 {
        let s = perturbed_state(&biv, seed);
        let sum = u1.log_posterior(&s) + u2.log_posterior(&s);
        approx::assert_abs_diff_eq!(biv.log_posterior(&s), sum, epsilon = 1e-10);
    }
}

#[test]
fn univariate_line2_matches_bivariate_without_line1_data() {
    let studies = vec![
        line2_rct("R1", arms("MTX", "GOL", 80, 20, 35)),
        line2_rct("R2", arms("MTX", "RTX", 90, 22, 40)),
        line2_rct("R3", arms("GOL", "RTX", 70, 25, 28)),
    ];
    let biv = model(&studies, ModelSpec { fixed_rho: Some(0.0), ..spec(Variant::Bivariate, LineFilter::Both) });
    let uni = model(&studies, spec(Variant::Univariate, LineFilter::Line2));
    let s = perturbed_state(&biv, 3);
    // The bivariate posterior also carries the prior of the unused line-1 τ.
    let tau1_prior = -PriorConfig::default().tau_upper.ln();
    approx::assert_abs_diff_eq!(biv.log_posterior(&s), uni.log_posterior(&s) + tau1_prior, epsilon = 1e-10);
}

#[test]
fn prior_terms_match_closed_forms() {
    let m = model(&paired_fixture(), spec(Variant::Bivariate, LineFilter::Both));
    let mut s = m.initial_state();
    s.rho = 0.0;
    let base = m.log_prior(&s);
    // Beta(1.5, 1.5) at r = 0.5 with B(1.5, 1.5) = π/8, halved for ρ = 2r - 1.
    let rho_term = (0.5f64.sqrt() * 0.5f64.sqrt() / (std::f64::consts::PI / 8.0) / 2.0).ln();
    approx::assert_abs_diff_eq!(rho_term, -0.4516, epsilon = 1e-4);
    s.rho = 0.2;
    let r = 0.6f64;
    let other = ((r * (1.0 - r)).sqrt() / (std::f64::consts::PI / 8.0) / 2.0).ln();
    approx::assert_abs_diff_eq!(m.log_prior(&s) - base, other - rho_term, epsilon = 1e-12);

    let mu_term = normal_logpdf(0.0, 0.0, 1e3);
    approx::assert_abs_diff_eq!(mu_term, -4.3728, epsilon = 1e-4);
    let mut shifted = s.clone();
    shifted.mu[0][0] = 0.0;
    let mut at = s.clone();
    at.mu[0][0] = 1.0;
    approx::assert_abs_diff_eq!(
        m.log_prior(&at) - m.log_prior(&shifted),
        normal_logpdf(1.0, 0.0, 1e3) - mu_term,
        epsilon = 1e-12
    );

    s.tau[0] = 2.5;
    assert_eq!(m.log_prior(&s), f64::NEG_INFINITY);
    assert_eq!(m.log_posterior(&s), f64::NEG_INFINITY);
}

#[test]
fn exchangeable_block_matches_dense_oracle() {
    let m = model(&paired_fixture(), spec(Variant::BivariateExchangeable, LineFilter::Both));
    let mut s = perturbed_state(&m, 21);
    s.rho_t = 0.3;
    s.omega = [0.8, 1.3];
    let w = s.omega;
    let cov = [[0.5 * w[0] * w[0], 0.5 * w[0] * w[1] * 0.3], [0.5 * w[0] * w[1] * 0.3, 0.5 * w[1] * w[1]]];
    let mut oracle = 0.0;
    for t in 1..7 {
        oracle += dense_bvn([s.vartheta[0][t], s.vartheta[1][t]], s.eta, cov);
    }
    let r = 0.65f64;
    oracle += ((r * (1.0 - r)).sqrt() / (std::f64::consts::PI / 8.0) / 2.0).ln();
    for j in 0..2 {
        oracle += normal_logpdf(s.vartheta[j][0], 0.0, 1e3) + normal_logpdf(s.eta[j], 0.0, 1e3) - 2f64.ln();
    }
    approx::assert_abs_diff_eq!(m.exchangeable_log_density(&s), oracle, epsilon = 1e-10);
}

#[test]
fn exchangeable_pair_at_mean_is_minus_ln_pi() {
    let m = model(&paired_fixture(), spec(Variant::BivariateExchangeable, LineFilter::Both));
    let mut s = m.initial_state();
    s.eta = [0.3, -0.2];
    s.omega = [1.0, 1.0];
    s.rho_t = 0.0;
    for t in 0..7 {
        for j in 0..2 {
            s.vartheta[j][t] = if t == 0 { 0.0 } else { s.eta[j] };
        }
    }
    let hyper: f64 =
        (0..2).map(|j| normal_logpdf(0.0, 0.0, 1e3) + normal_logpdf(s.eta[j], 0.0, 1e3) - 2f64.ln()).sum::<f64>()
            + (0.5f64 / (std::f64::consts::PI / 8.0) / 2.0).ln();
    let per_treatment = (m.exchangeable_log_density(&s) - hyper) / 6.0;
    approx::assert_abs_diff_eq!(per_treatment, -std::f64::consts::PI.ln(), epsilon = 1e-12);
}

#[test]
fn empty_exchangeable_set_reproduces_bivariate_chains() {
    let studies = paired_fixture();
    let biv = model(&studies, spec(Variant::Bivariate, LineFilter::Both));
    let exch = model(
        &studies,
        ModelSpec { exchangeable_set: Vec::new(), ..spec(Variant::BivariateExchangeable, LineFilter::Both) },
    );
    let cfg = SamplerConfig { n_chains: 2, n_iter: 300, burn_in: 200, ..SamplerConfig::default() };
    let a = run_chains(&biv, &cfg).unwrap();
    let b = run_chains(&exch, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn singular_covariance_gives_negative_infinity() {
    let m = model(&paired_fixture(), spec(Variant::Bivariate, LineFilter::Both));
    let mut s = perturbed_state(&m, 1);
    s.rho = 1.0;
    let r = m.log_random_effects(&s);
    assert!(r.singular && r.value == f64::NEG_INFINITY);
    assert_eq!(m.log_posterior(&s), f64::NEG_INFINITY);
}

proptest! {
    #[test]
    fn consistency_triangle_and_antisymmetry(d in prop::collection::vec(-3.0f64..3.0, 6)) {
        let mut basic = vec![0.0];
        basic.extend(d);
        let c = consistency_expand(&basic);
        for b in 0..7 {
            prop_assert_eq!(c[b][b], 0.0);
            prop_assert_eq!(c[0][b], basic[b]);
            for k in 0..7 {
                prop_assert_eq!(c[b][k], -c[k][b]);
                for m in 0..7 {
                    prop_assert!((c[b][k] - (c[b][m] + c[m][k])).abs() <= 4.0 * f64::EPSILON * 6.0);
                }
            }
        }
    }

    #[test]
    fn local_density_tracks_full_posterior(seed in 0u64..10_000, step in -0.5f64..0.5, variant in 0usize..3) {
        let variant = [Variant::Univariate, Variant::Bivariate, Variant::BivariateExchangeable][variant];
        let m = model(&paired_fixture(), spec(variant, LineFilter::Both));
        let base = perturbed_state(&m, seed);
        for idx in 0..m.coordinates().len() {
            let tr = m.coordinates()[idx].transform;
            let mut s = base.clone();
            m.set(&mut s, idx, tr.from_free(tr.to_free(m.get(&base, idx)) + step));
            let full = m.log_posterior(&s) - m.log_posterior(&base);
            let local = m.log_conditional(&s, idx) - m.log_conditional(&base, idx);
            prop_assert!((full - local).abs() < 1e-8, "{} {} {}", m.coordinates()[idx].name, full, local);
        }
    }
}

#[test]
fn disconnected_observed_treatment_is_rejected() {
    let studies = vec![two_line("T1", arms("MTX", "ADA", 50, 10, 20), arms("ADA", "ETA", 50, 10, 20))];
    let s = spec(Variant::Bivariate, LineFilter::Both);
    let data = ModelData::build(&studies, &s).unwrap();
    assert!(NmaModel::new(data.clone(), s, PriorConfig::default()).is_err());
    let e = spec(Variant::BivariateExchangeable, LineFilter::Both);
    assert!(NmaModel::new(data, e, PriorConfig::default()).is_ok());
}
