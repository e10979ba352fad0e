use super::diagnostics::{compute_rhat, pooled_ess};
use super::sampler::ChainSamples;
use crate::nma::SummaryLayout;
use crate::stats::{mean, quantile_sorted, sorted_copy};
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::{Read, Write};

pub const CONVERGENCE_RHAT: f64 = 1.05;
pub const CONVERGENCE_ESS: f64 = 400.0;
pub const SUMMARY_CSV_HEADER: [&str; 8] = ["line", "treat_b", "treat_k", "or_median", "or_lo", "or_hi", "rhat", "ess"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub mean: f64,
    pub median: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Quantiles {
    pub fn of(draws: &[f64]) -> Self {
        let s = sorted_copy(draws);
        Self {
            mean: mean(draws),
            median: quantile_sorted(&s, 0.5),
            lo: quantile_sorted(&s, 0.025),
            hi: quantile_sorted(&s, 0.975),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSummary {
    pub name: String,
    pub summary: Quantiles,
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

/// Odds ratio of `treat_k` against `treat_b` in one line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastSummary {
    pub line: usize,
    pub treat_b: String,
    pub treat_k: String,
    pub log_or: Quantiles,
    pub or: Quantiles,
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorSummary {
    pub parameters: Vec<ParamSummary>,
    pub contrasts: Vec<ContrastSummary>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl PosteriorSummary {
    pub fn contrast(&self, line: usize, treat_b: &str, treat_k: &str) -> Option<&ContrastSummary> {
        self.contrasts.iter().find(|c| c.line == line && c.treat_b == treat_b && c.treat_k == treat_k)
    }

    pub fn parameter(&self, name: &str) -> Option<&ParamSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

fn diagnostics(per_chain: &[Vec<f64>]) -> (Option<f64>, Option<f64>) {
    (compute_rhat(per_chain).ok(), pooled_ess(per_chain).ok())
}

fn pool(per_chain: &[Vec<f64>]) -> Vec<f64> {
    per_chain.iter().flatten().copied().collect()
}

/// Pools chains, summarises recorded parameters and derives every pairwise
/// contrast among the treatments available in each line.
pub fn summarize(chains: &[ChainSamples], layout: &SummaryLayout) -> PosteriorSummary {
    let mut warnings = Vec::new();
    let mut converged = true;
    let Some(first) = chains.first() else {
        return PosteriorSummary {
            parameters: vec![],
            contrasts: vec![],
            converged: false,
            warnings: vec!["no chains".into()],
        };
    };
    if chains.len() < 2 {
        converged = false;
        warnings.push("R-hat needs at least two chains".into());
    }
    let columns = |idx: usize| -> Vec<Vec<f64>> { chains.iter().map(|c| c.column(idx)).collect() };

    let mut parameters = Vec::new();
    for (idx, name) in first.parameter_names.iter().enumerate() {
        let per_chain = columns(idx);
        let (rhat, ess) = diagnostics(&per_chain);
        if chains.len() >= 2 {
            match (rhat, ess) {
                (Some(r), Some(e)) if r < CONVERGENCE_RHAT && e > CONVERGENCE_ESS => {}
                _ => {
                    converged = false;
                    warnings.push(format!("{name}: rhat {rhat:?}, ess {ess:?} outside convergence gates"));
                }
            }
        }
        parameters.push(ParamSummary { name: name.clone(), summary: Quantiles::of(&pool(&per_chain)), rhat, ess });
    }

    let mut contrasts = Vec::new();
    for &line in &layout.lines {
        let avail = &layout.available[line - 1];
        let d_draws: BTreeMap<usize, Vec<Vec<f64>>> = (1..layout.treatments.len())
            .filter(|&t| avail[t])
            .filter_map(|t| first.index_of(&layout.d_name(line, t)).map(|idx| (t, columns(idx))))
            .collect();
        let basic = |t: usize| -> Option<Vec<Vec<f64>>> {
            if t == 0 {
                Some(chains.iter().map(|c| vec![0.0; c.draws.len()]).collect())
            } else {
                d_draws.get(&t).cloned()
            }
        };
        for b in 0..layout.treatments.len() {
            for k in b + 1..layout.treatments.len() {
                let (Some(db), Some(dk)) = (basic(b), basic(k)) else { continue };
                let per_chain: Vec<Vec<f64>> =
                    db.iter().zip(&dk).map(|(xb, xk)| xb.iter().zip(xk).map(|(b, k)| k - b).collect()).collect();
                let pooled = pool(&per_chain);
                let (rhat, ess) = diagnostics(&per_chain);
                let log_or = Quantiles::of(&pooled);
                let exp: Vec<f64> = pooled.iter().map(|x| x.exp()).collect();
                let or = Quantiles {
                    mean: mean(&exp),
                    median: log_or.median.exp(),
                    lo: log_or.lo.exp(),
                    hi: log_or.hi.exp(),
                };
                contrasts.push(ContrastSummary {
                    line,
                    treat_b: layout.treatments[b].clone(),
                    treat_k: layout.treatments[k].clone(),
                    log_or,
                    or,
                    rhat,
                    ess,
                });
            }
        }
    }
    PosteriorSummary { parameters, contrasts, converged, warnings }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

pub fn write_summary_csv<W: Write>(summary: &PosteriorSummary, writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_CSV_HEADER)?;
    for c in &summary.contrasts {
        w.write_record([
            c.line.to_string(),
            c.treat_b.clone(),
            c.treat_k.clone(),
            c.or.median.to_string(),
            c.or.lo.to_string(),
            c.or.hi.to_string(),
            opt(c.rhat),
            opt(c.ess),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format draws: `chain,iteration,parameter,value`, iterations counted
/// from 1 over kept draws.
pub fn write_draws<W: Write>(chains: &[ChainSamples], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["chain", "iteration", "parameter", "value"])?;
    for c in chains {
        for (it, row) in c.draws.iter().enumerate() {
            for (name, v) in c.parameter_names.iter().zip(row) {
                w.write_record([c.chain.to_string(), (it + 1).to_string(), name.clone(), v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads draws written by [`write_draws`]. Acceptance rates are not part of
/// the format and come back empty.
pub fn read_draws<R: Read>(reader: R) -> Result<Vec<ChainSamples>, String> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().collect::<Vec<_>>() != ["chain", "iteration", "parameter", "value"] {
        return Err(format!("unexpected draws header `{}`", header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut chains: BTreeMap<usize, ChainSamples> = BTreeMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let err = |what: &str| format!("draws row {}: bad {what}", row + 2);
        let chain: usize = rec[0].parse().map_err(|_| err("chain"))?;
        let it: usize = rec[1].parse().map_err(|_| err("iteration"))?;
        let value: f64 = rec[3].parse().map_err(|_| err("value"))?;
        let c = chains.entry(chain).or_insert_with(|| ChainSamples {
            chain,
            parameter_names: vec![],
            draws: vec![],
            acceptance_rates: vec![],
            coordinate_names: vec![],
            seed_used: 0,
        });
        if it == 0 || it > c.draws.len() + 1 {
            return Err(err("iteration order"));
        }
        if it == c.draws.len() + 1 {
            c.draws.push(Vec::new());
        }
        let name = &rec[2];
        let pos = c.draws[it - 1].len();
        if it == 1 {
            c.parameter_names.push(name.to_string());
        } else if c.parameter_names.get(pos).map(String::as_str) != Some(name) {
            return Err(err("parameter order"));
        }
        c.draws[it - 1].push(value);
    }
    Ok(chains.into_values().collect())
}
