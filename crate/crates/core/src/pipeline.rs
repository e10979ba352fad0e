//! End-to-end orchestration: registry to reports.

use crate::bootstrap::{bootstrap_within_correlation, CorrelationEstimate, DEFAULT_RESAMPLES};
use crate::emulation::{
    emulate, load_summaries, save_summaries, AdjustmentConfig, EmulationError, EmulationReport, Smd, SummaryError,
    TrialSummary,
};
use crate::mcmc::{
    run_chains, summarize, write_draws, write_summary_csv, ChainSamples, PosteriorSummary, SamplerConfig, SamplerError,
};
use crate::network::{build_network, check_connectivity, export_dot};
use crate::nma::{
    reference_treatments, LineFilter, ModelData, ModelError, ModelSpec, NmaModel, PriorConfig, SummaryLayout, Variant,
};
use crate::registry::{load_registry, Catalogue, EligibilityCriteria, RegistryError};
use crate::report::{or_matrix_report, or_matrix_two, read_summary_csv, Analysis, ReportError};
use crate::stats::Shape;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARTIAL_MARKER: &str = "PARTIAL";
pub const SUMMARIES_FILE: &str = "trial_summaries.csv";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("[config] {0}")]
    Config(String),
    #[error("[load] {field}: {message}")]
    Path { field: &'static str, message: String },
    #[error("[load] registry: {0}")]
    Registry(#[from] RegistryError),
    #[error("[load] trial summaries: {0}")]
    Summaries(#[from] SummaryError),
    #[error("[emulate] {0}")]
    Emulation(#[from] EmulationError),
    #[error("[nma:{analysis}] {source}")]
    Model { analysis: String, source: ModelError },
    #[error("[mcmc:{analysis}] {source}")]
    Sampler { analysis: String, source: SamplerError },
    #[error("[report] {0}")]
    Report(#[from] ReportError),
    #[error("[write] {path}: {message}")]
    Write { path: String, message: String },
}

impl PipelineError {
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Path { .. } | PipelineError::Registry(_) | PipelineError::Summaries(_) => "load",
            PipelineError::Emulation(_) => "emulate",
            PipelineError::Model { .. } => "nma",
            PipelineError::Sampler { .. } => "mcmc",
            PipelineError::Report(_) => "report",
            PipelineError::Write { .. } => "write",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceSet {
    #[default]
    All,
    RctOnly,
    TargetTrialsOnly,
}

/// Drops the line-`line` evidence of one treatment before fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceExclusion {
    pub line: usize,
    pub treatment: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub name: String,
    pub variant: Variant,
    pub line_filter: LineFilter,
    #[serde(default)]
    pub evidence: EvidenceSet,
    /// Defaults to every non-reference treatment for the exchangeable variant.
    #[serde(default)]
    pub exchangeable_set: Option<Vec<String>>,
    #[serde(default)]
    pub random_effects_shape: Shape,
    #[serde(default)]
    pub fixed_rho: Option<f64>,
    #[serde(default)]
    pub exclude: Vec<EvidenceExclusion>,
}

impl AnalysisConfig {
    pub fn new(name: &str, variant: Variant, line_filter: LineFilter, evidence: EvidenceSet) -> Self {
        Self {
            name: name.to_string(),
            variant,
            line_filter,
            evidence,
            exchangeable_set: None,
            random_effects_shape: Shape::Normal,
            fixed_rho: None,
            exclude: vec![],
        }
    }

    pub fn model_spec(&self, treatments: &[String]) -> ModelSpec {
        let mut spec = ModelSpec::new(self.variant, self.line_filter, treatments.to_vec());
        if let Some(set) = &self.exchangeable_set {
            spec.exchangeable_set = set.clone();
        }
        spec.random_effects_shape = self.random_effects_shape;
        spec.fixed_rho = self.fixed_rho;
        spec
    }
}

pub fn default_analyses() -> Vec<AnalysisConfig> {
    vec![
        AnalysisConfig::new("univariate_line2_rct", Variant::Univariate, LineFilter::Line2, EvidenceSet::RctOnly),
        AnalysisConfig::new("univariate_combined", Variant::Univariate, LineFilter::Both, EvidenceSet::All),
        AnalysisConfig::new("bivariate", Variant::Bivariate, LineFilter::Both, EvidenceSet::All),
        AnalysisConfig::new("exchangeable", Variant::BivariateExchangeable, LineFilter::Both, EvidenceSet::All),
    ]
}

/// A two-analysis table: `lower` fills the lower triangle, `upper` the upper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTable {
    pub lower: String,
    pub upper: String,
    pub line: usize,
}

fn default_tables() -> Vec<PairedTable> {
    vec![PairedTable { lower: "univariate_line2_rct".into(), upper: "bivariate".into(), line: 2 }]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "reference_treatments")]
    pub treatments: Vec<String>,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default = "default_analyses")]
    pub analyses: Vec<AnalysisConfig>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { treatments: reference_treatments(), prior: PriorConfig::default(), analyses: default_analyses() }
    }
}

fn default_resamples() -> usize {
    DEFAULT_RESAMPLES
}

fn default_outputs() -> PathBuf {
    PathBuf::from("outputs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub registry_path: Option<PathBuf>,
    #[serde(default)]
    pub rct_summaries_path: Option<PathBuf>,
    #[serde(default)]
    pub eligibility: EligibilityCriteria,
    #[serde(default)]
    pub adjustment: AdjustmentConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default = "default_outputs")]
    pub outputs_dir: PathBuf,
    #[serde(default = "default_resamples", rename = "bootstrap_B")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_tables")]
    pub tables: Vec<PairedTable>,
    #[serde(default)]
    pub write_draws: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl PipelineConfig {
    /// Parses a JSON config; relative paths are resolved against the config
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Path { field: "config", message: format!("{}: {e}", path.display()) })?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.registry_path.as_mut().map(resolve);
        cfg.rct_summaries_path.as_mut().map(resolve);
        resolve(&mut cfg.outputs_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.registry_path.is_none() && self.rct_summaries_path.is_none() {
            return bad("one of registry_path or rct_summaries_path is required".into());
        }
        self.sampler.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.model.prior.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        let mut names = Vec::new();
        for a in &self.model.analyses {
            if names.contains(&&a.name) {
                return bad(format!("analysis name `{}` used twice", a.name));
            }
            if a.name.is_empty() || !a.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return bad(format!("analysis name `{}` must be alphanumeric, `_` or `-`", a.name));
            }
            names.push(&a.name);
            a.model_spec(&self.model.treatments)
                .validate()
                .map_err(|e| PipelineError::Config(format!("{}: {e}", a.name)))?;
            for x in &a.exclude {
                if !(x.line == 1 || x.line == 2) || !self.model.treatments.contains(&x.treatment) {
                    return bad(format!("{}: invalid exclusion {x:?}", a.name));
                }
            }
        }
        for t in &self.tables {
            if !(t.line == 1 || t.line == 2) {
                return bad(format!("table line {} must be 1 or 2", t.line));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of the config without its output
    /// directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.outputs_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("serialisable config");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Posterior of one configured analysis.
#[derive(Debug, Clone)]
pub struct AnalysisResult {
    pub name: String,
    pub layout: SummaryLayout,
    pub chains: Vec<ChainSamples>,
    pub summary: PosteriorSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    /// File name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
    /// Set when some analysis missed the convergence gates.
    pub convergence_warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub outputs_dir: PathBuf,
    pub manifest: Manifest,
    pub emulation: Option<EmulationReport>,
    pub studies: Vec<TrialSummary>,
    pub analyses: Vec<AnalysisResult>,
    pub bootstrap: Vec<Result<CorrelationEstimate, String>>,
}

/// Collects written files and their hashes.
pub struct OutputWriter {
    dir: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl OutputWriter {
    pub fn new(dir: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| PipelineError::Write { path: dir.display().to_string(), message: e.to_string() })?;
        let _ = std::fs::remove_file(dir.join(PARTIAL_MARKER));
        Ok(Self { dir: dir.to_path_buf(), hashes: BTreeMap::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| PipelineError::Write { path: path.display().to_string(), message: e.to_string() })?;
        self.hashes.insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    pub fn hashes(&self) -> &BTreeMap<String, String> {
        &self.hashes
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<(), String>) -> Result<Vec<u8>, PipelineError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|message| PipelineError::Write { path: "<buffer>".into(), message })?;
    Ok(buf)
}

fn require_file(field: &'static str, path: &Path) -> Result<(), PipelineError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(PipelineError::Path { field, message: format!("{} does not exist", path.display()) })
    }
}

/// Loads and emulates the registry when configured.
pub fn stage_emulate(cfg: &PipelineConfig) -> Result<Option<EmulationReport>, PipelineError> {
    let Some(path) = &cfg.registry_path else { return Ok(None) };
    require_file("registry_path", path)?;
    let ds = load_registry(path, &Catalogue::reference())?;
    Ok(Some(emulate(&ds, &cfg.eligibility, &cfg.adjustment)?))
}

/// Emulated target trials followed by the randomised summaries.
pub fn stage_merge(
    cfg: &PipelineConfig,
    emulation: Option<&EmulationReport>,
) -> Result<Vec<TrialSummary>, PipelineError> {
    let mut studies = emulation.map(|e| e.summaries.clone()).unwrap_or_default();
    if let Some(path) = &cfg.rct_summaries_path {
        require_file("rct_summaries_path", path)?;
        let rct = load_summaries(path)?;
        for s in &rct {
            if studies.iter().any(|t| t.study_id == s.study_id) {
                return Err(PipelineError::Config(format!("study id {} appears twice", s.study_id)));
            }
        }
        studies.extend(rct);
    }
    Ok(studies)
}

fn select(studies: &[TrialSummary], evidence: EvidenceSet) -> Vec<TrialSummary> {
    studies
        .iter()
        .filter(|s| match evidence {
            EvidenceSet::All => true,
            EvidenceSet::RctOnly => s.design.is_rct(),
            EvidenceSet::TargetTrialsOnly => !s.design.is_rct(),
        })
        .cloned()
        .collect()
}

/// Builds, samples and summarises one analysis.
pub fn fit_analysis(
    analysis: &AnalysisConfig,
    studies: &[TrialSummary],
    treatments: &[String],
    prior: &PriorConfig,
    sampler: &SamplerConfig,
) -> Result<AnalysisResult, PipelineError> {
    let model_err = |source| PipelineError::Model { analysis: analysis.name.clone(), source };
    let spec = analysis.model_spec(treatments);
    let mut data = ModelData::build(&select(studies, analysis.evidence), &spec).map_err(model_err)?;
    for x in &analysis.exclude {
        let t = spec.index_of(&x.treatment).expect("validated");
        data.drop_line_evidence(x.line, t);
    }
    let model = NmaModel::new(data, spec, prior.clone()).map_err(model_err)?;
    let chains = run_chains(&model, sampler)
        .map_err(|source| PipelineError::Sampler { analysis: analysis.name.clone(), source })?;
    let layout = model.layout();
    let summary = summarize(&chains, &layout);
    Ok(AnalysisResult { name: analysis.name.clone(), layout, chains, summary })
}

pub fn stage_nma(cfg: &PipelineConfig, studies: &[TrialSummary]) -> Result<Vec<AnalysisResult>, PipelineError> {
    cfg.model
        .analyses
        .iter()
        .map(|a| fit_analysis(a, studies, &cfg.model.treatments, &cfg.model.prior, &cfg.sampler))
        .collect()
}

pub fn stage_bootstrap(cfg: &PipelineConfig, emulation: &EmulationReport) -> Vec<Result<CorrelationEstimate, String>> {
    emulation
        .patients
        .iter()
        .map(|t| bootstrap_within_correlation(t, cfg.bootstrap_resamples, cfg.sampler.seed).map_err(|e| e.to_string()))
        .collect()
}

pub fn bootstrap_csv(rows: &[(String, Result<CorrelationEstimate, String>)]) -> String {
    let mut out = String::from("study_id,estimate,lo,hi,resamples,n_ctrl,n_exp,error\n");
    for (id, r) in rows {
        match r {
            Ok(e) => {
                let _ =
                    writeln!(out, "{id},{},{},{},{},{},{},", e.estimate, e.lo, e.hi, e.resamples, e.n_ctrl, e.n_exp);
            }
            Err(msg) => {
                let _ = writeln!(out, "{id},NA,NA,NA,NA,NA,NA,\"{}\"", msg.replace('"', "'"));
            }
        }
    }
    out
}

fn smd_text(s: &Smd) -> String {
    match s {
        Smd::Value(v) => v.to_string(),
        Smd::Undefined => "undefined".into(),
    }
}

pub fn balance_csv(report: &EmulationReport) -> String {
    let mut out = String::from("study_id,line,covariate,mean_exp,mean_ctrl,smd\n");
    for t in &report.trials {
        for (j, rows) in t.balance.iter().enumerate() {
            for r in rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    t.study_id,
                    j + 1,
                    r.covariate.name(),
                    r.mean_exp,
                    r.mean_ctrl,
                    smd_text(&r.smd)
                );
            }
        }
    }
    out
}

pub fn diagnostics_csv(results: &[AnalysisResult]) -> String {
    let opt = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |v| v.to_string());
    let mut out = String::from("analysis,parameter,mean,median,q025,q975,rhat,ess\n");
    for r in results {
        for p in &r.summary.parameters {
            let s = &p.summary;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.name,
                p.name,
                s.mean,
                s.median,
                s.lo,
                s.hi,
                opt(p.rhat),
                opt(p.ess)
            );
        }
    }
    out
}

/// OR tables: one per analysis and modelled line, plus configured paired
/// tables whose analyses were both fitted.
pub fn render_tables(
    results: &[(String, PosteriorSummary, SummaryLayout)],
    tables: &[PairedTable],
    treatments: &[String],
) -> Result<Vec<(String, String)>, PipelineError> {
    let mut out = Vec::new();
    for (name, summary, layout) in results {
        for &line in &layout.lines {
            let text = or_matrix_report(Analysis { summary, layout, line }, treatments)?;
            out.push((format!("or_matrix_{name}_line{line}.txt"), text));
        }
    }
    let find = |n: &str| results.iter().find(|(name, _, _)| name == n);
    for t in tables {
        let (Some(lo), Some(up)) = (find(&t.lower), find(&t.upper)) else { continue };
        let lower = Analysis { summary: &lo.1, layout: &lo.2, line: t.line };
        let upper = Analysis { summary: &up.1, layout: &up.2, line: t.line };
        let text = or_matrix_two(lower, upper, treatments)?;
        out.push((format!("or_matrix_{}_vs_{}_line{}.txt", t.lower, t.upper, t.line), text));
    }
    Ok(out)
}

fn write_networks(
    out: &mut OutputWriter,
    studies: &[TrialSummary],
    reference: &str,
) -> Result<Vec<String>, PipelineError> {
    let mut notes = Vec::new();
    for line in 1..=2 {
        let net = build_network(studies, line);
        let rep = check_connectivity(&net, reference);
        if !rep.connected && rep.reference_present {
            notes.push(format!("line {line}: not connected to {reference}: {:?}", rep.unreachable));
        }
        out.write(&format!("network_line{line}.dot"), export_dot(&net).as_bytes())?;
    }
    Ok(notes)
}

fn run_stages(cfg: &PipelineConfig, out: &mut OutputWriter) -> Result<ReportBundle, PipelineError> {
    let emulation = stage_emulate(cfg)?;
    let studies = stage_merge(cfg, emulation.as_ref())?;
    let summaries_csv = csv_bytes(|b| crate::emulation::write_summaries(&studies, b).map_err(|e| e.to_string()))?;
    out.write(SUMMARIES_FILE, &summaries_csv)?;
    let mut warnings = write_networks(out, &studies, &cfg.model.treatments[0])?;

    let mut bootstrap = Vec::new();
    if let Some(e) = &emulation {
        out.write("balance.csv", balance_csv(e).as_bytes())?;
        let results = stage_bootstrap(cfg, e);
        let rows: Vec<(String, Result<CorrelationEstimate, String>)> =
            e.patients.iter().map(|p| p.study_id.clone()).zip(results.iter().cloned()).collect();
        out.write("bootstrap.csv", bootstrap_csv(&rows).as_bytes())?;
        bootstrap = results;
    }

    let analyses = stage_nma(cfg, &studies)?;
    for r in &analyses {
        let bytes = csv_bytes(|b| write_summary_csv(&r.summary, b).map_err(|e| e.to_string()))?;
        out.write(&format!("summary_{}.csv", r.name), &bytes)?;
        if cfg.write_draws {
            let bytes = csv_bytes(|b| write_draws(&r.chains, b).map_err(|e| e.to_string()))?;
            out.write(&format!("draws_{}.csv", r.name), &bytes)?;
        }
        if !r.summary.converged {
            warnings.push(format!("{}: {}", r.name, r.summary.warnings.join("; ")));
        }
    }
    out.write("diagnostics.csv", diagnostics_csv(&analyses).as_bytes())?;
    let triples: Vec<_> = analyses.iter().map(|r| (r.name.clone(), r.summary.clone(), r.layout.clone())).collect();
    for (name, text) in render_tables(&triples, &cfg.tables, &cfg.model.treatments)? {
        out.write(&name, text.as_bytes())?;
    }

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.sampler.seed,
        config_sha256: cfg.hash(),
        outputs: out.hashes().clone(),
        convergence_warnings: warnings,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("serialisable manifest") + "\n";
    std::fs::write(out.dir().join(MANIFEST_FILE), json)
        .map_err(|e| PipelineError::Write { path: MANIFEST_FILE.into(), message: e.to_string() })?;
    Ok(ReportBundle { outputs_dir: out.dir().to_path_buf(), manifest, emulation, studies, analyses, bootstrap })
}

/// Marks `dir` as holding partial outputs of a failed run.
pub fn flag_partial(dir: &Path, err: &PipelineError) {
    if dir.is_dir() {
        let _ = std::fs::write(dir.join(PARTIAL_MARKER), format!("{err}\n"));
    }
}

/// Runs every stage, writing artifacts under `cfg.outputs_dir`. On failure a
/// `PARTIAL` marker with the error is left next to whatever was written.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<ReportBundle, PipelineError> {
    cfg.validate()?;
    let mut out = OutputWriter::new(&cfg.outputs_dir)?;
    run_stages(cfg, &mut out).inspect_err(|e| flag_partial(&cfg.outputs_dir, e))
}

/// Re-renders OR tables from summary CSVs found in `dir`.
pub fn rerender_reports(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>, PipelineError> {
    let mut results = Vec::new();
    for a in &cfg.model.analyses {
        let path = dir.join(format!("summary_{}.csv", a.name));
        if !path.is_file() {
            continue;
        }
        let file = std::fs::File::open(&path)
            .map_err(|e| PipelineError::Path { field: "outputs_dir", message: format!("{}: {e}", path.display()) })?;
        let (summary, mut layout) = read_summary_csv(file, &cfg.model.treatments)?;
        layout.lines = a.line_filter.lines().to_vec();
        results.push((a.name.clone(), summary, layout));
    }
    if results.is_empty() {
        return Err(PipelineError::Path {
            field: "outputs_dir",
            message: format!("no summary CSVs in {}", dir.display()),
        });
    }
    let mut out = OutputWriter::new(dir)?;
    let mut written = Vec::new();
    for (name, text) in render_tables(&results, &cfg.tables, &cfg.model.treatments)? {
        out.write(&name, text.as_bytes())?;
        written.push(name);
    }
    Ok(written)
}

pub fn save_trial_summaries(studies: &[TrialSummary], path: &Path) -> Result<(), PipelineError> {
    save_summaries(studies, path).map_err(PipelineError::from)
}
