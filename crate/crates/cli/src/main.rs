use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use seqnma::emulation::{load_summaries, save_summaries};
use seqnma::pipeline::{
    balance_csv, bootstrap_csv, diagnostics_csv, flag_partial, rerender_reports, run_pipeline, stage_bootstrap,
    stage_emulate, stage_merge, stage_nma, OutputWriter, PipelineConfig, SUMMARIES_FILE,
};
use seqnma::registry::save_registry;
use seqnma::synth::{generate_rct_summaries, generate_registry, truth, TruthConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "seqnma", version, about = "Network meta-analysis of treatment sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the sampler seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the outputs directory.
    #[arg(long, env = "SEQNMA_OUT")]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.sampler.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.outputs_dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: emulation, network meta-analysis and reports.
    Run(Common),
    /// Emulates target trials and writes merged trial summaries.
    Emulate(Common),
    /// Fits the configured analyses to a trial-summary CSV.
    Nma {
        #[command(flatten)]
        common: Common,
        /// Trial summaries to fit; defaults to the outputs directory's copy.
        #[arg(long)]
        summaries: Option<PathBuf>,
    },
    /// Within-study correlation bootstrap for each emulated trial.
    Bootstrap {
        #[command(flatten)]
        common: Common,
        /// Number of resamples; defaults to the config value.
        #[arg(long)]
        resamples: Option<usize>,
    },
    /// Re-renders OR tables from summary CSVs in the outputs directory.
    Report(Common),
    /// Writes a synthetic registry, randomised summaries, truth and config.
    Synth {
        /// Named truth configuration.
        #[arg(long, default_value = "table1", conflicts_with = "truth")]
        preset: String,
        /// Truth configuration file (JSON) instead of a preset.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "SEQNMA_OUT")]
        out: PathBuf,
    },
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("[write] {}", path.display()))
}

fn emulate_cmd(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let mut out = OutputWriter::new(&cfg.outputs_dir)?;
    let emulation = stage_emulate(&cfg)?;
    let studies = stage_merge(&cfg, emulation.as_ref())?;
    save_summaries(&studies, &out.dir().join(SUMMARIES_FILE)).context("[write] trial summaries")?;
    if let Some(e) = &emulation {
        out.write("balance.csv", balance_csv(e).as_bytes())?;
        eprintln!("{} target trials, {} unmatched arms", e.summaries.len(), e.leftover.len());
    }
    eprintln!("{} studies written to {}", studies.len(), out.dir().join(SUMMARIES_FILE).display());
    Ok(())
}

fn nma_cmd(c: &Common, summaries: Option<&Path>) -> Result<()> {
    let cfg = c.load()?;
    let path = summaries.map(Path::to_path_buf).unwrap_or_else(|| cfg.outputs_dir.join(SUMMARIES_FILE));
    let studies = load_summaries(&path).with_context(|| format!("[load] summaries: {}", path.display()))?;
    let mut out = OutputWriter::new(&cfg.outputs_dir)?;
    let results = stage_nma(&cfg, &studies)?;
    for r in &results {
        let mut buf = Vec::new();
        seqnma::mcmc::write_summary_csv(&r.summary, &mut buf).context("[write] summary")?;
        out.write(&format!("summary_{}.csv", r.name), &buf)?;
        if !r.summary.converged {
            eprintln!("warning: {} did not meet convergence gates", r.name);
        }
    }
    out.write("diagnostics.csv", diagnostics_csv(&results).as_bytes())?;
    rerender_reports(&cfg, &cfg.outputs_dir)?;
    Ok(())
}

fn bootstrap_cmd(c: &Common, resamples: Option<usize>) -> Result<()> {
    let mut cfg = c.load()?;
    if let Some(b) = resamples {
        cfg.bootstrap_resamples = b;
    }
    let Some(e) = stage_emulate(&cfg)? else { bail!("[config] bootstrap needs registry_path") };
    let results = stage_bootstrap(&cfg, &e);
    let rows: Vec<_> = e.patients.iter().map(|p| p.study_id.clone()).zip(results).collect();
    let mut out = OutputWriter::new(&cfg.outputs_dir)?;
    let text = bootstrap_csv(&rows);
    out.write("bootstrap.csv", text.as_bytes())?;
    print!("{text}");
    Ok(())
}

fn synth_cmd(preset: &str, truth_path: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut t = match truth_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("[load] truth: {}", p.display()))?;
            serde_json::from_str::<TruthConfig>(&text).context("[config] truth")?
        }
        None => TruthConfig::preset(preset).context("[config]")?,
    };
    if let Some(s) = seed {
        t.seed = s;
    }
    std::fs::create_dir_all(out).with_context(|| format!("[write] {}", out.display()))?;
    save_registry(&generate_registry(&t).context("[synth]")?, &out.join("registry.csv")).context("[write] registry")?;
    save_summaries(&generate_rct_summaries(&t).context("[synth]")?, &out.join("rct_summaries.csv"))
        .context("[write] rct summaries")?;
    write_file(&out.join("truth.json"), &(serde_json::to_string_pretty(&truth(&t)?)? + "\n"))?;
    let mut cfg = PipelineConfig {
        registry_path: Some("registry.csv".into()),
        rct_summaries_path: Some("rct_summaries.csv".into()),
        outputs_dir: "outputs".into(),
        ..PipelineConfig::default()
    };
    cfg.sampler.seed = t.seed;
    write_file(&out.join("config.json"), &(serde_json::to_string_pretty(&cfg)? + "\n"))?;
    eprintln!("synthetic inputs written to {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(c) => {
            let cfg = c.load()?;
            let bundle = run_pipeline(&cfg)?;
            for w in &bundle.manifest.convergence_warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("outputs written to {}", bundle.outputs_dir.display());
            Ok(())
        }
        Command::Emulate(c) => emulate_cmd(&c),
        Command::Nma { common, summaries } => nma_cmd(&common, summaries.as_deref()).inspect_err(|e| {
            if let (Ok(cfg), Some(pe)) = (common.load(), e.downcast_ref()) {
                flag_partial(&cfg.outputs_dir, pe);
            }
        }),
        Command::Bootstrap { common, resamples } => bootstrap_cmd(&common, resamples),
        Command::Report(c) => {
            let cfg = c.load()?;
            for name in rerender_reports(&cfg, &cfg.outputs_dir)? {
                println!("{}", cfg.outputs_dir.join(name).display());
            }
            Ok(())
        }
        Command::Synth { preset, truth, seed, out } => synth_cmd(&preset, truth.as_deref(), seed, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
