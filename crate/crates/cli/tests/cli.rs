use std::path::Path;
use std::process::{Command, Output};

fn seqnma(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_seqnma"));
    cmd.args(args).env_remove("SEQNMA_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Shrinks the sampler of a generated config so the tests stay fast.
fn shrink_sampler(config: &Path) {
    let text = std::fs::read_to_string(config).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["sampler"]["n_chains"] = 2.into();
    v["sampler"]["n_iter"] = 300.into();
    v["sampler"]["burn_in"] = 200.into();
    v["bootstrap_B"] = 100.into();
    std::fs::write(config, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

#[test]
fn synth_then_run_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let o = seqnma(&["synth", "--preset", "small", "--out", dir.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["registry.csv", "rct_summaries.csv", "truth.json", "config.json"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let config = dir.join("config.json");
    shrink_sampler(&config);

    let o = seqnma(&["run", "--config", config.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.join("outputs");
    assert!(out.join("manifest.json").is_file());
    assert!(out.join("summary_bivariate.csv").is_file());

    std::fs::remove_file(out.join("or_matrix_bivariate_line2.txt")).unwrap();
    let o = seqnma(&["report", "--config", config.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("or_matrix_bivariate_line2.txt").is_file());
}

#[test]
fn emulate_nma_and_bootstrap_subcommands_honour_env_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert!(seqnma(&["synth", "--preset", "small", "--out", dir.to_str().unwrap()], &[]).status.success());
    let config = dir.join("config.json");
    shrink_sampler(&config);
    let env_out = dir.join("elsewhere");
    let cfg = config.to_str().unwrap();

    let o = seqnma(&["emulate", "--config", cfg], &[("SEQNMA_OUT", &env_out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(env_out.join("trial_summaries.csv").is_file());
    assert!(!dir.join("outputs").exists());

    let o = seqnma(&["nma", "--config", cfg], &[("SEQNMA_OUT", &env_out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(env_out.join("diagnostics.csv").is_file());

    let o = seqnma(&["bootstrap", "--config", cfg, "--resamples", "200"], &[("SEQNMA_OUT", &env_out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(env_out.join("bootstrap.csv")).unwrap();
    assert!(csv.lines().count() > 1 && csv.contains(",200,"));
}

#[test]
fn failures_exit_nonzero_with_stage_tag() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.json");
    std::fs::write(&config, r#"{"registry_path": "missing.csv"}"#).unwrap();
    let o = seqnma(&["run", "--config", config.to_str().unwrap()], &[]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("[load]") && err.contains("registry_path"), "{err}");

    let o = seqnma(&["synth", "--preset", "nonsense", "--out", tmp.path().to_str().unwrap()], &[]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nonsense"));
}
