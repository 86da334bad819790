//! Incident report assembly and full-experiment orchestration.
//!
//! The report embeds values by reading them back from the stage artifacts, so
//! every number in it traces to a stored file. No timestamps: identical
//! configs produce identical reports.

use std::fs;

use crate::config::ExperimentConfig;
use crate::stages::{
    regression_summary, stage_attack, stage_attribute, stage_classify_llm, stage_emulate,
    stage_evaluate, stage_explain, stage_export_sft, stage_train_detector, stage_train_regressor,
    Artifacts, Stage, StageError, StageResult,
};

fn embed_artifact(out: &mut String, title: &str, path: &std::path::Path) {
    out.push_str(&format!("\n## {title}\n\n"));
    match fs::read_to_string(path) {
        Ok(text) => {
            out.push_str("```\n");
            out.push_str(text.trim_end());
            out.push_str("\n```\n");
        }
        Err(_) => out.push_str("skipped (artifact not present)\n"),
    }
}

fn skipped_section(out: &mut String, title: &str, reason: &str) {
    out.push_str(&format!("\n## {title}\n\nskipped ({reason})\n"));
}

pub fn stage_report(cfg: &ExperimentConfig) -> StageResult<()> {
    let stage = Stage::Report;
    let art = Artifacts::new(cfg);
    let gateway_enabled = cfg.gateway.is_some();

    let mut out = String::new();
    out.push_str("# AirShield incident report\n\n");
    out.push_str(&format!(
        "- airshield version: {}\n- master seed: {}\n- run id: {}\n",
        env!("CARGO_PKG_VERSION"),
        cfg.master_seed,
        cfg.run_id(),
    ));
    if let Ok((mse, r2)) = regression_summary(cfg) {
        out.push_str(&format!(
            "- regressor fit on clean data: mse = {mse:.6}, r_squared = {r2:.6}\n"
        ));
    }
    out.push_str(
        "- attribution inputs: clean (pre-attack) records; background is a seeded \
         subsample of the same clean data, sized per the run config\n",
    );

    out.push_str("\n## Config snapshot\n\n```toml\n");
    out.push_str(&cfg.to_toml());
    out.push_str("```\n");

    embed_artifact(&mut out, "Attack degradation", &art.degradation());
    embed_artifact(
        &mut out,
        "Global feature importance",
        &art.attribution_global(),
    );
    embed_artifact(&mut out, "Detector metrics", &art.detector_metrics());
    if gateway_enabled {
        embed_artifact(&mut out, "LLM metrics", &art.llm_metrics());
        embed_artifact(&mut out, "Explainability transcripts", &art.explanations());
    } else {
        skipped_section(&mut out, "LLM metrics", "no gateway configured");
        skipped_section(
            &mut out,
            "Explainability transcripts",
            "no gateway configured",
        );
    }

    out.push_str("\n## Artifacts\n\n");
    for (name, present) in [
        ("records.csv", art.records().exists()),
        ("regressor.txt", art.regressor().exists()),
        ("labeled.csv", art.labeled().exists()),
        ("degradation.txt", art.degradation().exists()),
        ("attribution_samples.csv", art.attribution_samples().exists()),
        ("attribution_global.csv", art.attribution_global().exists()),
        ("detector.txt", art.detector().exists()),
        ("detector_metrics.txt", art.detector_metrics().exists()),
        ("sft_train.jsonl", art.sft_train().exists()),
        ("sft_test.jsonl", art.sft_test().exists()),
        ("llm_metrics.txt", art.llm_metrics().exists()),
        ("transcripts.jsonl", art.transcripts().exists()),
        ("explanations.md", art.explanations().exists()),
    ] {
        out.push_str(&format!(
            "- {name}: {}\n",
            if present { "present" } else { "absent" }
        ));
    }

    fs::write(art.report(), out).map_err(|e| StageError {
        stage,
        message: e.to_string(),
    })?;
    Ok(())
}

/// Runs the full experiment in fixed stage order. Gateway stages run only
/// when a gateway is configured; the report marks them skipped otherwise.
/// Partial artifacts from a failing run are retained for inspection.
pub fn run_experiment(cfg: &ExperimentConfig) -> StageResult<()> {
    let n = stage_emulate(cfg)?;
    eprintln!("emulate: {n} records");
    stage_train_regressor(cfg)?;
    eprintln!("train-regressor: done");
    let degradation = stage_attack(cfg)?;
    eprintln!(
        "attack: delta_mse_pct = {:.3}, delta_r2_pct = {:.3}",
        degradation.delta_mse_pct, degradation.delta_r2_pct
    );
    stage_attribute(cfg)?;
    eprintln!("attribute: done");
    stage_train_detector(cfg)?;
    eprintln!("train-detector: done");
    let metrics = stage_evaluate(cfg)?;
    eprintln!(
        "evaluate: macro precision = {:.4}, recall = {:.4}, f1 = {:.4}",
        metrics.precision, metrics.recall, metrics.f1
    );
    let (train_n, test_n) = stage_export_sft(cfg)?;
    eprintln!("export-sft: {train_n} train / {test_n} test examples");
    if cfg.gateway.is_some() {
        let eval = stage_classify_llm(cfg)?;
        eprintln!(
            "classify-llm: macro f1 = {:.4}, unparseable = {}, transport failures = {}",
            eval.macro_metrics.f1, eval.unparseable_count, eval.transport_failure_count
        );
        stage_explain(cfg)?;
        eprintln!("explain: done");
    } else {
        eprintln!("classify-llm: skipped (no gateway configured)");
        eprintln!("explain: skipped (no gateway configured)");
    }
    stage_report(cfg)?;
    eprintln!("report: written");
    Ok(())
}
