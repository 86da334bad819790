//! Pipeline stages. Each stage reads its inputs from the report directory's
//! artifact files and writes its outputs there, so a full run and a chain of
//! individual subcommands produce identical bytes.

use std::fmt;
use std::fs;
use std::path::PathBuf;

use airshield_core::adversary::{degradation_report, poison_dataset, DegradationReport, LabeledSample};
use airshield_core::attribution::{
    exact_shapley_linear, global_importance, sampling_shapley, Attribution, GlobalImportance,
};
use airshield_core::dataset::{
    fmt_sig9, read_labeled_csv, read_records_csv, seeded_split, write_labeled_csv,
    write_records_csv, Dataset,
};
use airshield_core::detector::{
    compute_macro_metrics, train_detector, DetectorModel, Featurizer, MacroMetrics,
};
use airshield_core::emulator::generate_scene;
use airshield_core::features::assemble_row;
use airshield_core::prompt_codec::{
    build_sft_dataset, canonical_sample, input_display_scales, serialize_record, write_sft_jsonl,
    ExplainBindings, PromptKind, OUTPUT_BENIGN, OUTPUT_MALICIOUS,
};
use airshield_core::regressor::{evaluate_regression, fit_regressor, ModelFamily, RegressionModel};
use airshield_core::rng::{derive_seed, seeded_rng};
use airshield_gateway::{
    classify_with_llm, explain_incident, Backend, BackendKind, GatewayConfig, LlmEvaluation,
    MockVerdictBackend, RemoteBackend, TranscriptStore,
};

use crate::config::{seed_tag, ExperimentConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Emulate,
    TrainRegressor,
    Attack,
    Attribute,
    TrainDetector,
    Evaluate,
    ExportSft,
    ClassifyLlm,
    Explain,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Emulate => "emulate",
            Stage::TrainRegressor => "train-regressor",
            Stage::Attack => "attack",
            Stage::Attribute => "attribute",
            Stage::TrainDetector => "train-detector",
            Stage::Evaluate => "evaluate",
            Stage::ExportSft => "export-sft",
            Stage::ClassifyLlm => "classify-llm",
            Stage::Explain => "explain",
            Stage::Report => "report",
        }
    }

    /// Distinct process exit code per failing stage.
    pub fn exit_code(self) -> u8 {
        match self {
            Stage::Emulate => 10,
            Stage::TrainRegressor => 11,
            Stage::Attack => 12,
            Stage::Attribute => 13,
            Stage::TrainDetector => 14,
            Stage::Evaluate => 15,
            Stage::ExportSft => 16,
            Stage::ClassifyLlm => 17,
            Stage::Explain => 18,
            Stage::Report => 19,
        }
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {}", self.stage.name(), self.message)
    }
}

pub type StageResult<T> = Result<T, StageError>;

fn err<E: fmt::Display>(stage: Stage) -> impl FnOnce(E) -> StageError {
    move |e| StageError {
        stage,
        message: e.to_string(),
    }
}

// Artifact paths within the report directory.
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            dir: cfg.report_dir.clone(),
        }
    }

    pub fn records(&self) -> PathBuf {
        self.dir.join("records.csv")
    }
    pub fn regressor(&self) -> PathBuf {
        self.dir.join("regressor.txt")
    }
    pub fn labeled(&self) -> PathBuf {
        self.dir.join("labeled.csv")
    }
    pub fn degradation(&self) -> PathBuf {
        self.dir.join("degradation.txt")
    }
    pub fn attribution_samples(&self) -> PathBuf {
        self.dir.join("attribution_samples.csv")
    }
    pub fn attribution_global(&self) -> PathBuf {
        self.dir.join("attribution_global.csv")
    }
    pub fn detector(&self) -> PathBuf {
        self.dir.join("detector.txt")
    }
    pub fn detector_metrics(&self) -> PathBuf {
        self.dir.join("detector_metrics.txt")
    }
    pub fn sft_train(&self) -> PathBuf {
        self.dir.join("sft_train.jsonl")
    }
    pub fn sft_test(&self) -> PathBuf {
        self.dir.join("sft_test.jsonl")
    }
    pub fn llm_metrics(&self) -> PathBuf {
        self.dir.join("llm_metrics.txt")
    }
    pub fn transcripts(&self) -> PathBuf {
        self.dir.join("transcripts.jsonl")
    }
    pub fn explanations(&self) -> PathBuf {
        self.dir.join("explanations.md")
    }
    pub fn report(&self) -> PathBuf {
        self.dir.join("report.md")
    }
}

/// The residual featurizer used by the detector pipeline: the fitted
/// regressor plus the display-to-native unit scales.
fn residual_featurizer(regressor: RegressionModel) -> Featurizer {
    Featurizer::Residual {
        regressor,
        scales: input_display_scales(),
    }
}

fn load_regressor(art: &Artifacts, stage: Stage) -> StageResult<RegressionModel> {
    let doc = fs::read_to_string(art.regressor()).map_err(err(stage))?;
    RegressionModel::from_document(&doc).map_err(err(stage))
}

fn load_detector(art: &Artifacts, stage: Stage) -> StageResult<DetectorModel> {
    let doc = fs::read_to_string(art.detector()).map_err(err(stage))?;
    DetectorModel::from_document(&doc).map_err(err(stage))
}

fn load_labeled(art: &Artifacts, stage: Stage) -> StageResult<Vec<LabeledSample>> {
    read_labeled_csv(&art.labeled()).map_err(err(stage))
}

/// Canonical display-quantized view of the labeled samples: exactly what the
/// rendered prompt text carries, and what the detector pipeline consumes.
fn canonicalize(samples: &[LabeledSample]) -> Vec<LabeledSample> {
    samples.iter().map(canonical_sample).collect()
}

fn split_samples(
    cfg: &ExperimentConfig,
    samples: &[LabeledSample],
    stage: Stage,
) -> StageResult<(Vec<LabeledSample>, Vec<LabeledSample>)> {
    seeded_split(samples, cfg.split.test_count, cfg.split.seed).map_err(err(stage))
}

// --- stages -------------------------------------------------------------------

pub fn stage_emulate(cfg: &ExperimentConfig) -> StageResult<usize> {
    let stage = Stage::Emulate;
    let art = Artifacts::new(cfg);
    fs::create_dir_all(&art.dir).map_err(err(stage))?;
    let records = generate_scene(&cfg.scene).map_err(err(stage))?;
    write_records_csv(&art.records(), &records).map_err(err(stage))?;
    Ok(records.len())
}

pub fn stage_train_regressor(cfg: &ExperimentConfig) -> StageResult<()> {
    let stage = Stage::TrainRegressor;
    let art = Artifacts::new(cfg);
    let records = read_records_csv(&art.records()).map_err(err(stage))?;
    let data = Dataset::from_records(&records);

    // The regressor is fitted on a train_fraction share of the scene.
    let n = data.len();
    let n_fit = ((cfg.split.train_fraction * n as f64).round() as usize).clamp(2, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeded_rng(derive_seed(cfg.regressor.seed, 1));
    for i in (1..n).rev() {
        let j = rand::Rng::random_range(&mut rng, 0..=i);
        order.swap(i, j);
    }
    order.truncate(n_fit);
    let fit_data = data.subset(&order);

    let model = fit_regressor(&fit_data, &cfg.regressor).map_err(err(stage))?;
    fs::write(art.regressor(), model.to_document()).map_err(err(stage))?;
    Ok(())
}

/// Retraining on poisoned data: fits a fresh regressor on the perturbed
/// features from labeled.csv and writes it as a side artifact, reporting its
/// quality on the clean records. The main pipeline keeps the fixed-model
/// measurement.
pub fn stage_train_regressor_poisoned(cfg: &ExperimentConfig) -> StageResult<(f64, f64)> {
    let stage = Stage::TrainRegressor;
    let art = Artifacts::new(cfg);
    let labeled = load_labeled(&art, stage)?;
    let poisoned = Dataset::new(
        airshield_core::features::input_feature_names(),
        labeled.iter().map(|s| s.x.clone()).collect(),
        labeled.iter().map(|s| s.y).collect(),
    );
    let model = fit_regressor(&poisoned, &cfg.regressor).map_err(err(stage))?;
    fs::write(art.dir.join("regressor_poisoned.txt"), model.to_document())
        .map_err(err(stage))?;
    let records = read_records_csv(&art.records()).map_err(err(stage))?;
    let clean = Dataset::from_records(&records);
    let m = evaluate_regression(&model, &clean).map_err(err(stage))?;
    Ok((m.mse, m.r_squared))
}

pub fn stage_attack(cfg: &ExperimentConfig) -> StageResult<DegradationReport> {
    let stage = Stage::Attack;
    let art = Artifacts::new(cfg);
    let records = read_records_csv(&art.records()).map_err(err(stage))?;
    let data = Dataset::from_records(&records);
    let model = load_regressor(&art, stage)?;
    let labeled = poison_dataset(&data, &model, &cfg.attack).map_err(err(stage))?;
    let report = degradation_report(&model, &data, &labeled).map_err(err(stage))?;
    write_labeled_csv(&art.labeled(), &labeled).map_err(err(stage))?;
    fs::write(art.degradation(), report.to_text()).map_err(err(stage))?;
    Ok(report)
}

fn attribution_for(
    model: &RegressionModel,
    x: &[f64],
    background: &Dataset,
    n_permutations: usize,
    seed: u64,
) -> Result<Attribution, airshield_core::attribution::AttributionError> {
    match model.family {
        ModelFamily::Linear => exact_shapley_linear(model, x, background),
        ModelFamily::MlpOneHidden => sampling_shapley(
            |z: &[f64]| model.predict(z),
            x,
            background,
            &model.feature_order,
            n_permutations,
            seed,
        ),
    }
}

pub fn stage_attribute(cfg: &ExperimentConfig) -> StageResult<GlobalImportance> {
    let stage = Stage::Attribute;
    let art = Artifacts::new(cfg);
    let records = read_records_csv(&art.records()).map_err(err(stage))?;
    let data = Dataset::from_records(&records);
    let model = load_regressor(&art, stage)?;

    let seed = derive_seed(cfg.master_seed, seed_tag::ATTRIBUTION);
    let mut rng = seeded_rng(seed);
    let bg_count = cfg.attribution.background_size.min(data.len());
    let bg_idx = rand::seq::index::sample(&mut rng, data.len(), bg_count).into_vec();
    let background = data.subset(&bg_idx);
    let sample_count = cfg.attribution.samples.min(data.len());
    let sample_idx = rand::seq::index::sample(&mut rng, data.len(), sample_count).into_vec();

    let mut attributions = Vec::with_capacity(sample_count);
    let mut xs = Vec::with_capacity(sample_count);
    for (k, &i) in sample_idx.iter().enumerate() {
        let att = attribution_for(
            &model,
            &data.xs[i],
            &background,
            cfg.attribution.n_permutations,
            derive_seed(seed, k as u64),
        )
        .map_err(err(stage))?;
        attributions.push(att);
        xs.push(data.xs[i].clone());
    }
    let global = global_importance(&attributions, &xs).map_err(err(stage))?;

    // Per-sample artifact: record index, base value, prediction, then one
    // value/phi pair per feature.
    let mut out = String::new();
    out.push_str("record_index,base_value,prediction");
    for name in &model.feature_order {
        out.push_str(&format!(",value_{name},phi_{name}"));
    }
    out.push('\n');
    for ((att, x), &i) in attributions.iter().zip(&xs).zip(&sample_idx) {
        out.push_str(&format!(
            "{i},{},{}",
            fmt_sig9(att.base_value),
            fmt_sig9(att.reconstructed_prediction())
        ));
        for (v, phi) in x.iter().zip(&att.per_feature) {
            out.push_str(&format!(",{},{}", fmt_sig9(*v), fmt_sig9(*phi)));
        }
        out.push('\n');
    }
    fs::write(art.attribution_samples(), out).map_err(err(stage))?;

    let mut out = String::new();
    out.push_str("rank,feature,mean_abs_phi\n");
    for (rank, (name, value)) in global.ranking().iter().enumerate() {
        out.push_str(&format!("{},{name},{}\n", rank + 1, fmt_sig9(*value)));
    }
    fs::write(art.attribution_global(), out).map_err(err(stage))?;
    Ok(global)
}

pub fn stage_train_detector(cfg: &ExperimentConfig) -> StageResult<()> {
    let stage = Stage::TrainDetector;
    let art = Artifacts::new(cfg);
    let labeled = load_labeled(&art, stage)?;
    let canonical = canonicalize(&labeled);
    let (train, _test) = split_samples(cfg, &canonical, stage)?;
    let regressor = load_regressor(&art, stage)?;
    let detector = train_detector(&train, &cfg.detector, residual_featurizer(regressor))
        .map_err(err(stage))?;
    fs::write(art.detector(), detector.to_document()).map_err(err(stage))?;
    Ok(())
}

/// Renders the metric report: per-class and macro Precision/Recall/F1-score.
fn metrics_report_text(m: &MacroMetrics, extra: &[(String, String)]) -> String {
    let line = |name: &str, p: f64, r: f64, f1: f64| {
        format!("{name},{p:.4},{r:.4},{f1:.4}\n")
    };
    let mut out = String::from("airshield-metrics v1\n");
    out.push_str("class,Precision,Recall,F1-score\n");
    out.push_str(&line(
        "malicious",
        m.class_malicious.precision,
        m.class_malicious.recall,
        m.class_malicious.f1,
    ));
    out.push_str(&line(
        "benign",
        m.class_benign.precision,
        m.class_benign.recall,
        m.class_benign.f1,
    ));
    out.push_str(&line("macro", m.precision, m.recall, m.f1));
    out.push_str(&format!(
        "confusion: tp={} fp={} tn={} fn={}\n",
        m.class_malicious.true_pos,
        m.class_malicious.false_pos,
        m.class_malicious.true_neg,
        m.class_malicious.false_neg,
    ));
    out.push_str(&format!("support: {}\n", m.class_malicious.support));
    out.push_str("averaging: macro over the two classes\n");
    for (k, v) in extra {
        out.push_str(&format!("{k}: {v}\n"));
    }
    out
}

pub fn stage_evaluate(cfg: &ExperimentConfig) -> StageResult<MacroMetrics> {
    let stage = Stage::Evaluate;
    let art = Artifacts::new(cfg);
    let labeled = load_labeled(&art, stage)?;
    let canonical = canonicalize(&labeled);
    let (_train, test) = split_samples(cfg, &canonical, stage)?;
    let detector = load_detector(&art, stage)?;
    let mut predicted = Vec::with_capacity(test.len());
    let mut truth = Vec::with_capacity(test.len());
    for s in &test {
        predicted.push(detector.classify_sample(s).map_err(err(stage))?.label);
        truth.push(s.label);
    }
    let macro_metrics = compute_macro_metrics(&predicted, &truth).map_err(err(stage))?;
    fs::write(
        art.detector_metrics(),
        metrics_report_text(&macro_metrics, &[]),
    )
    .map_err(err(stage))?;
    Ok(macro_metrics)
}

pub fn stage_export_sft(cfg: &ExperimentConfig) -> StageResult<(usize, usize)> {
    let stage = Stage::ExportSft;
    let art = Artifacts::new(cfg);
    let labeled = load_labeled(&art, stage)?;
    let (train, test) = split_samples(cfg, &labeled, stage)?;
    let train_sft = build_sft_dataset(&train).map_err(err(stage))?;
    let test_sft = build_sft_dataset(&test).map_err(err(stage))?;
    write_sft_jsonl(&art.sft_train(), &train_sft).map_err(err(stage))?;
    write_sft_jsonl(&art.sft_test(), &test_sft).map_err(err(stage))?;
    Ok((train_sft.len(), test_sft.len()))
}

fn build_backend(gw: &GatewayConfig, detector: DetectorModel) -> Backend {
    match gw.backend {
        BackendKind::Mock => Backend::Mock(MockVerdictBackend::new(detector)),
        BackendKind::Remote => Backend::Remote(RemoteBackend::new(gw)),
    }
}

pub fn stage_classify_llm(cfg: &ExperimentConfig) -> StageResult<LlmEvaluation> {
    let stage = Stage::ClassifyLlm;
    let art = Artifacts::new(cfg);
    let gw = cfg.gateway.as_ref().ok_or_else(|| StageError {
        stage,
        message: "no [gateway] section in the config".into(),
    })?;
    let labeled = load_labeled(&art, stage)?;
    let (_train, test) = split_samples(cfg, &labeled, stage)?;
    let detector = load_detector(&art, stage)?;
    let backend = build_backend(gw, detector);
    let store = TranscriptStore::open(&art.transcripts()).map_err(err(stage))?;
    let eval =
        classify_with_llm(&backend, gw, &test, &store, &cfg.run_id()).map_err(err(stage))?;
    let extra = vec![
        ("unparseable".to_string(), eval.unparseable_count.to_string()),
        (
            "transport_failures".to_string(),
            eval.transport_failure_count.to_string(),
        ),
    ];
    fs::write(
        art.llm_metrics(),
        metrics_report_text(&eval.macro_metrics, &extra),
    )
    .map_err(err(stage))?;
    Ok(eval)
}

pub fn stage_explain(cfg: &ExperimentConfig) -> StageResult<()> {
    let stage = Stage::Explain;
    let art = Artifacts::new(cfg);
    let gw = cfg.gateway.as_ref().ok_or_else(|| StageError {
        stage,
        message: "no [gateway] section in the config".into(),
    })?;
    let labeled = load_labeled(&art, stage)?;
    let (_train, test) = split_samples(cfg, &labeled, stage)?;
    let benign = test.iter().find(|s| s.label == 0).ok_or_else(|| StageError {
        stage,
        message: "test split has no benign record".into(),
    })?;
    let malicious = test.iter().find(|s| s.label == 1).ok_or_else(|| StageError {
        stage,
        message: "test split has no malicious record".into(),
    })?;
    let benign_text =
        serialize_record(&assemble_row(&benign.x, benign.y)).map_err(err(stage))?;
    let malicious_text =
        serialize_record(&assemble_row(&malicious.x, malicious.y)).map_err(err(stage))?;

    let detector = load_detector(&art, stage)?;
    let canonical = canonical_sample(malicious);
    let verdict = detector
        .classify_sample(&canonical)
        .map_err(err(stage))?
        .label;
    let result_text = if verdict == 1 { OUTPUT_MALICIOUS } else { OUTPUT_BENIGN };

    let backend = build_backend(gw, detector);
    let sections = [
        (
            "Chain-of-thought reasoning",
            PromptKind::ExplainReasoning,
            ExplainBindings {
                input: Some(malicious_text.clone()),
                result: Some(result_text.to_string()),
                ..Default::default()
            },
        ),
        (
            "Feature importance",
            PromptKind::ExplainFeatureImportance,
            ExplainBindings {
                input: Some(malicious_text.clone()),
                ..Default::default()
            },
        ),
        (
            "Benign/malicious comparison",
            PromptKind::ExplainPairComparison,
            ExplainBindings {
                input1: Some(benign_text.clone()),
                input2: Some(malicious_text.clone()),
                ..Default::default()
            },
        ),
    ];

    let mut out = String::from("# Explainability transcripts\n");
    for (i, (title, kind, bindings)) in sections.iter().enumerate() {
        let transcript = explain_incident(&backend, gw, *kind, bindings).map_err(err(stage))?;
        out.push_str(&format!("\n## {}. {title}\n\n", i + 1));
        out.push_str("### Prompt\n\n");
        out.push_str(&format!("```\n{}\n```\n\n", transcript.prompt));
        out.push_str("### Response\n\n");
        match &transcript.response {
            Some(r) => out.push_str(&format!("```\n{r}\n```\n")),
            None => out.push_str(&format!(
                "(no response: transport status {})\n",
                transcript.status.name()
            )),
        }
    }
    fs::write(art.explanations(), out).map_err(err(stage))?;
    Ok(())
}

/// Clean/test regression quality, recomputed for the report.
pub fn regression_summary(cfg: &ExperimentConfig) -> StageResult<(f64, f64)> {
    let stage = Stage::Report;
    let art = Artifacts::new(cfg);
    let records = read_records_csv(&art.records()).map_err(err(stage))?;
    let data = Dataset::from_records(&records);
    let model = load_regressor(&art, stage)?;
    let m = evaluate_regression(&model, &data).map_err(err(stage))?;
    Ok((m.mse, m.r_squared))
}
