//! Benign/malicious record classifier and the shared metric harness.
//!
//! The detector head is a logistic regression (default) or a one-hidden-layer
//! MLP over engineered features. `Featurizer::Plain` feeds the raw input
//! vector through; `Featurizer::Residual` embeds the fitted path-loss
//! regressor and appends the prediction residual and its magnitude — the
//! quantity an FGSM step inflates by construction, which is what makes the
//! poisoned rows separable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::LabeledSample;
use crate::regressor::{fmt_sig17, NormStats, RegressionModel, RegressorError};
use crate::rng::seeded_rng;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("training set is empty")]
    Empty,
    #[error("feature `{0}` is constant in the training data")]
    ConstantFeature(String),
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("prediction and truth lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("label {0} outside {{0, 1}}")]
    BadLabel(u8),
    #[error("regressor error: {0}")]
    Regressor(#[from] RegressorError),
    #[error("model document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    Logistic,
    MlpOneHidden,
}

impl DetectorKind {
    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Logistic => "logistic",
            DetectorKind::MlpOneHidden => "mlp-1-hidden",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "logistic" => Some(DetectorKind::Logistic),
            "mlp-1-hidden" => Some(DetectorKind::MlpOneHidden),
            _ => None,
        }
    }
}

/// Input transform applied before standardization and the classifier head.
#[derive(Debug, Clone, PartialEq)]
pub enum Featurizer {
    /// Use the input vector as-is; the target is ignored.
    Plain,
    /// Append the path-loss prediction residual and its magnitude.
    /// `scales` convert the (display-unit) input back into the regressor's
    /// native units: native_i = x_i * scales_i.
    Residual {
        regressor: RegressionModel,
        scales: Vec<f64>,
    },
}

impl Featurizer {
    pub fn features(&self, x: &[f64], y: f64) -> Vec<f64> {
        match self {
            Featurizer::Plain => x.to_vec(),
            Featurizer::Residual { regressor, scales } => {
                let native: Vec<f64> =
                    x.iter().zip(scales).map(|(v, s)| v * s).collect();
                let residual = y - regressor.predict(&native);
                let mut out = x.to_vec();
                out.push(residual);
                out.push(residual.abs());
                out
            }
        }
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        match self {
            Featurizer::Plain => input_dim,
            Featurizer::Residual { .. } => input_dim + 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorHyper {
    pub kind: DetectorKind,
    pub learning_rate: f64,
    pub epochs: usize,
    /// 0 means full-batch gradient descent.
    #[serde(default)]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub decision_threshold: f64,
    #[serde(default = "default_hidden")]
    pub hidden_width: usize,
}

fn default_threshold() -> f64 {
    0.5
}

fn default_hidden() -> usize {
    8
}

impl Default for DetectorHyper {
    fn default() -> Self {
        Self {
            kind: DetectorKind::Logistic,
            learning_rate: 0.5,
            epochs: 300,
            batch_size: 0,
            seed: 0,
            decision_threshold: 0.5,
            hidden_width: 8,
        }
    }
}

/// Fitted detector. Parameter layout mirrors the regressor families, with a
/// sigmoid on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub kind: DetectorKind,
    pub theta: Vec<f64>,
    pub norm_stats: NormStats,
    pub decision_threshold: f64,
    pub hidden_width: usize,
    pub input_dim: usize,
    pub featurizer: Featurizer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub label: u8,
    pub probability: f64,
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

impl DetectorModel {
    fn logit_standardized(&self, z: &[f64]) -> f64 {
        let d = z.len();
        match self.kind {
            DetectorKind::Logistic => {
                self.theta[..d].iter().zip(z).map(|(w, v)| w * v).sum::<f64>() + self.theta[d]
            }
            DetectorKind::MlpOneHidden => {
                let h = self.hidden_width;
                let (w1, rest) = self.theta.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(h);
                let mut u = b2[0];
                for j in 0..h {
                    let zj = w1[j * d..(j + 1) * d]
                        .iter()
                        .zip(z)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
                        + b1[j];
                    u += w2[j] * zj.tanh();
                }
                u
            }
        }
    }

    /// Malicious probability for one record (input vector plus target).
    pub fn probability(&self, x: &[f64], y: f64) -> Result<f64, DetectorError> {
        if x.len() != self.input_dim {
            return Err(DetectorError::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let f = self.featurizer.features(x, y);
        let z = self.norm_stats.standardize(&f);
        Ok(sigmoid(self.logit_standardized(&z)))
    }

    /// Label 1 iff probability >= decision_threshold (ties go malicious).
    pub fn classify(&self, x: &[f64], y: f64) -> Result<Classification, DetectorError> {
        let probability = self.probability(x, y)?;
        Ok(Classification {
            label: u8::from(probability >= self.decision_threshold),
            probability,
        })
    }

    pub fn classify_sample(&self, s: &LabeledSample) -> Result<Classification, DetectorError> {
        self.classify(&s.x, s.y)
    }
}

/// Trains the detector by seeded (mini-batch) gradient descent on the mean
/// cross-entropy. The logistic head starts from zero weights, so swapping
/// class labels exactly negates the learned parameters.
pub fn train_detector(
    train: &[LabeledSample],
    hyper: &DetectorHyper,
    featurizer: Featurizer,
) -> Result<DetectorModel, DetectorError> {
    if train.is_empty() {
        return Err(DetectorError::Empty);
    }
    let n_pos = train.iter().filter(|s| s.label == 1).count();
    if n_pos == 0 || n_pos == train.len() {
        return Err(DetectorError::SingleClass);
    }
    let input_dim = train[0].x.len();
    let feats: Vec<Vec<f64>> = train
        .iter()
        .map(|s| featurizer.features(&s.x, s.y))
        .collect();
    let names: Vec<String> = (0..featurizer.output_dim(input_dim))
        .map(|i| format!("f{i}"))
        .collect();
    let norm_stats = NormStats::fit(&feats, &names)
        .map_err(|e| match e {
            RegressorError::ConstantFeature(name) => DetectorError::ConstantFeature(name),
            other => DetectorError::Regressor(other),
        })?;
    let zs: Vec<Vec<f64>> = feats.iter().map(|f| norm_stats.standardize(f)).collect();
    let targets: Vec<f64> = train.iter().map(|s| f64::from(s.label)).collect();
    let d = zs[0].len();

    let h = hyper.hidden_width;
    let theta_len = match hyper.kind {
        DetectorKind::Logistic => d + 1,
        DetectorKind::MlpOneHidden => h * d + h + h + 1,
    };
    let mut model = DetectorModel {
        kind: hyper.kind,
        theta: vec![0.0; theta_len],
        norm_stats,
        decision_threshold: hyper.decision_threshold,
        hidden_width: match hyper.kind {
            DetectorKind::Logistic => 0,
            DetectorKind::MlpOneHidden => h,
        },
        input_dim,
        featurizer,
    };

    let mut rng = seeded_rng(hyper.seed);
    if hyper.kind == DetectorKind::MlpOneHidden {
        let bound_in = 1.0 / (d as f64).sqrt();
        for v in model.theta[..h * d + h].iter_mut() {
            *v = rand::Rng::random_range(&mut rng, -bound_in..bound_in);
        }
        let bound_out = 1.0 / (h as f64).sqrt();
        for v in model.theta[h * d + h..h * d + h + h].iter_mut() {
            *v = rand::Rng::random_range(&mut rng, -bound_out..bound_out);
        }
    }

    let n = zs.len();
    let batch = if hyper.batch_size == 0 || hyper.batch_size > n {
        n
    } else {
        hyper.batch_size
    };
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..hyper.epochs {
        if batch < n {
            for i in (1..n).rev() {
                let j = rand::Rng::random_range(&mut rng, 0..=i);
                order.swap(i, j);
            }
        }
        for chunk in order.chunks(batch) {
            let grad = ce_gradient(&model, &zs, &targets, chunk);
            for (t, g) in model.theta.iter_mut().zip(&grad) {
                *t -= hyper.learning_rate * g;
            }
        }
    }
    Ok(model)
}

fn ce_gradient(model: &DetectorModel, zs: &[Vec<f64>], ys: &[f64], idx: &[usize]) -> Vec<f64> {
    let d = zs[0].len();
    let scale = 1.0 / idx.len() as f64;
    let mut grad = vec![0.0; model.theta.len()];
    match model.kind {
        DetectorKind::Logistic => {
            for &i in idx {
                let z = &zs[i];
                let p = sigmoid(model.logit_standardized(z));
                let c = (p - ys[i]) * scale;
                for (g, zi) in grad[..d].iter_mut().zip(z) {
                    *g += c * zi;
                }
                grad[d] += c;
            }
        }
        DetectorKind::MlpOneHidden => {
            let h = model.hidden_width;
            let (w1, rest) = model.theta.split_at(h * d);
            let (b1, rest) = rest.split_at(h);
            let (w2, _) = rest.split_at(h);
            for &i in idx {
                let z = &zs[i];
                let mut hidden = vec![0.0; h];
                let mut u = model.theta[h * d + h + h];
                for j in 0..h {
                    let zj = w1[j * d..(j + 1) * d]
                        .iter()
                        .zip(z)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
                        + b1[j];
                    hidden[j] = zj.tanh();
                    u += w2[j] * hidden[j];
                }
                let c = (sigmoid(u) - ys[i]) * scale;
                for j in 0..h {
                    let dj = c * w2[j] * (1.0 - hidden[j] * hidden[j]);
                    for (g, zi) in grad[j * d..(j + 1) * d].iter_mut().zip(z) {
                        *g += dj * zi;
                    }
                    grad[h * d + j] += dj;
                    grad[h * d + h + j] += c * hidden[j];
                }
                grad[h * d + h + h] += c;
            }
        }
    }
    grad
}

/// Mean cross-entropy of the detector on a labeled set (diagnostics).
pub fn cross_entropy(model: &DetectorModel, samples: &[LabeledSample]) -> f64 {
    let eps = 1e-12;
    samples
        .iter()
        .map(|s| {
            let p = model.probability(&s.x, s.y).unwrap().clamp(eps, 1.0 - eps);
            if s.label == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / samples.len() as f64
}

// --- metric harness ----------------------------------------------------------

/// Binary classification counts and derived scores, label 1 positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Precision/recall/F1 with the zero-division convention: a score whose
/// denominator is zero is defined as 0. F1 is computed as
/// 2 tp / (2 tp + fp + fn), which is exact for integer counts.
pub fn compute_metrics(predicted: &[u8], truth: &[u8]) -> Result<Metrics, DetectorError> {
    if predicted.len() != truth.len() {
        return Err(DetectorError::LengthMismatch(predicted.len(), truth.len()));
    }
    if predicted.is_empty() {
        return Err(DetectorError::Empty);
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut tn = 0usize;
    let mut fne = 0usize;
    for (&p, &t) in predicted.iter().zip(truth) {
        if p > 1 {
            return Err(DetectorError::BadLabel(p));
        }
        if t > 1 {
            return Err(DetectorError::BadLabel(t));
        }
        match (p, t) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 0) => tn += 1,
            (0, 1) => fne += 1,
            _ => unreachable!(),
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(Metrics {
        true_pos: tp,
        false_pos: fp,
        true_neg: tn,
        false_neg: fne,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fne),
        f1: ratio(2 * tp, 2 * tp + fp + fne),
        support: predicted.len(),
    })
}

/// Per-class metrics plus macro averages (classes weighted equally).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroMetrics {
    /// Metrics with label 1 as the positive class.
    pub class_malicious: Metrics,
    /// Metrics with label 0 as the positive class.
    pub class_benign: Metrics,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn compute_macro_metrics(predicted: &[u8], truth: &[u8]) -> Result<MacroMetrics, DetectorError> {
    let pos = compute_metrics(predicted, truth)?;
    let flip = |v: &[u8]| v.iter().map(|&l| 1 - l).collect::<Vec<u8>>();
    let neg = compute_metrics(&flip(predicted), &flip(truth))?;
    Ok(MacroMetrics {
        class_malicious: pos,
        class_benign: neg,
        precision: (pos.precision + neg.precision) / 2.0,
        recall: (pos.recall + neg.recall) / 2.0,
        f1: (pos.f1 + neg.f1) / 2.0,
    })
}

// --- persistence -------------------------------------------------------------

const DOC_HEADER: &str = "airshield-detector v1";

impl DetectorModel {
    pub fn to_document(&self) -> String {
        let fmt_vec =
            |vs: &[f64]| vs.iter().map(|v| fmt_sig17(*v)).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        out.push_str(DOC_HEADER);
        out.push('\n');
        out.push_str(&format!("kind: {}\n", self.kind.name()));
        out.push_str(&format!("hidden_width: {}\n", self.hidden_width));
        out.push_str(&format!("input_dim: {}\n", self.input_dim));
        out.push_str(&format!(
            "decision_threshold: {}\n",
            fmt_sig17(self.decision_threshold)
        ));
        out.push_str(&format!("mean: {}\n", fmt_vec(&self.norm_stats.mean)));
        out.push_str(&format!("std: {}\n", fmt_vec(&self.norm_stats.std)));
        out.push_str(&format!("theta: {}\n", fmt_vec(&self.theta)));
        match &self.featurizer {
            Featurizer::Plain => out.push_str("featurizer: plain\n"),
            Featurizer::Residual { regressor, scales } => {
                out.push_str("featurizer: residual\n");
                out.push_str(&format!("scales: {}\n", fmt_vec(scales)));
                out.push_str("regressor-begin\n");
                out.push_str(&regressor.to_document());
                out.push_str("regressor-end\n");
            }
        }
        out
    }

    pub fn from_document(doc: &str) -> Result<Self, DetectorError> {
        let bad = |msg: String| DetectorError::Document(msg);
        let mut lines = doc.lines().peekable();
        let header = lines.next().unwrap_or_default();
        if header.trim() != DOC_HEADER {
            return Err(bad(format!("unsupported header `{header}`")));
        }
        let mut kind = None;
        let mut hidden_width = 0usize;
        let mut input_dim = 0usize;
        let mut threshold = 0.5f64;
        let mut mean = Vec::new();
        let mut std = Vec::new();
        let mut theta = Vec::new();
        let mut featurizer = None;
        let mut scales = Vec::new();
        let parse_vec = |s: &str| -> Result<Vec<f64>, DetectorError> {
            s.split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| DetectorError::Document(format!("bad float `{t}`")))
                })
                .collect()
        };
        while let Some(line) = lines.next() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line == "regressor-begin" {
                let mut sub = String::new();
                for inner in lines.by_ref() {
                    if inner.trim() == "regressor-end" {
                        break;
                    }
                    sub.push_str(inner);
                    sub.push('\n');
                }
                let regressor = RegressionModel::from_document(&sub)?;
                featurizer = Some(Featurizer::Residual {
                    regressor,
                    scales: Vec::new(),
                });
                continue;
            }
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| DetectorError::Document(format!("bad line `{line}`")))?;
            let value = value.trim();
            match key.trim() {
                "kind" => {
                    kind = Some(
                        DetectorKind::parse(value)
                            .ok_or_else(|| bad(format!("unknown kind `{value}`")))?,
                    )
                }
                "hidden_width" => {
                    hidden_width = value.parse().map_err(|_| bad("bad hidden_width".into()))?
                }
                "input_dim" => {
                    input_dim = value.parse().map_err(|_| bad("bad input_dim".into()))?
                }
                "decision_threshold" => {
                    threshold = value.parse().map_err(|_| bad("bad threshold".into()))?
                }
                "mean" => mean = parse_vec(value)?,
                "std" => std = parse_vec(value)?,
                "theta" => theta = parse_vec(value)?,
                "scales" => scales = parse_vec(value)?,
                "featurizer" => {
                    if value == "plain" {
                        featurizer = Some(Featurizer::Plain);
                    } else if value != "residual" {
                        return Err(bad(format!("unknown featurizer `{value}`")));
                    }
                }
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        let kind = kind.ok_or_else(|| bad("missing kind".into()))?;
        let mut featurizer = featurizer.ok_or_else(|| bad("missing featurizer".into()))?;
        if let Featurizer::Residual { scales: s, .. } = &mut featurizer {
            if scales.len() != input_dim {
                return Err(bad("scales do not match input_dim".into()));
            }
            *s = scales;
        }
        if mean.len() != std.len() || mean.len() != featurizer.output_dim(input_dim) {
            return Err(bad("norm stats do not match featurizer output".into()));
        }
        Ok(Self {
            kind,
            theta,
            norm_stats: NormStats { mean, std },
            decision_threshold: threshold,
            hidden_width,
            input_dim,
            featurizer,
        })
    }
}
