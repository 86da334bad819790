//! Path-loss regressor with analytic input gradients.
//!
//! Two families: `linear` (affine map over standardized inputs, fully
//! analyzable) and `mlp-1-hidden` (tanh hidden layer). Both expose the
//! gradient of the per-sample squared loss with respect to the inputs in
//! original feature space, chain-ruled through standardization — the quantity
//! the adversary's sign step consumes.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::rng::seeded_rng;

#[derive(Debug, Error)]
pub enum RegressorError {
    #[error("need at least 2 rows with distinct targets")]
    DegenerateTarget,
    #[error("feature `{0}` is constant in the training data")]
    ConstantFeature(String),
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dataset error: {0}")]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error("model document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    Linear,
    MlpOneHidden,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Linear => "linear",
            ModelFamily::MlpOneHidden => "mlp-1-hidden",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(ModelFamily::Linear),
            "mlp-1-hidden" => Some(ModelFamily::MlpOneHidden),
            _ => None,
        }
    }
}

/// Per-feature standardization statistics (population std, strictly positive).
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn fit(xs: &[Vec<f64>], names: &[String]) -> Result<Self, RegressorError> {
        let n = xs.len() as f64;
        let dim = names.len();
        let mut mean = vec![0.0; dim];
        for x in xs {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for x in xs {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        let mut std = vec![0.0; dim];
        for (i, s) in var.iter().enumerate() {
            let sd = (s / n).sqrt();
            if sd <= 0.0 || !sd.is_finite() {
                return Err(RegressorError::ConstantFeature(names[i].clone()));
            }
            std[i] = sd;
        }
        Ok(Self { mean, std })
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn destandardize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressorHyper {
    pub family: ModelFamily,
    pub learning_rate: f64,
    pub epochs: usize,
    /// 0 means full-batch gradient descent.
    #[serde(default)]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_hidden_width")]
    pub hidden_width: usize,
}

fn default_hidden_width() -> usize {
    16
}

impl Default for RegressorHyper {
    fn default() -> Self {
        Self {
            family: ModelFamily::Linear,
            learning_rate: 0.1,
            epochs: 300,
            batch_size: 0,
            seed: 0,
            hidden_width: 16,
        }
    }
}

/// Fitted regressor: parameter vector, standardization stats, feature order.
///
/// Linear parameter layout: `[w_0..w_{d-1}, b]`.
/// MLP layout: `[W1 (h x d, row-major), b1 (h), w2 (h), b2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    pub family: ModelFamily,
    pub theta: Vec<f64>,
    pub norm_stats: NormStats,
    pub feature_order: Vec<String>,
    pub hidden_width: usize,
}

impl RegressionModel {
    pub fn dim(&self) -> usize {
        self.feature_order.len()
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), RegressorError> {
        if x.len() != self.dim() {
            return Err(RegressorError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Prediction for one input in original feature units.
    pub fn predict(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let z = self.norm_stats.standardize(x);
        self.forward_standardized(&z)
    }

    /// Shape-checked prediction.
    pub fn try_predict(&self, x: &[f64]) -> Result<f64, RegressorError> {
        self.check_dim(x)?;
        Ok(self.predict(x))
    }

    fn forward_standardized(&self, z: &[f64]) -> f64 {
        let d = self.dim();
        match self.family {
            ModelFamily::Linear => {
                let w = &self.theta[..d];
                let b = self.theta[d];
                w.iter().zip(z).map(|(wi, zi)| wi * zi).sum::<f64>() + b
            }
            ModelFamily::MlpOneHidden => {
                let h = self.hidden_width;
                let (w1, rest) = self.theta.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(h);
                let mut out = b2[0];
                for j in 0..h {
                    let zj = w1[j * d..(j + 1) * d]
                        .iter()
                        .zip(z)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
                        + b1[j];
                    out += w2[j] * zj.tanh();
                }
                out
            }
        }
    }

    /// Per-sample squared loss J = (predict(x) - y)^2.
    pub fn loss(&self, x: &[f64], y: f64) -> f64 {
        let r = self.predict(x) - y;
        r * r
    }

    /// Gradient of the prediction with respect to the standardized input.
    fn prediction_grad_standardized(&self, z: &[f64]) -> Vec<f64> {
        let d = self.dim();
        match self.family {
            ModelFamily::Linear => self.theta[..d].to_vec(),
            ModelFamily::MlpOneHidden => {
                let h = self.hidden_width;
                let (w1, rest) = self.theta.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, _) = rest.split_at(h);
                let mut grad = vec![0.0; d];
                for j in 0..h {
                    let row = &w1[j * d..(j + 1) * d];
                    let zj = row.iter().zip(z).map(|(w, v)| w * v).sum::<f64>() + b1[j];
                    let t = zj.tanh();
                    let factor = w2[j] * (1.0 - t * t);
                    for (g, w) in grad.iter_mut().zip(row) {
                        *g += factor * w;
                    }
                }
                grad
            }
        }
    }

    /// Analytic gradient of J with respect to the input in ORIGINAL feature
    /// space: dJ/dx_i = 2 (f - y) df/dz_i / sigma_i.
    pub fn grad_input(&self, x: &[f64], y: f64) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim());
        let z = self.norm_stats.standardize(x);
        let f = self.forward_standardized(&z);
        let scale = 2.0 * (f - y);
        self.prediction_grad_standardized(&z)
            .iter()
            .zip(&self.norm_stats.std)
            .map(|(g, s)| scale * g / s)
            .collect()
    }

    /// Gradient of J with respect to the STANDARDIZED input.
    pub fn grad_input_standardized(&self, x: &[f64], y: f64) -> Vec<f64> {
        let z = self.norm_stats.standardize(x);
        let f = self.forward_standardized(&z);
        let scale = 2.0 * (f - y);
        self.prediction_grad_standardized(&z)
            .iter()
            .map(|g| scale * g)
            .collect()
    }
}

/// Regression quality on a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionMetrics {
    pub mse: f64,
    pub r_squared: f64,
}

/// Mean squared error and coefficient of determination.
pub fn evaluate_regression(
    model: &RegressionModel,
    data: &Dataset,
) -> Result<RegressionMetrics, RegressorError> {
    if data.len() < 2 {
        return Err(RegressorError::DegenerateTarget);
    }
    let n = data.len() as f64;
    let y_mean = data.ys.iter().sum::<f64>() / n;
    let ss_tot: f64 = data.ys.iter().map(|y| (y - y_mean) * (y - y_mean)).sum();
    if ss_tot == 0.0 {
        return Err(RegressorError::DegenerateTarget);
    }
    let ss_res: f64 = data
        .xs
        .iter()
        .zip(&data.ys)
        .map(|(x, y)| {
            let r = model.predict(x) - y;
            r * r
        })
        .sum();
    Ok(RegressionMetrics {
        mse: ss_res / n,
        r_squared: 1.0 - ss_res / ss_tot,
    })
}

fn validate_for_fit(data: &Dataset) -> Result<(), RegressorError> {
    data.validate()?;
    if data.len() < 2 {
        return Err(RegressorError::DegenerateTarget);
    }
    let first = data.ys[0];
    if data.ys.iter().all(|y| *y == first) {
        return Err(RegressorError::DegenerateTarget);
    }
    Ok(())
}

/// Fits a regressor by (mini-batch) gradient descent on the MSE.
///
/// Deterministic given `hyper.seed`: batch order and MLP initialization are
/// the only random elements. `batch_size = 0` runs full-batch descent.
pub fn fit_regressor(data: &Dataset, hyper: &RegressorHyper) -> Result<RegressionModel, RegressorError> {
    validate_for_fit(data)?;
    let d = data.dim();
    let norm_stats = NormStats::fit(&data.xs, &data.feature_names)?;
    let zs: Vec<Vec<f64>> = data.xs.iter().map(|x| norm_stats.standardize(x)).collect();

    let h = hyper.hidden_width;
    let theta_len = match hyper.family {
        ModelFamily::Linear => d + 1,
        ModelFamily::MlpOneHidden => h * d + h + h + 1,
    };
    let mut model = RegressionModel {
        family: hyper.family,
        theta: vec![0.0; theta_len],
        norm_stats,
        feature_order: data.feature_names.clone(),
        hidden_width: match hyper.family {
            ModelFamily::Linear => 0,
            ModelFamily::MlpOneHidden => h,
        },
    };

    let mut rng = seeded_rng(hyper.seed);
    if hyper.family == ModelFamily::MlpOneHidden {
        // Hidden weights uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); output
        // layer fan_in is the hidden width.
        let bound_in = 1.0 / (d as f64).sqrt();
        for v in model.theta[..h * d + h].iter_mut() {
            *v = rng.random_range(-bound_in..bound_in);
        }
        let bound_out = 1.0 / (h as f64).sqrt();
        for v in model.theta[h * d + h..h * d + h + h].iter_mut() {
            *v = rng.random_range(-bound_out..bound_out);
        }
    }

    let n = data.len();
    let batch = if hyper.batch_size == 0 || hyper.batch_size > n {
        n
    } else {
        hyper.batch_size
    };
    let mut order: Vec<usize> = (0..n).collect();

    for _ in 0..hyper.epochs {
        if batch < n {
            shuffle(&mut order, &mut rng);
        }
        for chunk in order.chunks(batch) {
            let grad = batch_gradient(&model, &zs, &data.ys, chunk);
            for (t, g) in model.theta.iter_mut().zip(&grad) {
                *t -= hyper.learning_rate * g;
            }
        }
    }
    Ok(model)
}

fn shuffle<R: Rng>(order: &mut [usize], rng: &mut R) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

/// Gradient of the batch-mean squared loss with respect to the parameters.
fn batch_gradient(
    model: &RegressionModel,
    zs: &[Vec<f64>],
    ys: &[f64],
    idx: &[usize],
) -> Vec<f64> {
    let d = model.dim();
    let scale = 1.0 / idx.len() as f64;
    let mut grad = vec![0.0; model.theta.len()];
    match model.family {
        ModelFamily::Linear => {
            for &i in idx {
                let z = &zs[i];
                let r = model.forward_standardized(z) - ys[i];
                let c = 2.0 * r * scale;
                for (g, zi) in grad[..d].iter_mut().zip(z) {
                    *g += c * zi;
                }
                grad[d] += c;
            }
        }
        ModelFamily::MlpOneHidden => {
            let h = model.hidden_width;
            let (w1, rest) = model.theta.split_at(h * d);
            let (b1, rest) = rest.split_at(h);
            let (w2, _) = rest.split_at(h);
            for &i in idx {
                let z = &zs[i];
                let mut hidden = vec![0.0; h];
                let mut f = model.theta[h * d + h + h];
                for j in 0..h {
                    let zj = w1[j * d..(j + 1) * d]
                        .iter()
                        .zip(z)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
                        + b1[j];
                    hidden[j] = zj.tanh();
                    f += w2[j] * hidden[j];
                }
                let c = 2.0 * (f - ys[i]) * scale;
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

// --- persistence -----------------------------------------------------------

const DOC_HEADER: &str = "airshield-regressor v1";

/// 17-significant-digit decimal rendering; round-trips f64 exactly.
pub fn fmt_sig17(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_vec(vs: &[f64]) -> String {
    vs.iter().map(|v| fmt_sig17(*v)).collect::<Vec<_>>().join(" ")
}

fn parse_vec(s: &str) -> Result<Vec<f64>, RegressorError> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| RegressorError::Document(format!("bad float `{t}`")))
        })
        .collect()
}

impl RegressionModel {
    /// Serializes the model as a versioned, self-describing text document.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        out.push_str(DOC_HEADER);
        out.push('\n');
        out.push_str(&format!("family: {}\n", self.family.name()));
        out.push_str(&format!("hidden_width: {}\n", self.hidden_width));
        out.push_str(&format!("features: {}\n", self.feature_order.join(",")));
        out.push_str(&format!("mean: {}\n", fmt_vec(&self.norm_stats.mean)));
        out.push_str(&format!("std: {}\n", fmt_vec(&self.norm_stats.std)));
        out.push_str(&format!("theta: {}\n", fmt_vec(&self.theta)));
        out
    }

    pub fn from_document(doc: &str) -> Result<Self, RegressorError> {
        let mut lines = doc.lines();
        let header = lines.next().unwrap_or_default();
        if header.trim() != DOC_HEADER {
            return Err(RegressorError::Document(format!(
                "unsupported header `{header}`"
            )));
        }
        let mut family = None;
        let mut hidden_width = 0usize;
        let mut features = Vec::new();
        let mut mean = Vec::new();
        let mut std = Vec::new();
        let mut theta = Vec::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| RegressorError::Document(format!("bad line `{line}`")))?;
            let value = value.trim();
            match key.trim() {
                "family" => {
                    family = Some(ModelFamily::parse(value).ok_or_else(|| {
                        RegressorError::Document(format!("unknown family `{value}`"))
                    })?)
                }
                "hidden_width" => {
                    hidden_width = value
                        .parse()
                        .map_err(|_| RegressorError::Document("bad hidden_width".into()))?
                }
                "features" => {
                    features = value.split(',').map(|s| s.trim().to_string()).collect()
                }
                "mean" => mean = parse_vec(value)?,
                "std" => std = parse_vec(value)?,
                "theta" => theta = parse_vec(value)?,
                other => {
                    return Err(RegressorError::Document(format!("unknown key `{other}`")))
                }
            }
        }
        let family =
            family.ok_or_else(|| RegressorError::Document("missing family".into()))?;
        let d = features.len();
        if mean.len() != d || std.len() != d {
            return Err(RegressorError::Document(
                "norm stats do not match feature count".into(),
            ));
        }
        if std.iter().any(|s| *s <= 0.0) {
            return Err(RegressorError::Document("non-positive std".into()));
        }
        let expected_theta = match family {
            ModelFamily::Linear => d + 1,
            ModelFamily::MlpOneHidden => hidden_width * d + 2 * hidden_width + 1,
        };
        if theta.len() != expected_theta {
            return Err(RegressorError::Document(format!(
                "theta length {} does not match family/width (expected {expected_theta})",
                theta.len()
            )));
        }
        Ok(Self {
            family,
            theta,
            norm_stats: NormStats { mean, std },
            feature_order: features,
            hidden_width,
        })
    }
}
