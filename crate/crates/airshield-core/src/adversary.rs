//! FGSM sample synthesis and dataset poisoning.
//!
//! The sign step is additive: x' = x + eps * sign(grad_x J). In standardized
//! space the per-coordinate displacement is eps * sigma_i, in raw space eps.
//! sign(0) = 0, so zero-gradient coordinates are left untouched bit for bit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::regressor::{evaluate_regression, RegressionModel, RegressorError};
use crate::rng::{derive_seed, seeded_rng};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Error)]
pub enum AdversaryError {
    #[error("invalid attack config: {0}")]
    InvalidConfig(String),
    #[error("regressor error: {0}")]
    Regressor(#[from] RegressorError),
    #[error("degenerate evaluation set: {0}")]
    Degenerate(String),
}

/// Space in which the epsilon step is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbSpace {
    Standardized,
    Raw,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Perturbation magnitude. Interpreted per `space`.
    pub epsilon: f64,
    /// Fraction of rows to poison, in [0, 1].
    pub fract: f64,
    #[serde(default = "default_space")]
    pub space: PerturbSpace,
    /// Re-project perturbed features into physical ranges. Off by default:
    /// out-of-range artifacts are part of the attack's footprint.
    #[serde(default)]
    pub clamp_to_physical: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_space() -> PerturbSpace {
    PerturbSpace::Standardized
}

impl Default for AttackConfig {
    /// Default attack: eps = 0.1 in standardized units over 99% of the rows.
    /// The raw-unit space is available for fidelity runs where eps is meant
    /// in native feature units.
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            fract: 0.99,
            space: PerturbSpace::Standardized,
            clamp_to_physical: false,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AdversaryError> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(AdversaryError::InvalidConfig(
                "epsilon must be finite and >= 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.fract) {
            return Err(AdversaryError::InvalidConfig(
                "fract must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// One (possibly perturbed) row with its benign/malicious label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    /// Input features, possibly perturbed.
    pub x: Vec<f64>,
    /// Pathloss target. Never perturbed.
    pub y: f64,
    /// 0 = Benign, 1 = Malicious.
    pub label: u8,
    /// Row id in the source dataset.
    pub source_index: usize,
    /// Epsilon applied to this row (0 for benign rows).
    pub applied_epsilon: f64,
}

fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Physical range of a canonical feature, used by `clamp_to_physical`.
/// Features with unknown names are unbounded.
fn physical_range(name: &str) -> Option<(f64, f64)> {
    match name {
        "distance" => Some((0.0, f64::INFINITY)),
        "doa_phi" | "dod_phi" => Some((-180.0, 180.0_f64.next_down())),
        "doa_theta" | "dod_theta" => Some((0.0, 180.0)),
        "phase" => Some((0.0, 360.0_f64.next_down())),
        "power" => Some((0.0, f64::INFINITY)),
        "toa" => Some((0.0, f64::INFINITY)),
        "los" => Some((-1.0, 1.0)),
        _ => None,
    }
}

/// One FGSM step: x' = x + eps * scale_i * sign(grad_i).
///
/// Coordinates with zero gradient are returned bitwise unchanged, and
/// eps = 0 returns the input bitwise.
pub fn fgsm_perturb(
    model: &RegressionModel,
    x: &[f64],
    y: f64,
    epsilon: f64,
    space: PerturbSpace,
) -> Vec<f64> {
    if epsilon == 0.0 {
        return x.to_vec();
    }
    let grad = model.grad_input(x, y);
    x.iter()
        .enumerate()
        .map(|(i, xi)| {
            let s = sign0(grad[i]);
            if s == 0.0 {
                *xi
            } else {
                let scale = match space {
                    PerturbSpace::Standardized => model.norm_stats.std[i],
                    PerturbSpace::Raw => 1.0,
                };
                xi + epsilon * scale * s
            }
        })
        .collect()
}

fn clamp_row(x: &mut [f64], names: &[String]) {
    for (v, name) in x.iter_mut().zip(names) {
        if let Some((lo, hi)) = physical_range(name) {
            *v = v.clamp(lo, hi);
        }
    }
}

fn make_sample(
    data: &Dataset,
    model: &RegressionModel,
    cfg: &AttackConfig,
    poisoned: bool,
    i: usize,
) -> LabeledSample {
    if poisoned {
        let mut x = fgsm_perturb(model, &data.xs[i], data.ys[i], cfg.epsilon, cfg.space);
        if cfg.clamp_to_physical {
            clamp_row(&mut x, &data.feature_names);
        }
        LabeledSample {
            x,
            y: data.ys[i],
            label: 1,
            source_index: i,
            applied_epsilon: cfg.epsilon,
        }
    } else {
        LabeledSample {
            x: data.xs[i].clone(),
            y: data.ys[i],
            label: 0,
            source_index: i,
            applied_epsilon: 0.0,
        }
    }
}

fn poison_plan(cfg: &AttackConfig, n: usize) -> (Vec<bool>, Vec<usize>) {
    let k = (cfg.fract * n as f64).round() as usize;
    let mut selected = vec![false; n];
    let mut sel_rng = seeded_rng(derive_seed(cfg.seed, 0));
    for i in rand::seq::index::sample(&mut sel_rng, n, k) {
        selected[i] = true;
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = seeded_rng(derive_seed(cfg.seed, 1));
    for i in (1..n).rev() {
        let j = rand::Rng::random_range(&mut shuffle_rng, 0..=i);
        order.swap(i, j);
    }
    (selected, order)
}

/// Poisons exactly round(fract * N) rows, selected uniformly without
/// replacement under the seed; output order is a seeded shuffle of all rows.
pub fn poison_dataset(
    data: &Dataset,
    model: &RegressionModel,
    cfg: &AttackConfig,
) -> Result<Vec<LabeledSample>, AdversaryError> {
    cfg.validate()?;
    if model.dim() != data.dim() {
        return Err(AdversaryError::InvalidConfig(format!(
            "model expects {} features, data has {}",
            model.dim(),
            data.dim()
        )));
    }
    let (selected, order) = poison_plan(cfg, data.len());
    #[cfg(feature = "parallel")]
    let samples: Vec<LabeledSample> = order
        .par_iter()
        .map(|&i| make_sample(data, model, cfg, selected[i], i))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let samples: Vec<LabeledSample> = order
        .iter()
        .map(|&i| make_sample(data, model, cfg, selected[i], i))
        .collect();
    Ok(samples)
}

/// Sequential twin of [`poison_dataset`]; bit-identical output.
pub fn poison_dataset_seq(
    data: &Dataset,
    model: &RegressionModel,
    cfg: &AttackConfig,
) -> Result<Vec<LabeledSample>, AdversaryError> {
    cfg.validate()?;
    let (selected, order) = poison_plan(cfg, data.len());
    Ok(order
        .iter()
        .map(|&i| make_sample(data, model, cfg, selected[i], i))
        .collect())
}

/// Clean-vs-poisoned evaluation of a fixed model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationReport {
    pub mse_clean: f64,
    pub mse_poisoned: f64,
    pub delta_mse_pct: f64,
    pub r2_clean: f64,
    pub r2_poisoned: f64,
    pub delta_r2_pct: f64,
}

impl DegradationReport {
    /// Structured-text artifact form.
    pub fn to_text(&self) -> String {
        format!(
            "airshield-degradation v1\n\
             mse_clean: {}\n\
             mse_poisoned: {}\n\
             delta_mse_pct: {}\n\
             r2_clean: {}\n\
             r2_poisoned: {}\n\
             delta_r2_pct: {}\n",
            crate::dataset::fmt_sig9(self.mse_clean),
            crate::dataset::fmt_sig9(self.mse_poisoned),
            crate::dataset::fmt_sig9(self.delta_mse_pct),
            crate::dataset::fmt_sig9(self.r2_clean),
            crate::dataset::fmt_sig9(self.r2_poisoned),
            crate::dataset::fmt_sig9(self.delta_r2_pct),
        )
    }
}

fn delta_pct(before: f64, after: f64) -> f64 {
    100.0 * (after - before) / before.abs()
}

/// Evaluates the fixed model on the clean set and on the poisoned samples.
pub fn degradation_report(
    model: &RegressionModel,
    clean: &Dataset,
    poisoned: &[LabeledSample],
) -> Result<DegradationReport, AdversaryError> {
    if clean.is_empty() || poisoned.is_empty() {
        return Err(AdversaryError::Degenerate("empty evaluation set".into()));
    }
    let clean_metrics = evaluate_regression(model, clean)?;
    // Evaluate in source order so summation order matches the clean pass and
    // a zero-epsilon attack reports exactly zero deltas.
    let mut rows: Vec<&LabeledSample> = poisoned.iter().collect();
    rows.sort_by_key(|s| s.source_index);
    let poisoned_data = Dataset::new(
        clean.feature_names.clone(),
        rows.iter().map(|s| s.x.clone()).collect(),
        rows.iter().map(|s| s.y).collect(),
    );
    let poisoned_metrics = evaluate_regression(model, &poisoned_data)?;
    Ok(DegradationReport {
        mse_clean: clean_metrics.mse,
        mse_poisoned: poisoned_metrics.mse,
        delta_mse_pct: delta_pct(clean_metrics.mse, poisoned_metrics.mse),
        r2_clean: clean_metrics.r_squared,
        r2_poisoned: poisoned_metrics.r_squared,
        delta_r2_pct: delta_pct(clean_metrics.r_squared, poisoned_metrics.r_squared),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressor::{fit_regressor, ModelFamily, RegressorHyper};
    use rand::Rng;

    fn toy_fit(seed: u64, family: ModelFamily) -> (Dataset, RegressionModel) {
        let mut rng = seeded_rng(seed);
        let n = 400;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-4.0..4.0)).collect();
            let y = 2.0 * x[0] - x[1] + 0.5 * x[2] + rng.random_range(-0.5..0.5);
            xs.push(x);
            ys.push(y);
        }
        let data = Dataset::new(
            vec!["a".into(), "b".into(), "c".into()],
            xs,
            ys,
        );
        let hyper = RegressorHyper {
            family,
            learning_rate: if family == ModelFamily::Linear { 0.2 } else { 0.02 },
            epochs: 200,
            batch_size: 0,
            seed: 1,
            hidden_width: 8,
        };
        let model = fit_regressor(&data, &hyper).unwrap();
        (data, model)
    }

    #[test]
    fn epsilon_zero_is_bitwise_identity() {
        let (data, model) = toy_fit(1, ModelFamily::Linear);
        let x = &data.xs[0];
        let out = fgsm_perturb(&model, x, data.ys[0], 0.0, PerturbSpace::Standardized);
        assert!(x.iter().zip(&out).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn displacement_is_exactly_signed_epsilon_times_scale() {
        let (data, model) = toy_fit(2, ModelFamily::Linear);
        for space in [PerturbSpace::Standardized, PerturbSpace::Raw] {
            for (x, y) in data.xs.iter().zip(&data.ys).take(100) {
                let eps = 0.25;
                let out = fgsm_perturb(&model, x, *y, eps, space);
                let grad = model.grad_input(x, *y);
                for i in 0..x.len() {
                    let scale = match space {
                        PerturbSpace::Standardized => model.norm_stats.std[i],
                        PerturbSpace::Raw => 1.0,
                    };
                    let expected = if grad[i] > 0.0 {
                        x[i] + eps * scale
                    } else if grad[i] < 0.0 {
                        x[i] - eps * scale
                    } else {
                        x[i]
                    };
                    assert_eq!(out[i].to_bits(), expected.to_bits());
                }
            }
        }
    }

    #[test]
    fn zero_residual_row_is_unchanged() {
        let (data, model) = toy_fit(3, ModelFamily::Linear);
        let x = &data.xs[5];
        let y = model.predict(x);
        let out = fgsm_perturb(&model, x, y, 0.5, PerturbSpace::Standardized);
        assert_eq!(x, &out);
    }

    #[test]
    fn linear_loss_never_decreases() {
        let (data, model) = toy_fit(4, ModelFamily::Linear);
        for eps in [1e-10, 1e-3, 0.1, 1.0] {
            for (x, y) in data.xs.iter().zip(&data.ys).take(200) {
                let before = model.loss(x, *y);
                let x2 = fgsm_perturb(&model, x, *y, eps, PerturbSpace::Standardized);
                let after = model.loss(&x2, *y);
                assert!(after >= before, "eps={eps}: {after} < {before}");
            }
        }
    }

    #[test]
    fn mlp_loss_increases_in_first_order_regime() {
        let (data, model) = toy_fit(5, ModelFamily::MlpOneHidden);
        for (x, y) in data.xs.iter().zip(&data.ys).take(200) {
            if (model.predict(x) - y).abs() < 1e-3 {
                continue;
            }
            let before = model.loss(x, *y);
            let x2 = fgsm_perturb(&model, x, *y, 1e-3, PerturbSpace::Standardized);
            assert!(model.loss(&x2, *y) >= before);
        }
    }

    fn attack(seed: u64, fract: f64, epsilon: f64) -> AttackConfig {
        AttackConfig {
            epsilon,
            fract,
            space: PerturbSpace::Standardized,
            clamp_to_physical: false,
            seed,
        }
    }

    #[test]
    fn fract_zero_and_one() {
        let (data, model) = toy_fit(6, ModelFamily::Linear);
        let all_clean = poison_dataset(&data, &model, &attack(1, 0.0, 0.1)).unwrap();
        assert!(all_clean.iter().all(|s| s.label == 0 && s.applied_epsilon == 0.0));
        let mut sources: Vec<usize> = all_clean.iter().map(|s| s.source_index).collect();
        sources.sort_unstable();
        assert_eq!(sources, (0..data.len()).collect::<Vec<_>>());
        for s in &all_clean {
            assert_eq!(s.x, data.xs[s.source_index]);
        }

        let all_bad = poison_dataset(&data, &model, &attack(1, 1.0, 0.1)).unwrap();
        assert!(all_bad.iter().all(|s| s.label == 1 && s.applied_epsilon == 0.1));
    }

    #[test]
    fn poison_count_is_exact_and_seeded() {
        let mut rng = seeded_rng(77);
        let n = 1000;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let y = x[0] + x[1];
            xs.push(x);
            ys.push(y);
        }
        let data = Dataset::new(vec!["a".into(), "b".into()], xs, ys);
        let model = fit_regressor(
            &data,
            &RegressorHyper {
                learning_rate: 0.3,
                epochs: 100,
                ..Default::default()
            },
        )
        .unwrap();

        let cfg = attack(21, 0.5, 0.2);
        let a = poison_dataset(&data, &model, &cfg).unwrap();
        assert_eq!(a.iter().filter(|s| s.label == 1).count(), 500);
        assert_eq!(a.iter().filter(|s| s.label == 0).count(), 500);

        let b = poison_dataset(&data, &model, &cfg).unwrap();
        assert_eq!(a, b);

        let mut idx_a: Vec<usize> =
            a.iter().filter(|s| s.label == 1).map(|s| s.source_index).collect();
        let c = poison_dataset(&data, &model, &attack(22, 0.5, 0.2)).unwrap();
        let mut idx_c: Vec<usize> =
            c.iter().filter(|s| s.label == 1).map(|s| s.source_index).collect();
        idx_a.sort_unstable();
        idx_c.sort_unstable();
        assert_ne!(idx_a, idx_c);
    }

    #[test]
    fn parallel_poisoning_matches_sequential() {
        let (data, model) = toy_fit(8, ModelFamily::Linear);
        let cfg = attack(5, 0.7, 0.3);
        let par = poison_dataset(&data, &model, &cfg).unwrap();
        let seq = poison_dataset_seq(&data, &model, &cfg).unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn rejects_bad_fract() {
        let (data, model) = toy_fit(9, ModelFamily::Linear);
        assert!(poison_dataset(&data, &model, &attack(0, 1.5, 0.1)).is_err());
        assert!(poison_dataset(&data, &model, &attack(0, -0.1, 0.1)).is_err());
    }

    #[test]
    fn clamping_respects_physical_ranges() {
        let mut rng = seeded_rng(15);
        let n = 200;
        let names: Vec<String> = vec!["phase".into(), "power".into(), "los".into()];
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x = vec![
                rng.random_range(0.0..360.0),
                rng.random_range(0.0..1.0e-3),
                [-1.0, 0.0, 1.0][rng.random_range(0..3)],
            ];
            let y = x[0] * 0.01 + x[1] * 800.0 + x[2];
            xs.push(x);
            ys.push(y);
        }
        let data = Dataset::new(names, xs, ys);
        let model = fit_regressor(
            &data,
            &RegressorHyper {
                learning_rate: 0.2,
                epochs: 200,
                ..Default::default()
            },
        )
        .unwrap();
        let cfg = AttackConfig {
            epsilon: 2.0,
            fract: 1.0,
            space: PerturbSpace::Standardized,
            clamp_to_physical: true,
            seed: 3,
        };
        for s in poison_dataset(&data, &model, &cfg).unwrap() {
            assert!((0.0..360.0).contains(&s.x[0]));
            assert!(s.x[1] >= 0.0);
            assert!((-1.0..=1.0).contains(&s.x[2]));
        }
    }

    #[test]
    fn degradation_zero_epsilon_is_flat() {
        let (data, model) = toy_fit(10, ModelFamily::Linear);
        let poisoned = poison_dataset(&data, &model, &attack(2, 0.99, 0.0)).unwrap();
        let report = degradation_report(&model, &data, &poisoned).unwrap();
        assert_eq!(report.delta_mse_pct, 0.0);
        assert_eq!(report.delta_r2_pct, 0.0);
    }

    #[test]
    fn degradation_is_positive_under_attack() {
        let (data, model) = toy_fit(11, ModelFamily::Linear);
        let poisoned = poison_dataset(&data, &model, &attack(2, 0.99, 0.1)).unwrap();
        let report = degradation_report(&model, &data, &poisoned).unwrap();
        assert!(report.delta_mse_pct > 0.0);
        assert!(report.mse_poisoned >= report.mse_clean);
        assert!(report.delta_r2_pct < 0.0);
    }
}
