//! Core primitives for the AirShield pipeline: synthetic wireless telemetry,
//! FGSM data poisoning against a path-loss regressor, Shapley attribution,
//! benign/malicious detection, and the text codec that bridges records to an
//! LLM-facing prompt format.
//!
//! Hot loops (scene generation, poisoning, permutation sampling) run on rayon
//! when the default `parallel` feature is enabled. Sequential fallbacks are
//! always compiled and produce bit-identical results: per-record randomness is
//! drawn from counter-based streams keyed by `(seed, index)`.

pub mod adversary;
pub mod attribution;
pub mod dataset;
pub mod detector;
pub mod emulator;
pub mod features;
pub mod prompt_codec;
pub mod regressor;
pub mod rng;

pub use adversary::{AttackConfig, DegradationReport, LabeledSample, PerturbSpace};
pub use attribution::{Attribution, GlobalImportance};
pub use dataset::Dataset;
pub use detector::{Classification, DetectorKind, DetectorModel, Featurizer, Metrics};
pub use emulator::{ChannelRecord, LosState, SceneConfig};
pub use regressor::{ModelFamily, RegressionModel};
