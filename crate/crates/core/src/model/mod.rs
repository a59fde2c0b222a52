//! Latent-state model with explicit robot-to-human dynamics and
//! reservoir-encoded histories.

pub mod checkpoint;
pub mod config;
pub mod network;
pub mod train;

pub use checkpoint::{load_model, read_model_manifest, save_model, ModelManifest};
pub use config::{DisabledDynamics, Flags, HistoryInput, ModelConfig};
pub use network::{HistoryFeatures, LossTerms, PhriModel, Prediction, StepInputs, StepNoise, StepSample};
pub use train::{
    encode_latents, encode_trajectory_latent, evaluate, read_curves_csv, train, write_curves_csv, EpochRecord,
    EvalReport, MseSummary, TrainOutcome, TrajectoryMse,
};
