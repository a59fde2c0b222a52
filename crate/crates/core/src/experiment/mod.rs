//! Reproducible runs behind the `phri` command-line tool.
//!
//! Every command takes a resolved [`RunConfig`], writes a frozen copy of it
//! next to its outputs, and emits plot-ready CSV or JSON. Numbers are written
//! with 17 significant digits so files round-trip exactly.

mod ablation;
mod commands;
mod config;

pub use ablation::{
    aggregate, cell_dir, cmd_ablate, report_csv, write_report, AblationReport, AblationRow, CellResult, Stats,
    CELLS_DIR, CELL_RESULTS_CSV, REPORT_CSV, REPORT_JSON, REPORT_MD, RESULT_FILE,
};
pub use commands::{
    cmd_eval, cmd_fft, cmd_generate, cmd_latent, cmd_train, collect_latents, load_dataset_for, CentroidDistance,
    LatentReport, LatentSet, MseJson, Silhouette, SpectrumSummary, TrainSummary, CHECKPOINT_DIR, CLUSTERS_FILE,
    CURVES_FILE, EVAL_FILE, EVAL_TRAJECTORIES_FILE, LATENTS_FILE, NOT_APPLICABLE, SPECTRUM_DRIVEN_FILE,
    SPECTRUM_FREE_FILE, SPECTRUM_SUMMARY_FILE,
};
pub use config::{AblationConfig, FftConfig, RunConfig, FROZEN_CONFIG_FILE};
