//! Model checkpoints: a directory holding network parameters with optimizer
//! state, both reservoir snapshots, and a readable `model.json`.

use super::config::ModelConfig;
use super::network::PhriModel;
use crate::crc::ReservoirParams;
use crate::error::{PhriError, Result};
use crate::nn::checkpoint::{load_checkpoint, restore_into, save_checkpoint};
use crate::nn::AmsGrad;
use crate::sim::Standardization;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MODEL_FILE: &str = "model.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const RESERVOIR_S_FILE: &str = "reservoir_s.bin";
pub const RESERVOIR_A_FILE: &str = "reservoir_a.bin";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u32,
    pub config: ModelConfig,
    pub standardization: Standardization,
    pub epochs_trained: usize,
    pub num_parameters: usize,
    pub tensors: Vec<TensorInfo>,
}

pub fn save_model(dir: &Path, model: &PhriModel, opt: Option<&AmsGrad>, epochs_trained: usize) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| PhriError::io(dir, e))?;
    save_checkpoint(&dir.join(PARAMS_FILE), &model.params, opt)?;
    model.res_s.save(&dir.join(RESERVOIR_S_FILE))?;
    model.res_a.save(&dir.join(RESERVOIR_A_FILE))?;
    let manifest = ModelManifest {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        standardization: model.stats.clone(),
        epochs_trained,
        num_parameters: model.params.num_scalars(),
        tensors: model
            .params
            .names()
            .iter()
            .zip(model.params.values())
            .map(|(n, v)| TensorInfo {
                name: n.clone(),
                shape: [v.nrows(), v.ncols()],
            })
            .collect(),
    };
    let path = dir.join(MODEL_FILE);
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| PhriError::format(&path, format!("cannot serialize: {e}")))?;
    std::fs::write(&path, text + "\n").map_err(|e| PhriError::io(&path, e))
}

pub fn read_model_manifest(dir: &Path) -> Result<ModelManifest> {
    let path = dir.join(MODEL_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| PhriError::io(&path, e))?;
    let m: ModelManifest = serde_json::from_str(&text).map_err(|e| PhriError::format(&path, e.to_string()))?;
    if m.format_version != FORMAT_VERSION {
        return Err(PhriError::format(&path, format!("unsupported format version {}", m.format_version)));
    }
    Ok(m)
}

/// Loads a checkpoint directory; returns the model, optimizer state if
/// present, and the number of epochs it was trained for.
pub fn load_model(dir: &Path) -> Result<(PhriModel, Option<AmsGrad>, usize)> {
    let manifest = read_model_manifest(dir)?;
    let mut model = PhriModel::new(manifest.config.clone(), manifest.standardization.clone())?;
    let (params, opt) = load_checkpoint(&dir.join(PARAMS_FILE))?;
    restore_into(&mut model.params, &params)?;
    let res_s = ReservoirParams::load(&dir.join(RESERVOIR_S_FILE))?;
    let res_a = ReservoirParams::load(&dir.join(RESERVOIR_A_FILE))?;
    if res_s.n_neurons() != model.config.n_rc || res_s.input_dim() != model.config.latent_dim {
        return Err(PhriError::format(dir.join(RESERVOIR_S_FILE), "reservoir shape does not match config"));
    }
    if res_a.n_neurons() != model.config.n_rc || res_a.input_dim() != model.config.action_dim {
        return Err(PhriError::format(dir.join(RESERVOIR_A_FILE), "reservoir shape does not match config"));
    }
    model.res_s = res_s;
    model.res_a = res_a;
    Ok((model, opt, manifest.epochs_trained))
}
