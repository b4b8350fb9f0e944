use std::path::{Path, PathBuf};

use candle_core::{DType, Device};
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::fsutil::{read_json, write_json_pretty};
use crate::losses::LossReport;
use crate::nets::{BundleSpec, ModelBundle};
use crate::seeding::stream_rng;

/// JSON sidecar stored next to each weights file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    /// Input modality ordering; condition bit i refers to `modalities[i]`.
    pub modalities: Vec<String>,
    pub target: String,
    pub canonical_size: usize,
    pub models: BundleSpec,
    pub config: TrainConfig,
    /// Mean losses of the epoch that produced these weights.
    pub summary: Option<LossReport>,
}

pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub models: ModelBundle,
}

/// `<dir>/epoch_NNN.safetensors`.
pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch:03}.safetensors"))
}

pub fn sidecar_path(weights: &Path) -> PathBuf {
    weights.with_extension("json")
}

pub fn save_checkpoint(models: &ModelBundle, meta: &CheckpointMeta, weights: &Path) -> Result<()> {
    models.save(weights)?;
    write_json_pretty(&sidecar_path(weights), meta)
}

/// Loads a checkpoint given either its weights file or its sidecar.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let weights = path.with_extension("safetensors");
    if !weights.is_file() {
        return Err(Error::Argument(format!("no checkpoint weights at {}", weights.display())));
    }
    let meta: CheckpointMeta = read_json(&sidecar_path(&weights))?;
    if meta.models.g1.cond_channels != meta.modalities.len() {
        return Err(Error::Format(format!(
            "checkpoint lists {} modalities but its generator takes {} condition planes",
            meta.modalities.len(),
            meta.models.g1.cond_channels
        )));
    }
    let models = ModelBundle::new(&meta.models, DType::F32, &Device::Cpu, &mut stream_rng(0, &[]))?;
    models.load_weights(&weights)?;
    Ok(Checkpoint { meta, models })
}
