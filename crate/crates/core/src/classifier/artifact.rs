use std::path::{Path, PathBuf};

use candle_core::Device;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::{ClassifierConfig, SwinClassifier};
use crate::catalog::ClassCatalog;
use crate::error::{Error, IoContext, Result};
use crate::fingerprint::sha256_hex;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const WEIGHTS_FILE: &str = "model.safetensors";
pub const CONFIG_FILE: &str = "config.json";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerInfo {
    pub name: String,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

/// `config.json` of a model artifact directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFingerprint {
    pub code_version: String,
    pub catalog: ClassCatalog,
    pub catalog_hash: String,
    pub dataset_fingerprint: String,
    pub config: ClassifierConfig,
    pub seed: u64,
    pub optimizer: OptimizerInfo,
    pub backbone_checkpoint: Option<String>,
    pub weights_sha256: String,
}

impl ModelFingerprint {
    pub fn id(&self) -> String {
        crate::fingerprint::json_fingerprint(self)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(CONFIG_FILE);
        std::fs::write(&path, serde_json::to_vec_pretty(self)?).at(&path)
    }
}

pub struct LoadedModel {
    pub dir: PathBuf,
    pub fingerprint: ModelFingerprint,
    pub classifier: SwinClassifier,
}

impl LoadedModel {
    pub fn catalog(&self) -> &ClassCatalog {
        &self.fingerprint.catalog
    }
}

/// Load a trained artifact directory for inference, verifying the weights
/// against the recorded digest.
pub fn load_model(dir: &Path) -> Result<LoadedModel> {
    let cfg_path = dir.join(CONFIG_FILE);
    let text = std::fs::read(&cfg_path).at(&cfg_path)?;
    let fingerprint: ModelFingerprint = serde_json::from_slice(&text)?;
    let weights = dir.join(WEIGHTS_FILE);
    let bytes = std::fs::read(&weights).at(&weights)?;
    if sha256_hex(&bytes) != fingerprint.weights_sha256 {
        return Err(Error::CheckpointMismatch(format!(
            "{} does not match the digest in {}",
            weights.display(),
            cfg_path.display()
        )));
    }
    let params = ParamStore::frozen(&weights, &Device::Cpu)?;
    let classifier = SwinClassifier::new(
        &fingerprint.config.backbone,
        fingerprint.catalog.len(),
        &params,
    )?;
    Ok(LoadedModel {
        dir: dir.to_path_buf(),
        fingerprint,
        classifier,
    })
}
