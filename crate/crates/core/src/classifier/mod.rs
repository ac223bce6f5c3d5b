//! Multi-label image classifier: model interface, training and inference.

mod artifact;
mod linear;
mod loss;
pub mod params;
mod schedule;
pub mod swin;
mod train;

use candle_core::{Device, Tensor};
use image::RgbImage;
use serde::{Deserialize, Serialize};

pub use artifact::{load_model, LoadedModel, ModelFingerprint, OptimizerInfo, CODE_VERSION};
pub use linear::LinearPixelClassifier;
pub use loss::{bce_multilabel_loss, bce_with_logits, PROB_EPS};
pub use schedule::{lr_at, warmup_steps};
pub use swin::{SwinClassifier, SwinConfig};
pub use train::{train, EntrySource, LogRecord, SampleSource, TrainOutcome};

use crate::dataset::AugmentationConfig;
use crate::error::{Error, Result};
use crate::imageops::FloatImage;
use crate::ClassId;

/// Anything that maps a normalised `[B, 3, R, R]` batch to `[B, N+1]` logits.
pub trait ImageClassifier: Send + Sync {
    fn input_resolution(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn logits(&self, pixels: &Tensor) -> Result<Tensor>;

    /// Access to the final normalization layer, required for class
    /// activation maps. Models without it can classify but not localise.
    fn gradient_hook(&self) -> Option<&dyn FeatureHook> {
        None
    }
}

/// Split of a classifier at its final normalization layer.
pub trait FeatureHook {
    /// Token features after the last normalization layer, `[B, H', W', C]`
    /// in row-major token order.
    fn features(&self, pixels: &Tensor) -> Result<Tensor>;
    /// Classification head applied to those features: `[B, N+1]` logits.
    fn head(&self, features: &Tensor) -> Result<Tensor>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub input_resolution: usize,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub decision_threshold: f64,
    pub seed: u64,
    pub min_pixel_count: u64,
    /// Per-epoch checkpoints kept besides the final weights.
    pub keep_checkpoints: usize,
    pub backbone: SwinConfig,
    pub augmentation: AugmentationConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            input_resolution: 384,
            epochs: 50,
            warmup_epochs: 10,
            base_lr: 2e-4,
            weight_decay: 1e-4,
            batch_size: 64,
            decision_threshold: 0.5,
            seed: 0,
            min_pixel_count: crate::dataset::DEFAULT_MIN_PIXEL_COUNT,
            keep_checkpoints: 3,
            backbone: SwinConfig::large_384(),
            augmentation: AugmentationConfig::default(),
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.warmup_epochs >= self.epochs {
            return Err(Error::config(format!(
                "warmup_epochs ({}) must be smaller than epochs ({})",
                self.warmup_epochs, self.epochs
            )));
        }
        if !(self.base_lr > 0.0) {
            return Err(Error::config("base_lr must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        validate_threshold(self.decision_threshold)?;
        if self.backbone.img_size != self.input_resolution {
            return Err(Error::config(format!(
                "backbone expects {}² inputs but input_resolution is {}",
                self.backbone.img_size, self.input_resolution
            )));
        }
        if self.augmentation.crop_size != self.input_resolution {
            return Err(Error::config(format!(
                "augmentation crops to {} but input_resolution is {}",
                self.augmentation.crop_size, self.input_resolution
            )));
        }
        self.backbone.validate()?;
        self.augmentation.validate()
    }
}

pub fn validate_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("decision threshold {t} must lie strictly between 0 and 1")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub image_id: String,
    pub probabilities: Vec<f32>,
    /// Food classes at or above the threshold; never the background.
    pub predicted_classes: Vec<ClassId>,
}

/// Resize to the model resolution and normalise: `[1, 3, R, R]`.
pub fn preprocess(pixels: &RgbImage, resolution: usize, device: &Device) -> Result<Tensor> {
    let img = FloatImage::from_rgb(pixels).resize(resolution, resolution);
    Ok(Tensor::from_vec(img.normalized(), (1, 3, resolution, resolution), device)?)
}

pub fn sigmoid(z: f32) -> f32 {
    1.0 / (1.0 + (-z).exp())
}

/// Threshold sigmoid probabilities into a prediction.
pub fn prediction_from_logits(image_id: &str, logits: &[f32], threshold: f64, background_id: ClassId) -> Result<PredictionResult> {
    validate_threshold(threshold)?;
    let probabilities: Vec<f32> = logits.iter().map(|&z| sigmoid(z)).collect();
    let predicted_classes = probabilities
        .iter()
        .enumerate()
        .filter(|&(i, &p)| i != background_id as usize && p as f64 >= threshold)
        .map(|(i, _)| i as ClassId)
        .collect();
    Ok(PredictionResult {
        image_id: image_id.to_string(),
        probabilities,
        predicted_classes,
    })
}

pub fn predict(
    model: &dyn ImageClassifier,
    image_id: &str,
    pixels: &RgbImage,
    threshold: f64,
    background_id: ClassId,
) -> Result<PredictionResult> {
    validate_threshold(threshold)?;
    let x = preprocess(pixels, model.input_resolution(), &Device::Cpu)?;
    let logits = model.logits(&x)?.flatten_all()?.to_vec1::<f32>()?;
    prediction_from_logits(image_id, &logits, threshold, background_id)
}
