//! Gradient-weighted class activation maps at the classifier's final
//! normalization layer, and point-prompt selection from them.

use std::path::Path;

use candle_core::{Device, IndexOp, Var};
use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::classifier::{preprocess, ImageClassifier};
use crate::error::{Error, IoContext, Result};
use crate::imageops::resize_bilinear;
use crate::ClassId;

/// Activation map at image resolution, max-normalised into [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ClassActivationMap {
    pub class_id: ClassId,
    pub width: u32,
    pub height: u32,
    /// Row-major, `width * height` values.
    pub grid: Vec<f32>,
    /// Maximum before normalisation.
    pub raw_peak: f32,
}

impl ClassActivationMap {
    /// Build from unnormalised, non-negative activations at image resolution.
    pub fn from_activations(class_id: ClassId, width: u32, height: u32, mut grid: Vec<f32>) -> Result<Self> {
        if grid.len() != width as usize * height as usize {
            return Err(Error::contract("activation grid does not match its dimensions"));
        }
        let raw_peak = grid.iter().copied().fold(0f32, f32::max);
        if raw_peak > 0.0 {
            // x / x == 1 exactly, so the peak lands on 1.0.
            for v in &mut grid {
                *v = (*v / raw_peak).clamp(0.0, 1.0);
            }
        } else {
            grid.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(Self {
            class_id,
            width,
            height,
            grid,
            raw_peak,
        })
    }

    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.grid[y as usize * self.width as usize + x as usize]
    }

    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            image::Luma([(self.get(x, y) * 255.0).round() as u8])
        })
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        self.to_gray_image().save(path)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPrompt {
    pub class_id: ClassId,
    pub x: u32,
    pub y: u32,
    pub activation: f32,
}

/// Global maximum of the map; ties go to the smallest row, then column.
pub fn select_prompt(cam: &ClassActivationMap) -> Result<PointPrompt> {
    let mut best: Option<(usize, f32)> = None;
    for (i, &v) in cam.grid.iter().enumerate() {
        if v > best.map_or(0.0, |b| b.1) {
            best = Some((i, v));
        }
    }
    let (i, activation) = best.ok_or(Error::NoActivation { class_id: cam.class_id })?;
    let w = cam.width as usize;
    Ok(PointPrompt {
        class_id: cam.class_id,
        x: (i % w) as u32,
        y: (i / w) as u32,
        activation,
    })
}

/// Token-grid shape for `tokens` laid out row-major over an image with
/// aspect `width / height`: the factorisation closest to that aspect.
pub fn infer_token_grid(tokens: usize, aspect: f64) -> Option<(usize, usize)> {
    (1..=tokens)
        .filter(|h| tokens % h == 0)
        .map(|h| (h, tokens / h))
        .min_by(|a, b| {
            let da = ((a.1 as f64 / a.0 as f64).ln() - aspect.ln()).abs();
            let db = ((b.1 as f64 / b.0 as f64).ln() - aspect.ln()).abs();
            da.total_cmp(&db)
        })
}

/// Activation maps for several classes of one image from a single forward
/// pass through the backbone.
pub fn compute_cams(model: &dyn ImageClassifier, pixels: &RgbImage, classes: &[ClassId]) -> Result<Vec<ClassActivationMap>> {
    let hook = model.gradient_hook().ok_or(Error::NoGradientAccess)?;
    if let Some(&bad) = classes.iter().find(|&&c| c as usize >= model.num_classes()) {
        return Err(Error::UnknownClassId {
            id: bad as u32,
            context: format!("model has {} outputs", model.num_classes()),
        });
    }
    let res = model.input_resolution();
    let x = preprocess(pixels, res, &Device::Cpu)?;
    let features = hook.features(&x)?.detach();
    let (gh, gw, channels) = match features.dims() {
        &[1, h, w, c] => (h, w, c),
        &[1, t, c] => {
            let aspect = 1.0; // inputs are resized to a square
            let (h, w) = infer_token_grid(t, aspect)
                .ok_or_else(|| Error::contract("cannot lay out an empty token sequence"))?;
            (h, w, c)
        }
        other => return Err(Error::contract(format!("unexpected hook output shape {other:?}"))),
    };
    let features = features.reshape((1, gh, gw, channels))?;
    let hooked = Var::from_tensor(&features)?;
    let logits = hook.head(hooked.as_tensor())?;
    let (w, h) = pixels.dimensions();

    classes
        .iter()
        .map(|&class_id| {
            let score = logits.i((0, class_id as usize))?;
            let grads = score.backward()?;
            let token_cam = match grads.get(hooked.as_tensor()) {
                Some(g) => {
                    // channel weights = spatially averaged gradients
                    let weights = g.mean(1)?.mean(1)?.reshape((1, 1, 1, channels))?;
                    features
                        .broadcast_mul(&weights)?
                        .sum(3)?
                        .relu()?
                        .flatten_all()?
                        .to_vec1::<f32>()?
                }
                None => vec![0.0; gh * gw],
            };
            let upsampled = resize_bilinear(&token_cam, gw, gh, w as usize, h as usize);
            ClassActivationMap::from_activations(class_id, w, h, upsampled)
        })
        .collect()
}

pub fn compute_cam(model: &dyn ImageClassifier, pixels: &RgbImage, class_id: ClassId) -> Result<ClassActivationMap> {
    Ok(compute_cams(model, pixels, &[class_id])?.remove(0))
}

/// JSON sidecar written next to a dumped CAM image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CamSidecar {
    pub image_id: String,
    pub class_id: ClassId,
    pub width: u32,
    pub height: u32,
    pub raw_peak: f32,
    pub prompt: Option<PointPrompt>,
}

pub fn cam_file_stem(image_id: &str, class_id: ClassId) -> String {
    format!("{image_id}.{class_id}.cam")
}

/// Write `{image_id}.{class_id}.cam.png` plus its `.json` sidecar into `dir`.
pub fn dump_cam(dir: &Path, image_id: &str, cam: &ClassActivationMap, prompt: Option<&PointPrompt>) -> Result<()> {
    std::fs::create_dir_all(dir).at(dir)?;
    let stem = cam_file_stem(image_id, cam.class_id);
    cam.write_png(&dir.join(format!("{stem}.png")))?;
    let sidecar = CamSidecar {
        image_id: image_id.to_string(),
        class_id: cam.class_id,
        width: cam.width,
        height: cam.height,
        raw_peak: cam.raw_peak,
        prompt: prompt.copied(),
    };
    let path = dir.join(format!("{stem}.json"));
    std::fs::write(&path, serde_json::to_vec_pretty(&sidecar)?).at(&path)
}
