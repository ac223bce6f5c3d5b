//! A per-pixel linear classifier: logits are the spatial mean of `W·x + b`
//! over normalised pixels. It has no learned spatial context, so its
//! activation maps are exact colour-affinity maps. Useful as a fast,
//! deterministic stand-in for the transformer in demos and tests.

use candle_core::{Device, Tensor};

use super::{FeatureHook, ImageClassifier};
use crate::error::{Error, Result};
use crate::imageops::{IMAGENET_MEAN, IMAGENET_STD};

#[derive(Debug, Clone)]
pub struct LinearPixelClassifier {
    resolution: usize,
    /// `[3, N+1]`
    weights: Tensor,
    /// `[N+1]`
    bias: Tensor,
    num_classes: usize,
}

fn normalize(rgb: [u8; 3]) -> [f32; 3] {
    std::array::from_fn(|c| (rgb[c] as f32 / 255.0 - IMAGENET_MEAN[c]) / IMAGENET_STD[c])
}

impl LinearPixelClassifier {
    /// One weight row and bias per class, class id order.
    pub fn new(resolution: usize, rows: &[[f32; 3]], bias: &[f32]) -> Result<Self> {
        if rows.is_empty() || rows.len() != bias.len() || resolution == 0 {
            return Err(Error::contract(format!(
                "need matching non-empty weight rows and biases, got {} and {}",
                rows.len(),
                bias.len()
            )));
        }
        let n = rows.len();
        let flat: Vec<f32> = (0..3).flat_map(|c| rows.iter().map(move |r| r[c])).collect();
        Ok(Self {
            resolution,
            weights: Tensor::from_vec(flat, (3, n), &Device::Cpu)?,
            bias: Tensor::from_vec(bias.to_vec(), n, &Device::Cpu)?,
            num_classes: n,
        })
    }

    /// Class `i + 1` responds to `palette[i]` relative to `background`; the
    /// background class (id 0) gets a zero row. Every class receives the
    /// same `bias`.
    pub fn for_palette(resolution: usize, background: [u8; 3], palette: &[[u8; 3]], bias: f32) -> Result<Self> {
        let bg = normalize(background);
        let rows: Vec<[f32; 3]> = std::iter::once([0.0; 3])
            .chain(palette.iter().map(|&p| {
                let x = normalize(p);
                std::array::from_fn(|c| x[c] - bg[c])
            }))
            .collect();
        Self::new(resolution, &rows, &vec![bias; rows.len()])
    }
}

impl FeatureHook for LinearPixelClassifier {
    fn features(&self, pixels: &Tensor) -> Result<Tensor> {
        Ok(pixels.permute((0, 2, 3, 1))?.contiguous()?)
    }

    fn head(&self, features: &Tensor) -> Result<Tensor> {
        let pooled = features.mean(2)?.mean(1)?;
        Ok(pooled.matmul(&self.weights)?.broadcast_add(&self.bias)?)
    }
}

impl ImageClassifier for LinearPixelClassifier {
    fn input_resolution(&self) -> usize {
        self.resolution
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn logits(&self, pixels: &Tensor) -> Result<Tensor> {
        self.head(&self.features(pixels)?)
    }

    fn gradient_hook(&self) -> Option<&dyn FeatureHook> {
        Some(self)
    }
}
