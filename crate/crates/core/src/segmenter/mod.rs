//! Prompting a promptable segmenter with CAM points over the original or a
//! smoothed copy of the image.

mod backend;
pub mod blur;
mod manifest;

use std::fmt;
use std::str::FromStr;

use image::RgbImage;
use serde::{Deserialize, Serialize};

pub use backend::{
    CommandBackend, CommandMask, CommandReply, FloodFillBackend, GroundTruthBackend, PromptableSegmenter, Proposal,
    ProposalRequest, StaticBackend,
};
pub use blur::{gaussian_blur, gaussian_blur_rgb};
pub use manifest::{ManifestMask, ProposalManifest, PromptPoint};

use crate::cam::PointPrompt;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::ClassId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    Original,
    Smoothed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskStrategy {
    Single,
    Multi,
}

macro_rules! lowercase_enum_str {
    ($ty:ty { $($variant:ident => $name:literal),+ }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(Self::$variant),)+
                    other => Err(Error::config(format!("unknown {} `{other}`", stringify!($ty)))),
                }
            }
        }
    };
}

lowercase_enum_str!(InputMode { Original => "original", Smoothed => "smoothed" });
lowercase_enum_str!(MaskStrategy { Single => "single", Multi => "multi" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    pub input_mode: InputMode,
    pub blur_sigma: f64,
    pub mask_strategy: MaskStrategy,
    pub k_proposals: usize,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            input_mode: InputMode::Original,
            blur_sigma: 10.0,
            mask_strategy: MaskStrategy::Multi,
            k_proposals: 3,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_mode == InputMode::Smoothed && !(self.blur_sigma > 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::config(format!("blur_sigma {} must be positive", self.blur_sigma)));
        }
        if self.k_proposals == 0 {
            return Err(Error::config("k_proposals must be at least 1"));
        }
        Ok(())
    }
}

/// Candidate masks for one (image, class) prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskProposalSet {
    pub image_id: String,
    pub class_id: ClassId,
    pub prompt: PointPrompt,
    pub masks: Vec<BinaryMask>,
    pub scores: Vec<f32>,
}

impl MaskProposalSet {
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn top_score(&self) -> f32 {
        self.scores.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }
}

fn query(image_id: &str, image: &RgbImage, prompt: &PointPrompt, backend: &dyn PromptableSegmenter, k: usize) -> Result<Vec<Proposal>> {
    let (w, h) = image.dimensions();
    if prompt.x >= w || prompt.y >= h {
        return Err(Error::contract(format!(
            "prompt ({}, {}) lies outside the {w}x{h} image",
            prompt.x, prompt.y
        )));
    }
    if k == 0 {
        return Err(Error::contract("k must be at least 1"));
    }
    let proposals = backend.propose(&ProposalRequest {
        image_id,
        image,
        x: prompt.x,
        y: prompt.y,
        multimask: true,
        k,
    })?;
    if proposals.is_empty() {
        return Err(Error::EmptyProposal { class_id: prompt.class_id });
    }
    if let Some(bad) = proposals.iter().find(|p| p.mask.dims() != (w, h)) {
        return Err(Error::Backend(format!(
            "mask is {}x{} for a {w}x{h} image",
            bad.mask.width(),
            bad.mask.height()
        )));
    }
    Ok(proposals)
}

/// Pixelwise majority vote: a pixel is set when at least half the masks
/// set it.
pub fn average_masks(masks: &[BinaryMask]) -> Result<BinaryMask> {
    let first = masks.first().ok_or_else(|| Error::contract("nothing to average"))?;
    let (w, h) = first.dims();
    if masks.iter().any(|m| m.dims() != (w, h)) {
        return Err(Error::contract("masks to average differ in size"));
    }
    let n = masks.len();
    let bits = (0..first.bits().len())
        .map(|i| 2 * masks.iter().filter(|m| m.bits()[i]).count() >= n)
        .collect();
    BinaryMask::from_bits(w, h, bits)
}

/// One mask per prompt: the backend's candidates averaged and thresholded at
/// 0.5; the score is the mean candidate score.
pub fn segment_single(
    image_id: &str,
    image: &RgbImage,
    prompt: &PointPrompt,
    backend: &dyn PromptableSegmenter,
    k: usize,
) -> Result<MaskProposalSet> {
    let proposals = query(image_id, image, prompt, backend, k)?;
    let masks: Vec<BinaryMask> = proposals.iter().map(|p| p.mask.clone()).collect();
    let score = proposals.iter().map(|p| p.score).sum::<f32>() / proposals.len() as f32;
    Ok(MaskProposalSet {
        image_id: image_id.to_string(),
        class_id: prompt.class_id,
        prompt: *prompt,
        masks: vec![average_masks(&masks)?],
        scores: vec![score],
    })
}

/// Up to `k` candidates, best backend score first; ties keep backend order.
pub fn segment_multi(
    image_id: &str,
    image: &RgbImage,
    prompt: &PointPrompt,
    backend: &dyn PromptableSegmenter,
    k: usize,
) -> Result<MaskProposalSet> {
    let mut proposals = query(image_id, image, prompt, backend, k)?;
    proposals.sort_by(|a, b| b.score.total_cmp(&a.score));
    proposals.truncate(k);
    let (masks, scores) = proposals.into_iter().map(|p| (p.mask, p.score)).unzip();
    Ok(MaskProposalSet {
        image_id: image_id.to_string(),
        class_id: prompt.class_id,
        prompt: *prompt,
        masks,
        scores,
    })
}

/// Proposal sets for every prompt of an image, plus the classes whose
/// prompts came back empty.
#[derive(Debug, Clone, Default)]
pub struct SegmentationRun {
    pub sets: Vec<MaskProposalSet>,
    pub empty: Vec<ClassId>,
}

/// Segment one image. `prompts` must come from activation maps of the
/// original image; in smoothed mode only the backend input is blurred, once.
pub fn run_segmentation(
    image_id: &str,
    image: &RgbImage,
    prompts: &[PointPrompt],
    cfg: &SegmenterConfig,
    backend: &dyn PromptableSegmenter,
) -> Result<SegmentationRun> {
    cfg.validate()?;
    let mut run = SegmentationRun::default();
    if prompts.is_empty() {
        return Ok(run);
    }
    let blurred;
    let input = match cfg.input_mode {
        InputMode::Original => image,
        InputMode::Smoothed => {
            blurred = gaussian_blur_rgb(image, cfg.blur_sigma)?;
            &blurred
        }
    };
    for prompt in prompts {
        let result = match cfg.mask_strategy {
            MaskStrategy::Single => segment_single(image_id, input, prompt, backend, cfg.k_proposals),
            MaskStrategy::Multi => segment_multi(image_id, input, prompt, backend, cfg.k_proposals),
        };
        match result {
            Ok(set) => run.sets.push(set),
            Err(Error::EmptyProposal { class_id }) => run.empty.push(class_id),
            Err(e) => return Err(e),
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prompt(x: u32, y: u32) -> PointPrompt {
        PointPrompt {
            class_id: 4,
            x,
            y,
            activation: 1.0,
        }
    }

    fn left_half(w: u32, h: u32) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, _| x < w / 2)
    }

    #[test]
    fn unanimous_average_is_the_mask() {
        let a = left_half(6, 4);
        let backend = StaticBackend::new([(a.clone(), 0.9), (a.clone(), 0.8), (a.clone(), 0.7)]);
        let img = RgbImage::new(6, 4);
        let set = segment_single("i", &img, &prompt(1, 1), &backend, 3).unwrap();
        assert_eq!(set.masks, vec![a]);
        assert!((set.scores[0] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn two_of_three_majority() {
        let on = BinaryMask::filled(5, 5, true);
        let off = BinaryMask::new(5, 5);
        let backend = StaticBackend::new([(on.clone(), 0.5), (off, 0.5), (on.clone(), 0.5)]);
        let img = RgbImage::new(5, 5);
        let set = segment_single("i", &img, &prompt(0, 0), &backend, 3).unwrap();
        assert_eq!(set.masks, vec![on]);
    }

    #[test]
    fn even_split_counts_as_majority() {
        let on = BinaryMask::filled(2, 1, true);
        let off = BinaryMask::new(2, 1);
        assert_eq!(average_masks(&[on.clone(), off]).unwrap(), on);
    }

    #[test]
    fn prompt_outside_image_is_rejected() {
        let backend = StaticBackend::new([(BinaryMask::new(4, 4), 1.0)]);
        let img = RgbImage::new(4, 4);
        assert!(matches!(
            segment_single("i", &img, &prompt(4, 0), &backend, 3),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn empty_backend_reply_is_a_signal() {
        let backend = StaticBackend::new([]);
        let img = RgbImage::new(4, 4);
        assert!(matches!(
            segment_multi("i", &img, &prompt(0, 0), &backend, 3),
            Err(Error::EmptyProposal { class_id: 4 })
        ));
    }

    #[test]
    fn multi_orders_by_score_and_caps_at_k() {
        let masks: Vec<BinaryMask> = (0..3).map(|i| BinaryMask::from_fn(4, 1, |x, _| x <= i)).collect();
        let backend = StaticBackend::new([(masks[0].clone(), 0.2), (masks[1].clone(), 0.9), (masks[2].clone(), 0.5)]);
        let img = RgbImage::new(4, 1);
        let set = segment_multi("i", &img, &prompt(0, 0), &backend, 3).unwrap();
        assert_eq!(set.scores, vec![0.9, 0.5, 0.2]);
        assert_eq!(set.masks[0], masks[1]);
        let top = segment_multi("i", &img, &prompt(0, 0), &backend, 1).unwrap();
        assert_eq!(top.masks, vec![masks[1].clone()]);
    }

    #[test]
    fn short_reply_is_not_padded() {
        let backend = StaticBackend::new([(BinaryMask::new(2, 2), 0.3), (BinaryMask::new(2, 2), 0.4)]);
        let img = RgbImage::new(2, 2);
        let set = segment_multi("i", &img, &prompt(0, 0), &backend, 3).unwrap();
        assert_eq!(set.len(), 2);
    }

    #[test]
    fn run_counts_and_empty_signals() {
        let img = RgbImage::new(4, 4);
        let cfg = SegmenterConfig {
            mask_strategy: MaskStrategy::Single,
            ..Default::default()
        };
        let backend = StaticBackend::new([(BinaryMask::new(4, 4), 1.0)]);
        let run = run_segmentation("i", &img, &[], &cfg, &backend).unwrap();
        assert!(run.sets.is_empty());
        let run = run_segmentation("i", &img, &[prompt(0, 0), prompt(3, 3)], &cfg, &backend).unwrap();
        assert_eq!(run.sets.len(), 2);
        assert!(run.sets.iter().all(|s| s.len() == 1));

        let run = run_segmentation("i", &img, &[prompt(0, 0)], &cfg, &StaticBackend::new([])).unwrap();
        assert_eq!(run.empty, vec![4]);
    }

    #[test]
    fn config_validation() {
        assert!(SegmenterConfig::default().validate().is_ok());
        assert_eq!(SegmenterConfig::default().blur_sigma, 10.0);
        assert_eq!(SegmenterConfig::default().k_proposals, 3);
        let bad = SegmenterConfig {
            input_mode: InputMode::Smoothed,
            blur_sigma: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SegmenterConfig {
            k_proposals: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
