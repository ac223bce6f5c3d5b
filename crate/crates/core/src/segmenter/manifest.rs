//! Per-(image, class) proposal manifests: masks as run-length arrays in JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MaskProposalSet;
use crate::cam::PointPrompt;
use crate::error::{Error, IoContext, Result};
use crate::mask::BinaryMask;
use crate::rle::Rle;
use crate::ClassId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPoint {
    pub x: u32,
    pub y: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMask {
    pub rle: Rle,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalManifest {
    pub image_id: String,
    pub class_id: ClassId,
    pub width: u32,
    pub height: u32,
    pub prompt: PromptPoint,
    pub masks: Vec<ManifestMask>,
}

impl ProposalManifest {
    pub fn from_set(set: &MaskProposalSet) -> Result<Self> {
        let (width, height) = set
            .masks
            .first()
            .map(BinaryMask::dims)
            .ok_or(Error::EmptyProposal { class_id: set.class_id })?;
        Ok(Self {
            image_id: set.image_id.clone(),
            class_id: set.class_id,
            width,
            height,
            prompt: PromptPoint {
                x: set.prompt.x,
                y: set.prompt.y,
            },
            masks: set
                .masks
                .iter()
                .zip(&set.scores)
                .map(|(m, &score)| ManifestMask { rle: Rle::encode(m), score })
                .collect(),
        })
    }

    /// Checks the prompt lies inside the frame and every mask decodes.
    pub fn validate(&self) -> Result<()> {
        if self.prompt.x >= self.width || self.prompt.y >= self.height {
            return Err(Error::Decode {
                what: "proposal manifest".into(),
                message: format!(
                    "prompt ({}, {}) outside {}x{}",
                    self.prompt.x, self.prompt.y, self.width, self.height
                ),
            });
        }
        for m in &self.masks {
            m.rle.decode(self.width, self.height)?;
        }
        Ok(())
    }

    pub fn decode_masks(&self) -> Result<Vec<BinaryMask>> {
        self.masks.iter().map(|m| m.rle.decode(self.width, self.height)).collect()
    }

    pub fn to_set(&self) -> Result<MaskProposalSet> {
        Ok(MaskProposalSet {
            image_id: self.image_id.clone(),
            class_id: self.class_id,
            prompt: PointPrompt {
                class_id: self.class_id,
                x: self.prompt.x,
                y: self.prompt.y,
                activation: f32::NAN,
            },
            masks: self.decode_masks()?,
            scores: self.masks.iter().map(|m| m.score).collect(),
        })
    }

    pub fn top_score(&self) -> f32 {
        self.masks.iter().map(|m| m.score).fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let m: Self = serde_json::from_slice(bytes)?;
        m.validate()?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read(path).at(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?).at(path)
    }

    pub fn file_name(image_id: &str, class_id: ClassId) -> String {
        format!("{image_id}.{class_id}.json")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_json() {
        let mask = BinaryMask::from_fn(5, 3, |x, y| x > y);
        let set = MaskProposalSet {
            image_id: "img".into(),
            class_id: 7,
            prompt: PointPrompt { class_id: 7, x: 4, y: 0, activation: 1.0 },
            masks: vec![mask.clone(), BinaryMask::new(5, 3)],
            scores: vec![0.9, 0.25],
        };
        let m = ProposalManifest::from_set(&set).unwrap();
        let text = serde_json::to_vec(&m).unwrap();
        let back = ProposalManifest::parse(&text).unwrap();
        assert_eq!(back, m);
        let decoded = back.decode_masks().unwrap();
        assert_eq!(decoded[0], mask);
        assert_eq!(back.masks[0].rle.foreground(), mask.count());
        assert_eq!(back.top_score(), 0.9);
    }

    #[test]
    fn rejects_out_of_frame_prompt_and_bad_rle() {
        let bad = br#"{"image_id":"a","class_id":1,"width":2,"height":2,"prompt":{"x":2,"y":0},"masks":[]}"#;
        assert!(ProposalManifest::parse(bad).is_err());
        let bad = br#"{"image_id":"a","class_id":1,"width":2,"height":2,"prompt":{"x":0,"y":0},"masks":[{"rle":[1,1],"score":1}]}"#;
        assert!(ProposalManifest::parse(bad).is_err());
        let ok = br#"{"image_id":"a","class_id":1,"width":2,"height":2,"prompt":{"x":0,"y":0},"masks":[{"rle":[1,3],"score":1}]}"#;
        assert!(ProposalManifest::parse(ok).is_ok());
    }
}
