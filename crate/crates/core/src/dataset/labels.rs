use serde::{Deserialize, Serialize};

use crate::catalog::ClassCatalog;
use crate::error::{Error, Result};
use crate::mask::LabelMap;
use crate::ClassId;

/// Binary image-level target, one entry per catalog class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelVector(Vec<u8>);

impl LabelVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    pub fn from_classes(len: usize, classes: impl IntoIterator<Item = ClassId>) -> Result<Self> {
        let mut v = Self::zeros(len);
        for id in classes {
            let slot = v.0.get_mut(id as usize).ok_or_else(|| Error::UnknownClassId {
                id: id as u32,
                context: format!("label vector of length {len}"),
            })?;
            *slot = 1;
        }
        Ok(v)
    }

    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::contract("label vector entries must be 0 or 1"));
        }
        Ok(Self(bits))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, id: ClassId) -> bool {
        self.0.get(id as usize).copied() == Some(1)
    }

    pub fn positives(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| i as ClassId)
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.0.iter().map(|&b| b as f32).collect()
    }
}

/// Per-class pixel counts of a label map, validated against the catalog.
pub fn class_pixel_counts(gt: &LabelMap, catalog: &ClassCatalog) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; catalog.len()];
    for &id in gt.ids() {
        match counts.get_mut(id as usize) {
            Some(c) => *c += 1,
            None => {
                return Err(Error::UnknownClassId {
                    id: id as u32,
                    context: format!("mask pixel; catalog has {} classes", catalog.len()),
                })
            }
        }
    }
    Ok(counts)
}

/// Image-level multi-label target: class `i` is positive iff it covers at
/// least `min_pixel_count` pixels of the mask. Background follows the same
/// rule.
pub fn derive_image_labels(
    gt: &LabelMap,
    catalog: &ClassCatalog,
    min_pixel_count: u64,
) -> Result<LabelVector> {
    let counts = class_pixel_counts(gt, catalog)?;
    Ok(LabelVector(
        counts
            .iter()
            .map(|&c| u8::from(c >= min_pixel_count.max(1)))
            .collect(),
    ))
}
