use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::labels::{class_pixel_counts, derive_image_labels, LabelVector};
use crate::catalog::ClassCatalog;
use crate::error::{Error, IoContext, Result};
use crate::mask::LabelMap;
use crate::ClassId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::config(format!("unknown split `{other}`"))),
        }
    }
}

/// An RGB image, its image-level targets and (for evaluation) its ground
/// truth class map.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub image_id: String,
    pub pixels: RgbImage,
    /// `None` for images that come without annotations.
    pub labels: Option<LabelVector>,
    pub gt_mask: Option<LabelMap>,
}

impl LabeledImage {
    pub fn dims(&self) -> (u32, u32) {
        self.pixels.dimensions()
    }
}

/// Where the pieces of a dataset live on disk.
///
/// Two layouts are recognised: the native one (`images/{split}`,
/// `masks/{split}`, `category.txt`) and the upstream FoodSeg103 release
/// (`Images/img_dir/{split}`, `Images/ann_dir/{split}`, `category_id.txt`).
#[derive(Debug, Clone)]
pub struct DatasetLayout {
    root: PathBuf,
    images: PathBuf,
    masks: PathBuf,
    catalog: PathBuf,
}

impl DatasetLayout {
    pub fn detect(root: &Path) -> Self {
        let upstream = root.join("Images").join("img_dir");
        if upstream.is_dir() {
            Self {
                root: root.to_path_buf(),
                images: upstream,
                masks: root.join("Images").join("ann_dir"),
                catalog: root.join("category_id.txt"),
            }
        } else {
            Self {
                root: root.to_path_buf(),
                images: root.join("images"),
                masks: root.join("masks"),
                catalog: root.join("category.txt"),
            }
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn images_dir(&self, split: Split) -> PathBuf {
        self.images.join(split.as_str())
    }

    pub fn masks_dir(&self, split: Split) -> PathBuf {
        self.masks.join(split.as_str())
    }

    pub fn catalog_path(&self) -> &Path {
        &self.catalog
    }

    pub fn load_catalog(&self) -> Result<ClassCatalog> {
        let text = std::fs::read_to_string(&self.catalog).at(&self.catalog)?;
        ClassCatalog::parse(&text)
    }
}

/// One image of a split, not yet decoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetEntry {
    pub image_id: String,
    pub image_path: PathBuf,
    pub mask_path: Option<PathBuf>,
}

const IMAGE_EXTENSIONS: &[&str] = &["jpg", "jpeg", "png"];

impl DatasetEntry {
    pub fn load(&self, catalog: &ClassCatalog, min_pixel_count: u64) -> Result<LabeledImage> {
        let pixels = image::open(&self.image_path)
            .map_err(|e| Error::Decode {
                what: self.image_path.display().to_string(),
                message: e.to_string(),
            })?
            .to_rgb8();
        let (labels, gt_mask) = match &self.mask_path {
            Some(path) => {
                let gt = LabelMap::read_png(path)?;
                if gt.dims() != pixels.dimensions() {
                    return Err(Error::DimensionMismatch {
                        image_id: self.image_id.clone(),
                        image_w: pixels.width(),
                        image_h: pixels.height(),
                        mask_w: gt.width(),
                        mask_h: gt.height(),
                    });
                }
                let labels = derive_image_labels(&gt, catalog, min_pixel_count).map_err(|e| {
                    match e {
                        Error::UnknownClassId { id, context } => Error::UnknownClassId {
                            id,
                            context: format!("{} ({context})", path.display()),
                        },
                        other => other,
                    }
                })?;
                (Some(labels), Some(gt))
            }
            None => (None, None),
        };
        Ok(LabeledImage {
            image_id: self.image_id.clone(),
            pixels,
            labels,
            gt_mask,
        })
    }
}

/// Sorted listing of a split. With `require_masks`, every image must have a
/// mask with the same stem.
pub fn scan_split(layout: &DatasetLayout, split: Split, require_masks: bool) -> Result<Vec<DatasetEntry>> {
    let dir = layout.images_dir(split);
    let mut entries = Vec::new();
    if dir.is_dir() {
        for item in std::fs::read_dir(&dir).at(&dir)? {
            let path = item.at(&dir)?.path();
            let ext = path
                .extension()
                .and_then(|e| e.to_str())
                .map(|e| e.to_ascii_lowercase());
            if !path.is_file() || !ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let mask = layout.masks_dir(split).join(format!("{stem}.png"));
            entries.push(DatasetEntry {
                image_id: stem.to_string(),
                image_path: path.clone(),
                mask_path: mask.is_file().then_some(mask),
            });
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptySplit {
            root: layout.root().to_path_buf(),
            split: split.to_string(),
        });
    }
    entries.sort_by(|a, b| a.image_id.cmp(&b.image_id).then(a.image_path.cmp(&b.image_path)));
    if let Some(dup) = entries.windows(2).find(|w| w[0].image_id == w[1].image_id) {
        return Err(Error::contract(format!(
            "image id `{}` appears twice in split {split}",
            dup[0].image_id
        )));
    }
    if require_masks {
        let missing: Vec<String> = entries
            .iter()
            .filter(|e| e.mask_path.is_none())
            .map(|e| e.image_id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingMask { stems: missing });
        }
    }
    Ok(entries)
}

/// Decode a whole annotated split, ordered by image id.
pub fn load_split(root: &Path, split: Split, min_pixel_count: u64) -> Result<(ClassCatalog, Vec<LabeledImage>)> {
    let layout = DatasetLayout::detect(root);
    let catalog = layout.load_catalog()?;
    let entries = scan_split(&layout, split, true)?;
    let images = entries
        .par_iter()
        .map(|e| e.load(&catalog, min_pixel_count))
        .collect::<Result<Vec<_>>>()?;
    log::info!("loaded {} images from {split} split of {}", images.len(), root.display());
    Ok((catalog, images))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFrequency {
    pub class_id: ClassId,
    pub name: String,
    /// Images where the class is a positive label.
    pub images: u64,
    pub pixels: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub count: usize,
    pub class_frequency: Vec<ClassFrequency>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestionReport {
    pub root: PathBuf,
    pub catalog_fingerprint: String,
    pub min_pixel_count: u64,
    pub splits: BTreeMap<Split, SplitReport>,
}

/// Validate every split that exists under `root` and tally class statistics.
pub fn ingest(root: &Path, min_pixel_count: u64) -> Result<IngestionReport> {
    let layout = DatasetLayout::detect(root);
    let catalog = layout.load_catalog()?;
    let mut splits = BTreeMap::new();
    for split in [Split::Train, Split::Test] {
        if !layout.images_dir(split).is_dir() {
            continue;
        }
        let entries = scan_split(&layout, split, true)?;
        let per_image = entries
            .par_iter()
            .map(|e| {
                let item = e.load(&catalog, min_pixel_count)?;
                let gt = item.gt_mask.as_ref().expect("masks are required here");
                Ok((item.labels.expect("masks imply labels"), class_pixel_counts(gt, &catalog)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let class_frequency = catalog
            .classes()
            .iter()
            .map(|c| ClassFrequency {
                class_id: c.id,
                name: c.name.clone(),
                images: per_image.iter().filter(|(y, _)| y.get(c.id)).count() as u64,
                pixels: per_image.iter().map(|(_, px)| px[c.id as usize]).sum(),
            })
            .collect();
        log::info!("{split}: {} images", entries.len());
        splits.insert(
            split,
            SplitReport {
                count: entries.len(),
                class_frequency,
            },
        );
    }
    if splits.is_empty() {
        return Err(Error::EmptySplit {
            root: root.to_path_buf(),
            split: "train/test".into(),
        });
    }
    Ok(IngestionReport {
        root: root.to_path_buf(),
        catalog_fingerprint: catalog.fingerprint(),
        min_pixel_count,
        splits,
    })
}
