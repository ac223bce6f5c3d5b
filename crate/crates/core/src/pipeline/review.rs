use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::run::{now_ms, RunManifest, RunMode, CATALOG_FILE, IMAGES_DIR, MANIFEST_FILE, PROPOSALS_DIR};
use crate::catalog::ClassCatalog;
use crate::dataset::Split;
use crate::error::{Error, IoContext, Result};
use crate::mask::LabelMap;
use crate::segmenter::ProposalManifest;
use crate::ClassId;

pub const DECISIONS_FILE: &str = "decisions.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Decision {
    Accept { mask_index: usize },
    RejectAll,
}

/// A reviewer's verdict on one (image, class) proposal set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub image_id: String,
    pub class_id: ClassId,
    pub decision: Decision,
    pub reviewer: String,
    /// Unix time in milliseconds.
    pub decided_at: u64,
}

/// Decision as submitted, before validation and timestamping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionInput {
    pub run_id: String,
    pub image_id: String,
    pub class_id: ClassId,
    pub decision: Decision,
    pub reviewer: String,
}

/// Validation failure on one input field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

// Appends from all threads go through here so lines never interleave.
static DECISION_LOCK: Mutex<()> = Mutex::new(());

/// Validate `input` against the run's proposals and append it to the
/// decision log. The outer error is an I/O or decoding failure; the inner
/// one lists the offending fields.
pub fn record_decision(run_dir: &Path, input: &DecisionInput) -> Result<std::result::Result<ReviewDecision, Vec<FieldError>>> {
    let mut errors = Vec::new();
    if input.reviewer.trim().is_empty() {
        errors.push(FieldError::new("reviewer", "must not be empty"));
    }
    let manifest = if super::is_safe_component(&input.image_id) {
        let path = run_dir
            .join(PROPOSALS_DIR)
            .join(ProposalManifest::file_name(&input.image_id, input.class_id));
        if path.is_file() {
            Some(ProposalManifest::read(&path)?)
        } else {
            errors.push(FieldError::new(
                "class_id",
                format!("no proposals for image `{}` and class {}", input.image_id, input.class_id),
            ));
            None
        }
    } else {
        errors.push(FieldError::new("image_id", "not a valid image id"));
        None
    };
    if let (Some(m), Decision::Accept { mask_index }) = (&manifest, input.decision) {
        if mask_index >= m.masks.len() {
            errors.push(FieldError::new(
                "decision.mask_index",
                format!("{mask_index} is out of range for {} masks", m.masks.len()),
            ));
        }
    }
    if !errors.is_empty() {
        return Ok(Err(errors));
    }
    let decision = ReviewDecision {
        image_id: input.image_id.clone(),
        class_id: input.class_id,
        decision: input.decision,
        reviewer: input.reviewer.trim().to_string(),
        decided_at: now_ms() as u64,
    };
    let path = run_dir.join(DECISIONS_FILE);
    let _guard = DECISION_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let mut line = serde_json::to_vec(&decision)?;
    line.push(b'\n');
    let mut file = OpenOptions::new().create(true).append(true).open(&path).at(&path)?;
    file.write_all(&line).at(&path)?;
    Ok(Ok(decision))
}

fn read_decisions(run_dir: &Path) -> Result<Vec<ReviewDecision>> {
    let path = run_dir.join(DECISIONS_FILE);
    if !path.is_file() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(&path).at(&path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Decode {
                what: format!("{} line {}", path.display(), i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Current decision per (image, class): the last one written.
pub fn latest_decisions(run_dir: &Path) -> Result<BTreeMap<(String, ClassId), ReviewDecision>> {
    Ok(read_decisions(run_dir)?
        .into_iter()
        .map(|d| ((d.image_id.clone(), d.class_id), d))
        .collect())
}

/// Every decision ever written for one item, oldest first.
pub fn history(run_dir: &Path, image_id: &str, class_id: ClassId) -> Result<Vec<ReviewDecision>> {
    Ok(read_decisions(run_dir)?
        .into_iter()
        .filter(|d| d.image_id == image_id && d.class_id == class_id)
        .collect())
}

/// All proposal manifests of a run, ordered by image then class.
pub fn load_proposals(run_dir: &Path) -> Result<Vec<ProposalManifest>> {
    let dir = run_dir.join(PROPOSALS_DIR);
    let mut out = Vec::new();
    for entry in std::fs::read_dir(&dir).at(&dir)? {
        let path = entry.at(&dir)?.path();
        if path.extension().is_some_and(|e| e == "json") {
            out.push(ProposalManifest::read(&path)?);
        }
    }
    out.sort_by(|a, b| a.image_id.cmp(&b.image_id).then(a.class_id.cmp(&b.class_id)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub image_id: String,
    pub class_id: ClassId,
    pub class_name: String,
    pub n_masks: usize,
    pub top_score: f32,
}

fn read_catalog(run_dir: &Path) -> Result<ClassCatalog> {
    let path = run_dir.join(CATALOG_FILE);
    ClassCatalog::parse(&std::fs::read_to_string(&path).at(&path)?)
}

/// Undecided items, least confident first (ascending top score), then by
/// image and class.
pub fn queue(run_dir: &Path) -> Result<Vec<QueueItem>> {
    let catalog = read_catalog(run_dir)?;
    let decided = latest_decisions(run_dir)?;
    let mut items: Vec<QueueItem> = load_proposals(run_dir)?
        .into_iter()
        .filter(|m| !decided.contains_key(&(m.image_id.clone(), m.class_id)))
        .map(|m| QueueItem {
            class_name: catalog.name(m.class_id).unwrap_or_default().to_string(),
            n_masks: m.masks.len(),
            top_score: m.top_score(),
            image_id: m.image_id,
            class_id: m.class_id,
        })
        .collect();
    items.sort_by(|a, b| {
        a.top_score
            .total_cmp(&b.top_score)
            .then_with(|| a.image_id.cmp(&b.image_id))
            .then(a.class_id.cmp(&b.class_id))
    });
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub proposals: ProposalManifest,
    pub class_name: String,
    pub cam_available: bool,
    pub decision: Option<ReviewDecision>,
    pub history_len: usize,
}

pub fn load_item(run_dir: &Path, image_id: &str, class_id: ClassId) -> Result<ReviewItem> {
    if !super::is_safe_component(image_id) {
        return Err(Error::contract(format!("invalid image id `{image_id}`")));
    }
    let path = run_dir
        .join(PROPOSALS_DIR)
        .join(ProposalManifest::file_name(image_id, class_id));
    if !path.is_file() {
        return Err(Error::contract(format!("no proposals for `{image_id}` class {class_id}")));
    }
    let proposals = ProposalManifest::read(&path)?;
    let catalog = read_catalog(run_dir)?;
    let hist = history(run_dir, image_id, class_id)?;
    let cam = run_dir
        .join(super::run::CAMS_DIR)
        .join(format!("{}.png", crate::cam::cam_file_stem(image_id, class_id)));
    Ok(ReviewItem {
        class_name: catalog.name(class_id).unwrap_or_default().to_string(),
        cam_available: cam.is_file(),
        decision: hist.last().cloned(),
        history_len: hist.len(),
        proposals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub mode: RunMode,
    pub setting: String,
    pub n_images: usize,
    pub n_items: usize,
    pub n_decided: usize,
    pub flagged: bool,
}

/// Every run directory directly under `root`, ordered by id.
pub fn list_runs(root: &Path) -> Result<Vec<RunSummary>> {
    let mut runs = Vec::new();
    if !root.is_dir() {
        return Ok(runs);
    }
    for entry in std::fs::read_dir(root).at(root)? {
        let dir = entry.at(root)?.path();
        if !dir.join(MANIFEST_FILE).is_file() {
            continue;
        }
        let manifest = RunManifest::read(&dir)?;
        let n_items = std::fs::read_dir(dir.join(PROPOSALS_DIR))
            .map(|d| d.filter_map(|e| e.ok()).filter(|e| e.path().extension().is_some_and(|x| x == "json")).count())
            .unwrap_or(0);
        runs.push(RunSummary {
            run_id: manifest.run_id.clone(),
            mode: manifest.mode,
            setting: manifest.setting.clone(),
            n_images: manifest.images.len(),
            n_items,
            n_decided: latest_decisions(&dir)?.len(),
            flagged: manifest.flagged,
        });
    }
    runs.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    Ok(runs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub out_dir: PathBuf,
    pub split: Split,
    /// Images written, i.e. with at least one accepted mask.
    pub n_images: usize,
    pub n_accepted: usize,
    pub n_rejected: usize,
    pub n_undecided: usize,
    /// Accepted masks entirely painted over by higher-scoring ones.
    pub n_occluded: usize,
}

/// Write accepted masks as a palette-mask dataset (train split) that the
/// dataset loader can ingest. Rejected and undecided items are left out.
/// Where accepted masks overlap, the higher backend score wins; equal scores
/// go to the lower class id.
pub fn export(run_dir: &Path, out_root: &Path) -> Result<ExportSummary> {
    let catalog = read_catalog(run_dir)?;
    let decided = latest_decisions(run_dir)?;
    let proposals = load_proposals(run_dir)?;
    let split = Split::Train;
    let images_out = out_root.join("images").join(split.as_str());
    let masks_out = out_root.join("masks").join(split.as_str());
    for d in [&images_out, &masks_out] {
        std::fs::create_dir_all(d).at(d)?;
    }
    let cat_path = out_root.join("category.txt");
    std::fs::write(&cat_path, catalog.to_text()).at(&cat_path)?;

    let mut by_image: BTreeMap<&str, Vec<(f32, ClassId, &ProposalManifest, usize)>> = BTreeMap::new();
    let (mut n_accepted, mut n_rejected, mut n_undecided) = (0, 0, 0);
    for m in &proposals {
        match decided.get(&(m.image_id.clone(), m.class_id)).map(|d| d.decision) {
            Some(Decision::Accept { mask_index }) => {
                let chosen = m.masks.get(mask_index).ok_or_else(|| {
                    Error::contract(format!("{}/{}: decision points past the last mask", m.image_id, m.class_id))
                })?;
                n_accepted += 1;
                by_image
                    .entry(&m.image_id)
                    .or_default()
                    .push((chosen.score, m.class_id, m, mask_index));
            }
            Some(Decision::RejectAll) => n_rejected += 1,
            None => n_undecided += 1,
        }
    }

    let n_images = by_image.len();
    let mut n_occluded = 0;
    for (image_id, mut accepted) in by_image {
        // Paint low to high so the winner lands last.
        accepted.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        let (w, h) = (accepted[0].2.width, accepted[0].2.height);
        let mut map = LabelMap::filled(w, h, catalog.background_id());
        for (_, class_id, m, idx) in &accepted {
            if (m.width, m.height) != (w, h) {
                return Err(Error::contract(format!("{image_id}: proposals disagree on image size")));
            }
            map.paint(&m.masks[*idx].rle.decode(w, h)?, *class_id)?;
        }
        for (_, class_id, _, _) in &accepted {
            if map.class_mask(*class_id).is_empty() {
                n_occluded += 1;
                log::warn!("{image_id}: accepted class {class_id} is fully covered by other masks");
            }
        }
        map.write_png(&masks_out.join(format!("{image_id}.png")))?;
        let src = run_dir.join(IMAGES_DIR).join(format!("{image_id}.png"));
        let dst = images_out.join(format!("{image_id}.png"));
        std::fs::copy(&src, &dst).at(&src)?;
    }
    let summary = ExportSummary {
        out_dir: out_root.to_path_buf(),
        split,
        n_images,
        n_accepted,
        n_rejected,
        n_undecided,
        n_occluded,
    };
    let path = out_root.join("export_summary.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&summary)?).at(&path)?;
    Ok(summary)
}
