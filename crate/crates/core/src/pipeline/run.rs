use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cam::{compute_cams, dump_cam, select_prompt, PointPrompt};
use crate::catalog::ClassCatalog;
use crate::classifier::{predict, validate_threshold, ImageClassifier, SampleSource};
use crate::dataset::LabeledImage;
use crate::error::{Error, IoContext, Result};
use crate::fingerprint::json_fingerprint;
use crate::metrics::{best_case_select, tp_filter, EvalRecord, EvaluationReport};
use crate::segmenter::{run_segmentation, MaskProposalSet, PromptableSegmenter, ProposalManifest, SegmenterConfig};
use crate::ClassId;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMING_FILE: &str = "run_timing.json";
pub const CATALOG_FILE: &str = "category.txt";
pub const PROPOSALS_DIR: &str = "proposals";
pub const CAMS_DIR: &str = "cams";
pub const IMAGES_DIR: &str = "images";
pub const REPORT_DIR: &str = "report";
pub const RECORDS_FILE: &str = "records.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    /// Ground truth available: restrict to true positives and score.
    AutoEval,
    /// No ground truth needed: prompt every predicted class and keep the
    /// proposals for a reviewer.
    Review,
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::AutoEval => "auto-eval",
            RunMode::Review => "review",
        })
    }
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto-eval" => Ok(RunMode::AutoEval),
            "review" | "propose-for-review" => Ok(RunMode::Review),
            other => Err(Error::config(format!("unknown run mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: RunMode,
    pub segmenter: SegmenterConfig,
    pub decision_threshold: f64,
    pub dump_cams: bool,
    /// Share of failed images above which the run is flagged.
    pub max_failure_rate: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::AutoEval,
            segmenter: SegmenterConfig::default(),
            decision_threshold: 0.5,
            dump_cams: true,
            max_failure_rate: 0.1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.segmenter.validate()?;
        validate_threshold(self.decision_threshold)?;
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return Err(Error::config("max_failure_rate must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn setting(&self) -> String {
        format!("{}/{}", self.segmenter.input_mode, self.segmenter.mask_strategy)
    }
}

/// Terminal state of one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageStatus {
    Done,
    /// The reason is in [`ImageOutcome::error`].
    Failed,
    SkippedNoActivation,
    SkippedEmptyProposal,
}

impl ImageStatus {
    pub fn as_str(&self) -> &str {
        match self {
            ImageStatus::Done => "done",
            ImageStatus::Failed => "failed",
            ImageStatus::SkippedNoActivation => "skipped:NoActivation",
            ImageStatus::SkippedEmptyProposal => "skipped:EmptyProposal",
        }
    }
}

impl Serialize for ImageStatus {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ImageStatus {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(match s.as_str() {
            "done" => ImageStatus::Done,
            "failed" => ImageStatus::Failed,
            "skipped:NoActivation" => ImageStatus::SkippedNoActivation,
            "skipped:EmptyProposal" => ImageStatus::SkippedEmptyProposal,
            other => return Err(serde::de::Error::custom(format!("unknown image status `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSkip {
    pub class_id: ClassId,
    /// `NoActivation` or `EmptyProposal`.
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkipReason {
    NoActivation,
    EmptyProposal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageOutcome {
    pub image_id: String,
    pub status: ImageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Classes that were prompted: true positives in auto-eval, all
    /// predicted classes in review mode.
    pub classes: Vec<ClassId>,
    pub skipped: Vec<ClassSkip>,
    pub n_records: usize,
    pub n_masks: usize,
}

/// Record count check: records = prompted classes - skips over images that
/// did not fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conservation {
    pub prompted: usize,
    pub skipped: usize,
    pub records: usize,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub mode: RunMode,
    pub setting: String,
    pub dataset_fingerprint: String,
    pub classifier_fingerprint: String,
    pub backend: String,
    pub config: RunConfig,
    pub images: Vec<ImageOutcome>,
    pub n_failed: usize,
    pub flagged: bool,
    pub conservation: Conservation,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let p = dir.join(MANIFEST_FILE);
        Ok(serde_json::from_slice(&std::fs::read(&p).at(&p)?)?)
    }
}

/// Wall-clock times, kept apart from the manifest so that replays of the
/// same run produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub started_at_ms: u128,
    pub finished_at_ms: u128,
}

pub(crate) fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub records: Vec<EvalRecord>,
    /// Present in auto-eval mode when at least one record was produced.
    pub report: Option<EvaluationReport>,
}

struct ImageWork {
    outcome: ImageOutcome,
    sets: Vec<MaskProposalSet>,
    records: Vec<EvalRecord>,
}

/// Run the whole chain over `images` and write the run directory
/// `out_root/{run_id}`. An existing directory for the same id is replaced.
#[allow(clippy::too_many_arguments)]
pub fn run_batch(
    images: &[LabeledImage],
    catalog: &ClassCatalog,
    model: &dyn ImageClassifier,
    classifier_fingerprint: &str,
    backend: &dyn PromptableSegmenter,
    cfg: &RunConfig,
    out_root: &Path,
) -> Result<RunOutcome> {
    cfg.validate()?;
    if model.num_classes() != catalog.len() {
        return Err(Error::contract(format!(
            "model predicts {} classes, catalog has {}",
            model.num_classes(),
            catalog.len()
        )));
    }
    let started = now_ms();
    let dataset_fingerprint = SampleSource::fingerprint(images);
    let backend_id = backend.describe();
    let run_id = json_fingerprint(&(
        cfg,
        &dataset_fingerprint,
        classifier_fingerprint,
        &backend_id,
        catalog.fingerprint(),
    ))[..16]
        .to_string();
    let dir = out_root.join(&run_id);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).at(&dir)?;
    }
    for sub in [PROPOSALS_DIR, CAMS_DIR, IMAGES_DIR] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).at(&p)?;
    }
    let cat_path = dir.join(CATALOG_FILE);
    std::fs::write(&cat_path, catalog.to_text()).at(&cat_path)?;

    let mut seen = BTreeSet::new();
    if let Some(dup) = images.iter().find(|i| !seen.insert(i.image_id.as_str())) {
        return Err(Error::contract(format!("image id `{}` appears twice", dup.image_id)));
    }
    if let Some(bad) = images.iter().find(|i| !super::is_safe_component(&i.image_id)) {
        return Err(Error::contract(format!("image id `{}` is not a valid file name", bad.image_id)));
    }

    // Parallel per-image work, collected in input order.
    let work: Vec<ImageWork> = images
        .par_iter()
        .map(|img| match process_image(img, catalog, model, backend, cfg, &dir) {
            Ok(w) => w,
            Err(e) => {
                log::warn!("{}: {e}", img.image_id);
                ImageWork {
                    outcome: ImageOutcome {
                        image_id: img.image_id.clone(),
                        status: ImageStatus::Failed,
                        error: Some(e.to_string()),
                        classes: vec![],
                        skipped: vec![],
                        n_records: 0,
                        n_masks: 0,
                    },
                    sets: vec![],
                    records: vec![],
                }
            }
        })
        .collect();

    // Serialized writer.
    let mut records = Vec::new();
    let mut outcomes = Vec::with_capacity(work.len());
    let mut n_candidate_masks = 0;
    for w in work {
        for set in &w.sets {
            let m = ProposalManifest::from_set(set)?;
            m.write(&dir.join(PROPOSALS_DIR).join(ProposalManifest::file_name(&set.image_id, set.class_id)))?;
        }
        if cfg.mode == RunMode::AutoEval {
            n_candidate_masks += w.sets.iter().map(MaskProposalSet::len).sum::<usize>();
        }
        records.extend(w.records);
        outcomes.push(w.outcome);
    }

    let live = outcomes.iter().filter(|o| !matches!(o.status, ImageStatus::Failed));
    let prompted: usize = live.clone().map(|o| o.classes.len()).sum();
    let skipped: usize = live.clone().map(|o| o.skipped.len()).sum();
    let produced: usize = live.map(|o| o.n_records).sum();
    let conservation = Conservation {
        prompted,
        skipped,
        records: produced,
        holds: prompted == skipped + produced,
    };
    if !conservation.holds {
        return Err(Error::contract(format!("record conservation failed: {conservation:?}")));
    }
    let n_failed = outcomes
        .iter()
        .filter(|o| matches!(o.status, ImageStatus::Failed))
        .count();
    let flagged = !images.is_empty() && n_failed as f64 / images.len() as f64 > cfg.max_failure_rate;
    if flagged {
        log::warn!("run {run_id}: {n_failed} of {} images failed", images.len());
    }

    let manifest = RunManifest {
        run_id: run_id.clone(),
        mode: cfg.mode,
        setting: cfg.setting(),
        dataset_fingerprint,
        classifier_fingerprint: classifier_fingerprint.to_string(),
        backend: backend_id,
        config: cfg.clone(),
        images: outcomes,
        n_failed,
        flagged,
        conservation,
    };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?).at(&path)?;

    let report = if cfg.mode == RunMode::AutoEval {
        let report_dir = dir.join(REPORT_DIR);
        std::fs::create_dir_all(&report_dir).at(&report_dir)?;
        let path = report_dir.join(RECORDS_FILE);
        let mut out = BufWriter::new(File::create(&path).at(&path)?);
        for r in &records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n").at(&path)?;
        }
        out.flush().at(&path)?;
        let n_images = manifest.images.len() - n_failed;
        match EvaluationReport::build(&manifest.setting, &records, catalog, n_images, n_candidate_masks) {
            Ok(r) => {
                r.write(&report_dir)?;
                Some(r)
            }
            Err(Error::EmptyEvaluation) => {
                log::warn!("run {run_id}: no evaluation records");
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    let timing = RunTiming {
        started_at_ms: started,
        finished_at_ms: now_ms(),
    };
    let path = dir.join(TIMING_FILE);
    std::fs::write(&path, serde_json::to_vec_pretty(&timing)?).at(&path)?;

    Ok(RunOutcome {
        dir,
        manifest,
        records,
        report,
    })
}

fn process_image(
    img: &LabeledImage,
    catalog: &ClassCatalog,
    model: &dyn ImageClassifier,
    backend: &dyn PromptableSegmenter,
    cfg: &RunConfig,
    dir: &Path,
) -> Result<ImageWork> {
    let image_path = dir.join(IMAGES_DIR).join(format!("{}.png", img.image_id));
    img.pixels.save(&image_path)?;

    let prediction = predict(model, &img.image_id, &img.pixels, cfg.decision_threshold, catalog.background_id())?;
    let classes: Vec<ClassId> = match cfg.mode {
        RunMode::AutoEval => {
            let labels = img.labels.as_ref().ok_or_else(|| Error::MissingMask {
                stems: vec![img.image_id.clone()],
            })?;
            tp_filter(&prediction, labels).into_iter().collect()
        }
        RunMode::Review => prediction.predicted_classes.clone(),
    };

    let mut skipped = Vec::new();
    let mut prompts: Vec<PointPrompt> = Vec::new();
    if !classes.is_empty() {
        // Always from the original pixels, whatever the segmenter input.
        let cams = compute_cams(model, &img.pixels, &classes)?;
        for cam in &cams {
            let prompt = match select_prompt(cam) {
                Ok(p) => Some(p),
                Err(Error::NoActivation { class_id }) => {
                    skipped.push(ClassSkip {
                        class_id,
                        reason: SkipReason::NoActivation,
                    });
                    None
                }
                Err(e) => return Err(e),
            };
            if cfg.dump_cams {
                dump_cam(&dir.join(CAMS_DIR), &img.image_id, cam, prompt.as_ref())?;
            }
            prompts.extend(prompt);
        }
    }

    let seg = run_segmentation(&img.image_id, &img.pixels, &prompts, &cfg.segmenter, backend)?;
    skipped.extend(seg.empty.iter().map(|&class_id| ClassSkip {
        class_id,
        reason: SkipReason::EmptyProposal,
    }));

    let mut records = Vec::new();
    if cfg.mode == RunMode::AutoEval {
        let gt = img.gt_mask.as_ref().ok_or_else(|| Error::MissingMask {
            stems: vec![img.image_id.clone()],
        })?;
        for set in &seg.sets {
            records.push(best_case_select(set, &gt.class_mask(set.class_id))?);
        }
    }

    let status = if !seg.sets.is_empty() || classes.is_empty() {
        ImageStatus::Done
    } else if skipped.iter().any(|s| s.reason == SkipReason::NoActivation) {
        ImageStatus::SkippedNoActivation
    } else {
        ImageStatus::SkippedEmptyProposal
    };
    let n_records = match cfg.mode {
        RunMode::AutoEval => records.len(),
        RunMode::Review => seg.sets.len(),
    };
    Ok(ImageWork {
        outcome: ImageOutcome {
            image_id: img.image_id.clone(),
            status,
            error: None,
            classes,
            skipped,
            n_records,
            n_masks: seg.sets.iter().map(MaskProposalSet::len).sum(),
        },
        sets: seg.sets,
        records,
    })
}


