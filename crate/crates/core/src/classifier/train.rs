use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::artifact::{ModelFingerprint, OptimizerInfo, CHECKPOINT_DIR, CODE_VERSION, LOG_FILE, WEIGHTS_FILE};
use super::loss::bce_with_logits;
use super::params::ParamStore;
use super::schedule::lr_at;
use super::{ClassifierConfig, ImageClassifier, SwinClassifier};
use crate::catalog::ClassCatalog;
use crate::dataset::{augment, DatasetEntry, LabelVector, LabeledImage};
use crate::error::{Error, IoContext, Result};
use crate::fingerprint::{sample_seed, sha256_hex};
use crate::imageops::FloatImage;

/// Random-access training data.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn image_id(&self, i: usize) -> &str;
    fn load(&self, i: usize) -> Result<(FloatImage, LabelVector)>;
    /// Content digest recorded in the model fingerprint.
    fn fingerprint(&self) -> String;
}

impl SampleSource for [LabeledImage] {
    fn len(&self) -> usize {
        <[LabeledImage]>::len(self)
    }

    fn image_id(&self, i: usize) -> &str {
        &self[i].image_id
    }

    fn load(&self, i: usize) -> Result<(FloatImage, LabelVector)> {
        let item = &self[i];
        let labels = item.labels.clone().ok_or_else(|| {
            Error::contract(format!("training image {} has no labels", item.image_id))
        })?;
        Ok((FloatImage::from_rgb(&item.pixels), labels))
    }

    fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for item in self {
            h.update(item.image_id.as_bytes());
            h.update(item.pixels.as_raw());
            if let Some(y) = &item.labels {
                h.update(y.bits());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Training data decoded lazily from a dataset split.
pub struct EntrySource<'a> {
    pub entries: &'a [DatasetEntry],
    pub catalog: &'a ClassCatalog,
    pub min_pixel_count: u64,
}

impl SampleSource for EntrySource<'_> {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn image_id(&self, i: usize) -> &str {
        &self.entries[i].image_id
    }

    fn load(&self, i: usize) -> Result<(FloatImage, LabelVector)> {
        let item = self.entries[i].load(self.catalog, self.min_pixel_count)?;
        let labels = item
            .labels
            .ok_or_else(|| Error::MissingMask { stems: vec![item.image_id.clone()] })?;
        Ok((FloatImage::from_rgb(&item.pixels), labels))
    }

    fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for e in self.entries {
            h.update(e.image_id.as_bytes());
            for path in [Some(&e.image_path), e.mask_path.as_ref()].into_iter().flatten() {
                let len = std::fs::metadata(path).map(|m| m.len()).unwrap_or(0);
                h.update(len.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Step {
        epoch: usize,
        step: u64,
        loss: f64,
        lr: f64,
    },
    /// Epoch summary. Precision/recall are image-level, at the decision
    /// threshold, measured on the augmented training batches.
    Epoch {
        epoch: usize,
        step: u64,
        loss: f64,
        lr: f64,
        precision: f64,
        recall: f64,
    },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub fingerprint: ModelFingerprint,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
}

const ADAM_BETAS: (f64, f64) = (0.9, 0.999);
const ADAM_EPS: f64 = 1e-8;

/// Fine-tune the classifier and write a model artifact to `out_dir`.
///
/// With `backbone_checkpoint`, every backbone tensor must be present in the
/// checkpoint with the configured shape; the classification head is always
/// freshly initialised for the catalog's N+1 classes.
pub fn train<S: SampleSource + ?Sized>(
    source: &S,
    catalog: &ClassCatalog,
    cfg: &ClassifierConfig,
    backbone_checkpoint: Option<&Path>,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(Error::contract("training set is empty"));
    }
    let device = Device::Cpu;
    let params = match backbone_checkpoint {
        Some(path) => ParamStore::fine_tune(path, "head.", cfg.seed, &device)?,
        None => ParamStore::trainable(cfg.seed, &device),
    };
    // Architecture/checkpoint mismatches surface here, before any epoch.
    let model = SwinClassifier::new(&cfg.backbone, catalog.len(), &params)?;
    let vars = params.var_map().expect("trainable store").clone();

    let mut opt = AdamW::new(
        vars.all_vars(),
        ParamsAdamW {
            lr: 0.0,
            beta1: ADAM_BETAS.0,
            beta2: ADAM_BETAS.1,
            eps: ADAM_EPS,
            weight_decay: cfg.weight_decay,
        },
    )?;

    std::fs::create_dir_all(out_dir.join(CHECKPOINT_DIR)).at(out_dir)?;
    let log_path = out_dir.join(LOG_FILE);
    let mut log = BufWriter::new(File::create(&log_path).at(&log_path)?);

    let n = source.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size) as u64;
    let total_steps = steps_per_epoch * cfg.epochs as u64;
    let res = cfg.input_resolution;
    let num_classes = catalog.len();
    let mut step = 0u64;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(sample_seed(cfg.seed, epoch as u64, "shuffle")));
        let mut loss_sum = 0.0;
        let mut counts = [0u64; 3]; // tp, fp, fn
        let mut lr = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let samples = batch
                .par_iter()
                .map(|&i| {
                    let (img, y) = source.load(i)?;
                    if y.len() != num_classes {
                        return Err(Error::contract(format!(
                            "{}: label vector has {} entries, catalog has {num_classes}",
                            source.image_id(i),
                            y.len()
                        )));
                    }
                    let seed = sample_seed(cfg.seed, epoch as u64, source.image_id(i));
                    Ok((augment(&img, &cfg.augmentation, seed)?, y.to_f32()))
                })
                .collect::<Result<Vec<_>>>()?;
            let b = samples.len();
            let mut xs = Vec::with_capacity(b * 3 * res * res);
            let mut ys = Vec::with_capacity(b * num_classes);
            for (x, y) in &samples {
                xs.extend_from_slice(x);
                ys.extend_from_slice(y);
            }
            let x = Tensor::from_vec(xs, (b, 3, res, res), &device)?;
            let y = Tensor::from_vec(ys.clone(), (b, num_classes), &device)?;

            lr = lr_at(step, total_steps, cfg)?;
            opt.set_learning_rate(lr);
            let logits = model.logits(&x)?;
            let loss = bce_with_logits(&logits, &y)?;
            opt.backward_step(&loss)?;

            let loss_v = loss.to_scalar::<f32>()? as f64;
            loss_sum += loss_v * b as f64;
            let probs = candle_nn::ops::sigmoid(&logits)?.flatten_all()?.to_vec1::<f32>()?;
            for (p, t) in probs.iter().zip(&ys) {
                let pred = *p as f64 >= cfg.decision_threshold;
                match (pred, *t == 1.0) {
                    (true, true) => counts[0] += 1,
                    (true, false) => counts[1] += 1,
                    (false, true) => counts[2] += 1,
                    _ => {}
                }
            }
            write_record(&mut log, &LogRecord::Step { epoch: epoch + 1, step, loss: loss_v, lr }, &log_path)?;
            step += 1;
        }
        let mean = loss_sum / n as f64;
        epoch_losses.push(mean);
        let ratio = |a: u64, b: u64| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
        write_record(
            &mut log,
            &LogRecord::Epoch {
                epoch: epoch + 1,
                step,
                loss: mean,
                lr,
                precision: ratio(counts[0], counts[1]),
                recall: ratio(counts[0], counts[2]),
            },
            &log_path,
        )?;
        log.flush().at(&log_path)?;
        log::info!("epoch {}/{}: loss {mean:.5} lr {lr:.3e}", epoch + 1, cfg.epochs);
        save_checkpoint(&vars, out_dir, epoch + 1, cfg.keep_checkpoints)?;
    }

    let weights_path = out_dir.join(WEIGHTS_FILE);
    vars.save(&weights_path)?;
    let weights = std::fs::read(&weights_path).at(&weights_path)?;
    let fingerprint = ModelFingerprint {
        code_version: CODE_VERSION.to_string(),
        catalog: catalog.clone(),
        catalog_hash: catalog.fingerprint(),
        dataset_fingerprint: source.fingerprint(),
        config: cfg.clone(),
        seed: cfg.seed,
        optimizer: OptimizerInfo {
            name: "adamw".into(),
            beta1: ADAM_BETAS.0,
            beta2: ADAM_BETAS.1,
            eps: ADAM_EPS,
            weight_decay: cfg.weight_decay,
        },
        backbone_checkpoint: backbone_checkpoint.map(|p| p.display().to_string()),
        weights_sha256: sha256_hex(&weights),
    };
    fingerprint.write(out_dir)?;
    Ok(TrainOutcome {
        dir: out_dir.to_path_buf(),
        fingerprint,
        epoch_losses,
    })
}

fn write_record(out: &mut impl Write, record: &LogRecord, path: &Path) -> Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n").at(path)
}

fn save_checkpoint(vars: &candle_nn::VarMap, out_dir: &Path, epoch: usize, keep: usize) -> Result<()> {
    let dir = out_dir.join(CHECKPOINT_DIR);
    if keep == 0 {
        return Ok(());
    }
    vars.save(dir.join(format!("epoch-{epoch:04}.safetensors")))?;
    let mut existing: Vec<PathBuf> = std::fs::read_dir(&dir)
        .at(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("epoch-")))
        .collect();
    existing.sort();
    let excess = existing.len().saturating_sub(keep);
    for old in &existing[..excess] {
        std::fs::remove_file(old).at(old)?;
    }
    Ok(())
}
