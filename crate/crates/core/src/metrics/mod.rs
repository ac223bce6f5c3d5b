//! IoU, best-case selection over candidate masks and true-positive
//! restricted mIoU.

mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use report::{render_table, ClassRow, EvaluationReport, ReportSummary, REPORT_CSV, REPORT_JSON, REPORT_MD};

use crate::catalog::ClassCatalog;
use crate::classifier::PredictionResult;
use crate::dataset::LabelVector;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::segmenter::MaskProposalSet;
use crate::ClassId;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub class_id: ClassId,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn between(class_id: ClassId, pred: &BinaryMask, gt: &BinaryMask) -> Result<Self> {
        if pred.dims() != gt.dims() {
            return Err(Error::contract(format!(
                "prediction is {:?} but ground truth is {:?}",
                pred.dims(),
                gt.dims()
            )));
        }
        let mut c = Self { class_id, ..Default::default() };
        for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                _ => {}
            }
        }
        Ok(c)
    }

    /// Both-empty counts as a perfect match.
    pub fn iou(&self) -> f64 {
        let denom = self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            self.tp as f64 / denom as f64
        }
    }

    pub fn add(&mut self, other: &Self) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    Ok(ConfusionCounts::between(0, pred, gt)?.iou())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub image_id: String,
    pub class_id: ClassId,
    pub chosen_mask_index: usize,
    pub iou: f64,
    pub counts: ConfusionCounts,
}

/// The candidate with the highest IoU against `gt`; ties keep the lower
/// index, i.e. the better backend score.
pub fn best_case_select(proposals: &MaskProposalSet, gt: &BinaryMask) -> Result<EvalRecord> {
    let mut best: Option<(usize, ConfusionCounts, f64)> = None;
    for (i, mask) in proposals.masks.iter().enumerate() {
        let counts = ConfusionCounts::between(proposals.class_id, mask, gt)?;
        let v = counts.iou();
        if best.as_ref().map_or(true, |b| v > b.2) {
            best = Some((i, counts, v));
        }
    }
    let (chosen_mask_index, counts, iou) = best.ok_or(Error::EmptyProposal { class_id: proposals.class_id })?;
    Ok(EvalRecord {
        image_id: proposals.image_id.clone(),
        class_id: proposals.class_id,
        chosen_mask_index,
        iou,
        counts,
    })
}

/// Per-class result of an mIoU aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    pub class_id: ClassId,
    pub n_records: usize,
    pub counts: ConfusionCounts,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiouResult {
    pub per_class: Vec<ClassIou>,
    pub miou: f64,
}

impl MiouResult {
    /// Number of classes the mean runs over.
    pub fn n_classes(&self) -> usize {
        self.per_class.len()
    }
}

/// Sum counts per class over all records, divide once per class, then take
/// the unweighted mean over classes that have at least one record.
pub fn miou(records: &[EvalRecord], catalog: &ClassCatalog, exclude_background: bool) -> Result<MiouResult> {
    let mut acc: BTreeMap<ClassId, (usize, ConfusionCounts)> = BTreeMap::new();
    for r in records {
        if !catalog.contains(r.class_id as u32) {
            return Err(Error::UnknownClassId {
                id: r.class_id as u32,
                context: format!("evaluation record for {}", r.image_id),
            });
        }
        if exclude_background && r.class_id == catalog.background_id() {
            continue;
        }
        let e = acc.entry(r.class_id).or_insert_with(|| {
            (0, ConfusionCounts { class_id: r.class_id, ..Default::default() })
        });
        e.0 += 1;
        e.1.add(&r.counts);
    }
    if acc.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let per_class: Vec<ClassIou> = acc
        .into_iter()
        .map(|(class_id, (n_records, counts))| ClassIou {
            class_id,
            n_records,
            counts,
            iou: counts.iou(),
        })
        .collect();
    let miou = per_class.iter().map(|c| c.iou).sum::<f64>() / per_class.len() as f64;
    Ok(MiouResult { per_class, miou })
}

/// Predicted classes that are also positive in the ground truth, ascending.
pub fn tp_filter(prediction: &PredictionResult, gt_labels: &LabelVector) -> BTreeSet<ClassId> {
    prediction
        .predicted_classes
        .iter()
        .copied()
        .filter(|&c| (c as usize) < gt_labels.len() && gt_labels.get(c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cam::PointPrompt;
    use crate::catalog::ClassEntry;

    fn catalog(n: usize) -> ClassCatalog {
        let mut classes = vec![ClassEntry { id: 0, name: "background".into() }];
        classes.extend((1..n).map(|i| ClassEntry { id: i as ClassId, name: format!("c{i}") }));
        ClassCatalog::new(classes, 0).unwrap()
    }

    fn set(masks: Vec<BinaryMask>) -> MaskProposalSet {
        let n = masks.len();
        MaskProposalSet {
            image_id: "img".into(),
            class_id: 1,
            prompt: PointPrompt { class_id: 1, x: 0, y: 0, activation: 1.0 },
            masks,
            scores: vec![1.0; n],
        }
    }

    #[test]
    fn iou_conventions() {
        let full = BinaryMask::filled(8, 8, true);
        let left = BinaryMask::from_fn(8, 8, |x, _| x < 4);
        let right = BinaryMask::from_fn(8, 8, |x, _| x >= 4);
        assert_eq!(iou(&full, &full).unwrap(), 1.0);
        assert_eq!(iou(&left, &right).unwrap(), 0.0);
        assert_eq!(iou(&left, &full).unwrap(), 0.5);
        assert_eq!(iou(&BinaryMask::new(3, 3), &BinaryMask::new(3, 3)).unwrap(), 1.0);
        assert_eq!(iou(&BinaryMask::new(3, 3), &BinaryMask::filled(3, 3, true)).unwrap(), 0.0);
        assert!(matches!(iou(&BinaryMask::new(3, 3), &BinaryMask::new(3, 4)), Err(Error::Contract(_))));
    }

    #[test]
    fn best_case_tie_goes_to_lower_index() {
        // gt has 10 pixels; proposals hit 2, 7 and 7 of them exactly
        let gt = BinaryMask::from_fn(10, 1, |_, _| true);
        let hit = |k: u32| BinaryMask::from_fn(10, 1, move |x, _| x < k);
        let r = best_case_select(&set(vec![hit(2), hit(7), hit(7)]), &gt).unwrap();
        assert_eq!(r.chosen_mask_index, 1);
        assert!((r.iou - 0.7).abs() < 1e-12);

        let r = best_case_select(&set(vec![hit(3)]), &gt).unwrap();
        assert_eq!(r.chosen_mask_index, 0);

        let empty = BinaryMask::new(4, 4);
        let r = best_case_select(&set(vec![empty.clone()]), &empty).unwrap();
        assert_eq!(r.iou, 1.0);

        assert!(matches!(best_case_select(&set(vec![]), &gt), Err(Error::EmptyProposal { .. })));
    }

    fn record(class_id: ClassId, tp: u64, fp: u64, fn_: u64) -> EvalRecord {
        let counts = ConfusionCounts { class_id, tp, fp, fn_ };
        EvalRecord {
            image_id: "x".into(),
            class_id,
            chosen_mask_index: 0,
            iou: counts.iou(),
            counts,
        }
    }

    #[test]
    fn miou_two_class_mean_and_background() {
        let cat = catalog(3);
        let r = miou(&[record(1, 4, 6, 0), record(2, 6, 4, 0)], &cat, true).unwrap();
        assert!((r.miou - 0.5).abs() < 1e-12);
        assert_eq!(r.n_classes(), 2);

        let with_bg = [record(0, 0, 1, 0), record(1, 1, 0, 0)];
        assert_eq!(miou(&with_bg, &cat, true).unwrap().miou, 1.0);
        assert_eq!(miou(&with_bg, &cat, false).unwrap().miou, 0.5);
        assert!(matches!(miou(&[], &cat, true), Err(Error::EmptyEvaluation)));
        assert!(matches!(miou(&[record(0, 1, 0, 0)], &cat, true), Err(Error::EmptyEvaluation)));
        assert!(miou(&[record(9, 1, 0, 0)], &cat, true).is_err());
    }

    #[test]
    fn sums_before_dividing() {
        // per-image IoUs 1.0 and 0.1 average to 0.55, summed counts give 11/101
        let cat = catalog(2);
        let r = miou(&[record(1, 1, 0, 0), record(1, 10, 90, 0)], &cat, true).unwrap();
        assert!((r.miou - 11.0 / 101.0).abs() < 1e-12);
    }

    #[test]
    fn tp_filter_is_an_intersection() {
        let pred = |c: Vec<ClassId>| PredictionResult {
            image_id: "a".into(),
            probabilities: vec![],
            predicted_classes: c,
        };
        let gt = LabelVector::from_classes(10, [2, 7, 9]).unwrap();
        assert_eq!(tp_filter(&pred(vec![1, 2, 7]), &gt), BTreeSet::from([2, 7]));
        assert!(tp_filter(&pred(vec![1, 3]), &gt).is_empty());
        assert_eq!(tp_filter(&pred(vec![2, 7, 9]), &gt), BTreeSet::from([2, 7, 9]));
    }
}
