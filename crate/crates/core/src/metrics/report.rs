//! JSON, CSV and Markdown renderings of an evaluation.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{miou, EvalRecord};
use crate::catalog::ClassCatalog;
use crate::error::{IoContext, Result};
use crate::ClassId;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "per_class.csv";
pub const REPORT_MD: &str = "report.md";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class_id: ClassId,
    pub name: String,
    pub n_records: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    /// Row label, e.g. `original/multi`.
    pub setting: String,
    #[serde(rename = "mIoU")]
    pub miou: f64,
    /// Classes the mean is taken over.
    pub n_classes: usize,
    pub n_images: usize,
    /// Proposal sets, one per evaluated (image, class) pair.
    pub n_mask_proposals: usize,
    /// Individual candidate masks across all proposal sets.
    pub n_candidate_masks: usize,
    /// `n_mask_proposals / n_images`.
    pub masks_per_image: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub summary: ReportSummary,
    pub classes: Vec<ClassRow>,
}

impl EvaluationReport {
    /// `n_images` counts every evaluated image, including those that
    /// contributed no records; `n_candidate_masks` is the total mask count
    /// behind `records`.
    pub fn build(
        setting: &str,
        records: &[EvalRecord],
        catalog: &ClassCatalog,
        n_images: usize,
        n_candidate_masks: usize,
    ) -> Result<Self> {
        let result = miou(records, catalog, true)?;
        let classes = result
            .per_class
            .iter()
            .map(|c| ClassRow {
                class_id: c.class_id,
                name: catalog.name(c.class_id).unwrap_or_default().to_string(),
                n_records: c.n_records,
                iou: c.iou,
            })
            .collect();
        let n_mask_proposals = result.per_class.iter().map(|c| c.n_records).sum();
        Ok(Self {
            summary: ReportSummary {
                setting: setting.to_string(),
                miou: result.miou,
                n_classes: result.n_classes(),
                n_images,
                n_mask_proposals,
                n_candidate_masks,
                masks_per_image: if n_images == 0 { 0.0 } else { n_mask_proposals as f64 / n_images as f64 },
            },
            classes,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class_id,name,n_records,iou\n");
        for c in &self.classes {
            let _ = writeln!(out, "{},{},{},{:.6}", c.class_id, csv_field(&c.name), c.n_records, c.iou);
        }
        out
    }

    /// Most frequent classes first; ties by class id.
    pub fn top_classes(&self, n: usize) -> Vec<&ClassRow> {
        let mut rows: Vec<&ClassRow> = self.classes.iter().collect();
        rows.sort_by(|a, b| b.n_records.cmp(&a.n_records).then(a.class_id.cmp(&b.class_id)));
        rows.truncate(n);
        rows
    }

    /// One-row results table: setting, the ten most frequent classes, mIoU
    /// and proposal counts.
    pub fn to_markdown(&self) -> String {
        render_table(std::slice::from_ref(self))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).at(dir)?;
        let p = dir.join(REPORT_JSON);
        std::fs::write(&p, serde_json::to_vec_pretty(self)?).at(&p)?;
        let p = dir.join(REPORT_CSV);
        std::fs::write(&p, self.to_csv()).at(&p)?;
        let p = dir.join(REPORT_MD);
        std::fs::write(&p, self.to_markdown()).at(&p)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let p = dir.join(REPORT_JSON);
        Ok(serde_json::from_slice(&std::fs::read(&p).at(&p)?)?)
    }
}

/// Several settings as rows over the first report's top-10 classes.
pub fn render_table(reports: &[EvaluationReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    let columns = first.top_classes(10);
    let mut out = String::from("| Setting |");
    for c in &columns {
        let _ = write!(out, " {} |", c.name);
    }
    out.push_str(" mIoU | Proposals | Masks | Masks/img |\n|---|");
    out.push_str(&"---:|".repeat(columns.len() + 4));
    out.push('\n');
    for r in reports {
        let _ = write!(out, "| {} |", r.summary.setting);
        for c in &columns {
            match r.classes.iter().find(|row| row.class_id == c.class_id) {
                Some(row) => {
                    let _ = write!(out, " {:.2} |", row.iou);
                }
                None => out.push_str(" - |"),
            }
        }
        let s = &r.summary;
        let _ = writeln!(
            out,
            " {:.2} | {} | {} | {:.2} |",
            s.miou, s.n_mask_proposals, s.n_candidate_masks, s.masks_per_image
        );
    }
    out.push_str(
        "\nmIoU is the unweighted mean over evaluated classes (background excluded) of per-class IoU \
         from counts summed across images. A prediction and ground truth that are both empty score 1.0.\n",
    );
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ClassEntry;
    use crate::metrics::ConfusionCounts;

    fn report() -> EvaluationReport {
        let cat = ClassCatalog::new(
            vec![
                ClassEntry { id: 0, name: "background".into() },
                ClassEntry { id: 1, name: "rice, white".into() },
                ClassEntry { id: 2, name: "egg".into() },
            ],
            0,
        )
        .unwrap();
        let rec = |image: &str, class_id, tp, fp| EvalRecord {
            image_id: image.into(),
            class_id,
            chosen_mask_index: 0,
            iou: 0.0,
            counts: ConfusionCounts { class_id, tp, fp, fn_: 0 },
        };
        let records = [rec("a", 1, 1, 1), rec("b", 2, 1, 0), rec("b", 1, 1, 1)];
        EvaluationReport::build("original/multi", &records, &cat, 2, 9).unwrap()
    }

    #[test]
    fn summary_counts() {
        let r = report();
        assert_eq!(r.summary.n_mask_proposals, 3);
        assert_eq!(r.summary.n_candidate_masks, 9);
        assert_eq!(r.summary.masks_per_image, 1.5);
        assert!((r.summary.miou - 0.75).abs() < 1e-12);
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["summary"]["mIoU"].is_number());
    }

    #[test]
    fn csv_and_markdown() {
        let r = report();
        let csv = r.to_csv();
        assert_eq!(csv.lines().next(), Some("class_id,name,n_records,iou"));
        assert!(csv.contains("1,\"rice, white\",2,0.500000"));
        let md = r.to_markdown();
        // the more frequent class comes first
        assert!(md.find("rice").unwrap() < md.find("egg").unwrap());
        assert!(md.contains("| original/multi | 0.50 | 1.00 | 0.75 | 3 | 9 | 1.50 |"));
    }
}
