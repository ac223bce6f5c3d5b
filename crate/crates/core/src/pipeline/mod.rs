//! Batch orchestration (classify, localise, prompt, segment, evaluate) and
//! the on-disk run artifacts the review service reads.

mod review;
mod run;

pub use review::{
    export, history, latest_decisions, list_runs, load_item, load_proposals, queue, record_decision, Decision,
    DecisionInput, ExportSummary, FieldError, QueueItem, ReviewDecision, ReviewItem, RunSummary, DECISIONS_FILE,
};
pub use run::{
    run_batch, ClassSkip, Conservation, SkipReason, ImageOutcome, ImageStatus, RunConfig, RunManifest, RunMode, RunOutcome,
    RunTiming, CAMS_DIR, CATALOG_FILE, IMAGES_DIR, MANIFEST_FILE, PROPOSALS_DIR, RECORDS_FILE, REPORT_DIR,
    TIMING_FILE,
};

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Resolve a run directory by id under `root`, refusing ids that could
/// escape it.
pub fn run_dir(root: &Path, run_id: &str) -> Result<PathBuf> {
    if !is_safe_component(run_id) {
        return Err(Error::contract(format!("invalid run id `{run_id}`")));
    }
    let dir = root.join(run_id);
    if !dir.join(MANIFEST_FILE).is_file() {
        return Err(Error::contract(format!("no run `{run_id}` under {}", root.display())));
    }
    Ok(dir)
}

/// Non-empty path component with no separators or dot-only names.
pub fn is_safe_component(s: &str) -> bool {
    !s.is_empty()
        && s != "."
        && s != ".."
        && !s.contains(['/', '\\', '\0'])
}
