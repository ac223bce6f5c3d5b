use super::ClassifierConfig;
use crate::error::{Error, Result};

/// Number of warmup steps for a run of `total_steps`: the warmup share of
/// epochs, rounded down to a whole step.
pub fn warmup_steps(total_steps: u64, cfg: &ClassifierConfig) -> u64 {
    total_steps * cfg.warmup_epochs as u64 / cfg.epochs as u64
}

/// Linear warmup from 0 to `base_lr`, then cosine decay to 0 at
/// `total_steps`.
pub fn lr_at(step: u64, total_steps: u64, cfg: &ClassifierConfig) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::contract("schedule needs at least one step"));
    }
    if step > total_steps {
        return Err(Error::contract(format!(
            "step {step} is past the end of a {total_steps}-step schedule"
        )));
    }
    let warmup = warmup_steps(total_steps, cfg);
    if step < warmup {
        return Ok(cfg.base_lr * step as f64 / warmup as f64);
    }
    let span = (total_steps - warmup) as f64;
    if span == 0.0 {
        return Ok(cfg.base_lr);
    }
    let progress = (step - warmup) as f64 / span;
    Ok(cfg.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}
