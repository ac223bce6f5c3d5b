//! The promptable-segmentation adapter and the backends shipped with the
//! crate.

use std::collections::{HashMap, VecDeque};
use std::path::PathBuf;
use std::process::Command;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, LabelMap};
use crate::rle::Rle;

/// One point query.
#[derive(Debug, Clone, Copy)]
pub struct ProposalRequest<'a> {
    pub image_id: &'a str,
    pub image: &'a RgbImage,
    pub x: u32,
    pub y: u32,
    /// Ask for several candidate masks rather than one.
    pub multimask: bool,
    /// Upper bound on the number of masks wanted.
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub mask: BinaryMask,
    pub score: f32,
}

/// A zero-shot segmenter answering point prompts with scored masks.
///
/// Implementations must be deterministic for a given request if runs are
/// to be replayable.
pub trait PromptableSegmenter: Send + Sync {
    fn propose(&self, req: &ProposalRequest<'_>) -> Result<Vec<Proposal>>;

    /// Short identity string recorded in run fingerprints.
    fn describe(&self) -> String;
}

/// Returns the same proposals for every request.
#[derive(Debug, Clone)]
pub struct StaticBackend {
    pub proposals: Vec<Proposal>,
}

impl StaticBackend {
    pub fn new(proposals: impl IntoIterator<Item = (BinaryMask, f32)>) -> Self {
        Self {
            proposals: proposals
                .into_iter()
                .map(|(mask, score)| Proposal { mask, score })
                .collect(),
        }
    }
}

impl PromptableSegmenter for StaticBackend {
    fn propose(&self, _req: &ProposalRequest<'_>) -> Result<Vec<Proposal>> {
        Ok(self.proposals.clone())
    }

    fn describe(&self) -> String {
        format!("static:{}", self.proposals.len())
    }
}

/// Colour region growing from the prompt pixel: one mask per tolerance,
/// each the 4-connected component of pixels whose every channel lies within
/// the tolerance of the seed colour.
#[derive(Debug, Clone)]
pub struct FloodFillBackend {
    /// Increasing tolerances give increasingly coarse masks.
    pub tolerances: Vec<u8>,
}

impl Default for FloodFillBackend {
    fn default() -> Self {
        Self {
            tolerances: vec![40, 80, 120],
        }
    }
}

impl FloodFillBackend {
    pub fn component(image: &RgbImage, x: u32, y: u32, tolerance: u8) -> BinaryMask {
        let (w, h) = image.dimensions();
        let seed = image.get_pixel(x, y).0;
        let close = |px: [u8; 3]| {
            px.iter()
                .zip(&seed)
                .all(|(&a, &b)| a.abs_diff(b) <= tolerance)
        };
        let mut mask = BinaryMask::new(w, h);
        let mut queue = VecDeque::from([(x, y)]);
        mask.set(x, y, true);
        while let Some((cx, cy)) = queue.pop_front() {
            let neighbours = [
                (cx.wrapping_sub(1), cy),
                (cx + 1, cy),
                (cx, cy.wrapping_sub(1)),
                (cx, cy + 1),
            ];
            for (nx, ny) in neighbours {
                if nx < w && ny < h && !mask.get(nx, ny) && close(image.get_pixel(nx, ny).0) {
                    mask.set(nx, ny, true);
                    queue.push_back((nx, ny));
                }
            }
        }
        mask
    }
}

impl PromptableSegmenter for FloodFillBackend {
    fn propose(&self, req: &ProposalRequest<'_>) -> Result<Vec<Proposal>> {
        let wanted = if req.multimask { req.k } else { 1 };
        Ok(self
            .tolerances
            .iter()
            .take(wanted)
            .enumerate()
            .map(|(i, &tol)| Proposal {
                mask: Self::component(req.image, req.x, req.y, tol),
                // Tighter regions rank first.
                score: 1.0 - 0.1 * i as f32,
            })
            .collect())
    }

    fn describe(&self) -> String {
        format!("flood-fill:{:?}", self.tolerances)
    }
}

/// Answers from ground-truth label maps: the full mask of the class found
/// under the prompt point. Intended as an upper-bound oracle.
#[derive(Debug, Clone, Default)]
pub struct GroundTruthBackend {
    maps: HashMap<String, LabelMap>,
}

impl GroundTruthBackend {
    pub fn new(maps: HashMap<String, LabelMap>) -> Self {
        Self { maps }
    }
}

impl PromptableSegmenter for GroundTruthBackend {
    fn propose(&self, req: &ProposalRequest<'_>) -> Result<Vec<Proposal>> {
        let map = self
            .maps
            .get(req.image_id)
            .ok_or_else(|| Error::Backend(format!("no ground truth for image {}", req.image_id)))?;
        let class = map.get(req.x, req.y);
        Ok(vec![Proposal {
            mask: map.class_mask(class),
            score: 1.0,
        }])
    }

    fn describe(&self) -> String {
        "ground-truth".into()
    }
}

/// Wire format of [`CommandBackend`] replies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandReply {
    pub width: u32,
    pub height: u32,
    pub masks: Vec<CommandMask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandMask {
    pub rle: Rle,
    pub score: f32,
}

/// Out-of-process backend. For each request the program is run as
///
/// ```text
/// PROGRAM [ARGS...] --image IMAGE.png --x X --y Y --k K [--multimask]
/// ```
///
/// and must print a [`CommandReply`] as JSON on stdout. This is how a
/// Python-hosted checkpoint is bound without linking it into the process.
#[derive(Debug, Clone)]
pub struct CommandBackend {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl PromptableSegmenter for CommandBackend {
    fn propose(&self, req: &ProposalRequest<'_>) -> Result<Vec<Proposal>> {
        let dir = tempfile::tempdir().map_err(|e| Error::Backend(e.to_string()))?;
        let image_path = dir.path().join("image.png");
        req.image.save(&image_path)?;
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args)
            .arg("--image")
            .arg(&image_path)
            .args(["--x", &req.x.to_string(), "--y", &req.y.to_string()])
            .args(["--k", &req.k.to_string()]);
        if req.multimask {
            cmd.arg("--multimask");
        }
        let output = cmd
            .output()
            .map_err(|e| Error::Backend(format!("{}: {e}", self.program.display())))?;
        if !output.status.success() {
            return Err(Error::Backend(format!(
                "{} exited with {}: {}",
                self.program.display(),
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let reply: CommandReply = serde_json::from_slice(&output.stdout)
            .map_err(|e| Error::Backend(format!("malformed reply: {e}")))?;
        if (reply.width, reply.height) != req.image.dimensions() {
            return Err(Error::Backend(format!(
                "reply is {}x{}, image is {}x{}",
                reply.width,
                reply.height,
                req.image.width(),
                req.image.height()
            )));
        }
        reply
            .masks
            .into_iter()
            .map(|m| {
                Ok(Proposal {
                    mask: m.rle.decode(reply.width, reply.height)?,
                    score: m.score,
                })
            })
            .collect()
    }

    fn describe(&self) -> String {
        format!("command:{} {}", self.program.display(), self.args.join(" "))
    }
}
