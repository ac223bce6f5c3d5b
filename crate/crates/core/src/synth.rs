//! Synthetic coloured-shapes dataset: three food-stand-in classes on a
//! textured grey background, written in the native dataset layout.

use std::path::Path;

use image::{Rgb, RgbImage};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{ClassCatalog, ClassEntry};
use crate::dataset::Split;
use crate::error::{IoContext, Result};
use crate::fingerprint::sample_seed;
use crate::mask::LabelMap;
use crate::ClassId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub size: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_train: 200,
            n_test: 50,
            size: 128,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Disc,
    Square,
    Triangle,
}

const SHAPES: [(Shape, &str, [u8; 3]); 3] = [
    (Shape::Disc, "red_disc", [220, 40, 40]),
    (Shape::Square, "green_square", [40, 200, 40]),
    (Shape::Triangle, "blue_triangle", [40, 40, 220]),
];

pub const BACKGROUND: [u8; 3] = [128, 128, 128];

/// Shapes stay within ±NOISE of their base colour per channel.
const NOISE: i16 = 8;

/// The background is textured with independent per-channel noise, so a
/// colour flood fill started on it breaks into small fragments while one
/// started on a shape recovers exactly that shape.
const BACKGROUND_NOISE: i16 = 40;

/// Base colour of each shape class, indexed by class id minus one.
pub fn class_colours() -> [[u8; 3]; 3] {
    SHAPES.map(|s| s.2)
}

pub fn synth_catalog() -> ClassCatalog {
    let mut classes = vec![ClassEntry {
        id: 0,
        name: "background".into(),
    }];
    classes.extend(SHAPES.iter().enumerate().map(|(i, s)| ClassEntry {
        id: i as ClassId + 1,
        name: s.1.into(),
    }));
    ClassCatalog::new(classes, 0).expect("static catalog is valid")
}

fn inside(shape: Shape, cx: f32, cy: f32, r: f32, x: f32, y: f32) -> bool {
    let (dx, dy) = (x - cx, y - cy);
    match shape {
        Shape::Disc => dx * dx + dy * dy <= r * r,
        Shape::Square => dx.abs() <= r * 0.85 && dy.abs() <= r * 0.85,
        // apex up, base at cy + r
        Shape::Triangle => dy <= r && dy >= -r && dx.abs() <= (dy + r) * 0.9,
    }
}

/// One image and its label map. Each image holds one to three shapes of
/// distinct classes that do not touch.
pub fn generate_image(seed: u64, size: u32) -> (RgbImage, LabelMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = LabelMap::filled(size, size, 0);
    let n = rng.random_range(1..=3usize);
    let picks = sample(&mut rng, SHAPES.len(), n);
    let s = size as f32;
    let mut placed: Vec<(f32, f32, f32)> = Vec::new();
    for k in picks.iter() {
        let (shape, _, _) = SHAPES[k];
        for _ in 0..50 {
            let r = rng.random_range(0.16 * s..0.26 * s);
            let cx = rng.random_range(r + 1.0..s - r - 1.0);
            let cy = rng.random_range(r + 1.0..s - r - 1.0);
            let clear = placed
                .iter()
                .all(|&(px, py, pr)| ((px - cx).powi(2) + (py - cy).powi(2)).sqrt() > pr + r + 4.0);
            if clear {
                placed.push((cx, cy, r));
                for y in 0..size {
                    for x in 0..size {
                        if inside(shape, cx, cy, r, x as f32 + 0.5, y as f32 + 0.5) {
                            map.set(x, y, k as ClassId + 1);
                        }
                    }
                }
                break;
            }
        }
    }
    let img = RgbImage::from_fn(size, size, |x, y| {
        let (base, amp) = match map.get(x, y) {
            0 => (BACKGROUND, BACKGROUND_NOISE),
            c => (SHAPES[c as usize - 1].2, NOISE),
        };
        let mut px = [0u8; 3];
        for (o, b) in px.iter_mut().zip(base) {
            *o = (b as i16 + rng.random_range(-amp..=amp)).clamp(0, 255) as u8;
        }
        Rgb(px)
    });
    (img, map)
}

/// Write the train and test splits plus `category.txt` under `root`.
pub fn write_dataset(root: &Path, cfg: &SynthConfig) -> Result<()> {
    let cat = root.join("category.txt");
    std::fs::create_dir_all(root).at(root)?;
    std::fs::write(&cat, synth_catalog().to_text()).at(&cat)?;
    for (split, n) in [(Split::Train, cfg.n_train), (Split::Test, cfg.n_test)] {
        let images = root.join("images").join(split.as_str());
        let masks = root.join("masks").join(split.as_str());
        for d in [&images, &masks] {
            std::fs::create_dir_all(d).at(d)?;
        }
        for i in 0..n {
            let id = format!("{split}_{i:04}");
            let (img, map) = generate_image(sample_seed(cfg.seed, 0, &id), cfg.size);
            img.save(images.join(format!("{id}.png")))?;
            map.write_png(&masks.join(format!("{id}.png")))?;
        }
    }
    Ok(())
}
