//! Training-time augmentation, applied in a fixed order:
//! random resized crop, flips, colour jitter, affine warp, light Gaussian
//! blur, then (after normalisation) random erasing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::{hsv_to_rgb, rgb_to_hsv, FloatImage};
use crate::segmenter::blur::{convolve_separable, gaussian_kernel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColorJitter {
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
    pub hue: f32,
}

impl Default for ColorJitter {
    fn default() -> Self {
        Self {
            brightness: 0.20,
            contrast: 0.20,
            saturation: 0.15,
            hue: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AffineConfig {
    pub max_rotation_deg: f32,
    /// Fraction of width/height.
    pub max_translate: f32,
    pub scale_range: (f32, f32),
}

impl Default for AffineConfig {
    fn default() -> Self {
        Self {
            max_rotation_deg: 30.0,
            max_translate: 0.10,
            scale_range: (0.90, 1.10),
        }
    }
}

impl AffineConfig {
    pub fn identity() -> Self {
        Self {
            max_rotation_deg: 0.0,
            max_translate: 0.0,
            scale_range: (1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlurConfig {
    pub kernel_size: usize,
    pub sigma_range: (f32, f32),
}

impl Default for BlurConfig {
    fn default() -> Self {
        Self {
            kernel_size: 3,
            sigma_range: (0.001, 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EraseConfig {
    pub p: f32,
    pub area_range: (f32, f32),
    pub aspect_range: (f32, f32),
}

impl Default for EraseConfig {
    fn default() -> Self {
        Self {
            p: 0.3,
            area_range: (0.02, 0.10),
            aspect_range: (0.3, 3.3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    pub crop_scale_range: (f32, f32),
    /// Aspect-ratio range of the random crop window.
    pub crop_ratio_range: (f32, f32),
    pub crop_size: usize,
    pub hflip_p: f32,
    pub vflip_p: f32,
    pub jitter: ColorJitter,
    pub affine: AffineConfig,
    pub blur: BlurConfig,
    pub erase: EraseConfig,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            crop_scale_range: (0.8, 1.0),
            crop_ratio_range: (3.0 / 4.0, 4.0 / 3.0),
            crop_size: 384,
            hflip_p: 0.5,
            vflip_p: 0.5,
            jitter: ColorJitter::default(),
            affine: AffineConfig::default(),
            blur: BlurConfig::default(),
            erase: EraseConfig::default(),
        }
    }
}

impl AugmentationConfig {
    /// Deterministic resize to `crop_size`; every random step disabled.
    pub fn identity(crop_size: usize) -> Self {
        Self {
            crop_scale_range: (1.0, 1.0),
            crop_size,
            hflip_p: 0.0,
            vflip_p: 0.0,
            jitter: ColorJitter {
                brightness: 0.0,
                contrast: 0.0,
                saturation: 0.0,
                hue: 0.0,
            },
            affine: AffineConfig::identity(),
            blur: BlurConfig {
                kernel_size: 1,
                sigma_range: (0.001, 0.001),
            },
            erase: EraseConfig {
                p: 0.0,
                ..EraseConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f32| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::config(format!("{name} = {p} is not a probability")))
            }
        };
        let range = |name: &str, (lo, hi): (f32, f32), positive: bool| {
            if !(lo <= hi) || (positive && lo <= 0.0) {
                Err(Error::config(format!("{name} = ({lo}, {hi}) is not a valid range")))
            } else {
                Ok(())
            }
        };
        prob("hflip_p", self.hflip_p)?;
        prob("vflip_p", self.vflip_p)?;
        prob("erase.p", self.erase.p)?;
        range("crop_scale_range", self.crop_scale_range, true)?;
        if self.crop_scale_range.1 > 1.0 {
            return Err(Error::config("crop_scale_range cannot exceed 1.0"));
        }
        range("crop_ratio_range", self.crop_ratio_range, true)?;
        range("affine.scale_range", self.affine.scale_range, true)?;
        range("blur.sigma_range", self.blur.sigma_range, true)?;
        range("erase.area_range", self.erase.area_range, true)?;
        range("erase.aspect_range", self.erase.aspect_range, true)?;
        if self.crop_size == 0 {
            return Err(Error::config("crop_size must be positive"));
        }
        if self.blur.kernel_size % 2 == 0 {
            return Err(Error::config("blur.kernel_size must be odd"));
        }
        let j = &self.jitter;
        for (name, v) in [
            ("jitter.brightness", j.brightness),
            ("jitter.contrast", j.contrast),
            ("jitter.saturation", j.saturation),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(format!("{name} = {v} must be in [0, 1)")));
            }
        }
        if !(0.0..=0.5).contains(&j.hue) {
            return Err(Error::config(format!("jitter.hue = {} must be in [0, 0.5]", j.hue)));
        }
        if !(0.0..=180.0).contains(&self.affine.max_rotation_deg)
            || !(0.0..=1.0).contains(&self.affine.max_translate)
        {
            return Err(Error::config("affine rotation/translation out of range"));
        }
        if self.erase.area_range.1 > 1.0 {
            return Err(Error::config("erase.area_range cannot exceed 1.0"));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f32, f32)) -> f32 {
    lo + (hi - lo) * rng.random::<f32>()
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f32, f32)) -> f32 {
    uniform(rng, (lo.ln(), hi.ln())).exp()
}

/// Steps (a)–(e): returns a `crop_size`² image with samples in [0, 1].
pub fn augment_rgb(image: &FloatImage, cfg: &AugmentationConfig, seed: u64) -> Result<FloatImage> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = cfg.crop_size;

    let mut img = if image.width.min(image.height) < size {
        // Upscale small inputs so the crop window never exceeds the source.
        let scale = size as f64 / image.width.min(image.height) as f64;
        let (w, h) = (
            ((image.width as f64 * scale).round() as usize).max(size),
            ((image.height as f64 * scale).round() as usize).max(size),
        );
        log::debug!("image {}x{} below crop size {size}; resizing to {w}x{h} first", image.width, image.height);
        image.resize(w, h)
    } else {
        image.clone()
    };

    // (a) random resized crop
    let (x, y, w, h) = crop_window(&mut rng, img.width, img.height, cfg);
    img = img.crop(x, y, w, h).resize(size, size);

    // (b) flips
    if rng.random::<f32>() < cfg.hflip_p {
        hflip(&mut img);
    }
    if rng.random::<f32>() < cfg.vflip_p {
        vflip(&mut img);
    }

    // (c) colour jitter
    color_jitter(&mut img, &cfg.jitter, &mut rng);

    // (d) affine
    let a = &cfg.affine;
    let angle = uniform(&mut rng, (-a.max_rotation_deg, a.max_rotation_deg));
    let max_dx = a.max_translate * img.width as f32;
    let max_dy = a.max_translate * img.height as f32;
    let tx = uniform(&mut rng, (-max_dx, max_dx)).round();
    let ty = uniform(&mut rng, (-max_dy, max_dy)).round();
    let scale = uniform(&mut rng, a.scale_range);
    if angle != 0.0 || tx != 0.0 || ty != 0.0 || scale != 1.0 {
        img = affine(&img, angle, (tx, ty), scale);
    }

    // (e) gaussian blur
    let sigma = uniform(&mut rng, cfg.blur.sigma_range);
    let radius = cfg.blur.kernel_size / 2;
    if radius > 0 {
        let kernel = gaussian_kernel(sigma as f64, radius);
        for c in 0..3 {
            let (w, h) = (img.width, img.height);
            let out = convolve_separable(img.plane(c), w, h, &kernel);
            img.plane_mut(c).copy_from_slice(&out);
        }
    }

    Ok(img)
}

/// Full augmentation: steps (a)–(e), ImageNet normalisation, then (f)
/// random erasing. Returns a CHW tensor of `crop_size`².
pub fn augment(image: &FloatImage, cfg: &AugmentationConfig, seed: u64) -> Result<Vec<f32>> {
    let img = augment_rgb(image, cfg, seed)?;
    let mut tensor = img.normalized();
    // Separate stream so erasing does not perturb the earlier draws.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    if rng.random::<f32>() < cfg.erase.p {
        random_erase(&mut tensor, img.width, img.height, &cfg.erase, &mut rng);
    }
    Ok(tensor)
}

fn crop_window(rng: &mut ChaCha8Rng, width: usize, height: usize, cfg: &AugmentationConfig) -> (usize, usize, usize, usize) {
    let area = (width * height) as f32;
    for _ in 0..10 {
        let target = area * uniform(rng, cfg.crop_scale_range);
        let ratio = log_uniform(rng, cfg.crop_ratio_range);
        let w = (target * ratio).sqrt().round() as usize;
        let h = (target / ratio).sqrt().round() as usize;
        if w > 0 && h > 0 && w <= width && h <= height {
            let x = rng.random_range(0..=width - w);
            let y = rng.random_range(0..=height - h);
            return (x, y, w, h);
        }
    }
    // Central crop clamped to the allowed aspect range.
    let in_ratio = width as f32 / height as f32;
    let (lo, hi) = cfg.crop_ratio_range;
    let (w, h) = if in_ratio < lo {
        (width, ((width as f32 / lo).round() as usize).clamp(1, height))
    } else if in_ratio > hi {
        (((height as f32 * hi).round() as usize).clamp(1, width), height)
    } else {
        (width, height)
    };
    ((width - w) / 2, (height - h) / 2, w, h)
}

pub fn hflip(img: &mut FloatImage) {
    let w = img.width;
    for c in 0..3 {
        for row in img.plane_mut(c).chunks_mut(w) {
            row.reverse();
        }
    }
}

pub fn vflip(img: &mut FloatImage) {
    let (w, h) = (img.width, img.height);
    for c in 0..3 {
        let plane = img.plane_mut(c);
        for y in 0..h / 2 {
            let (top, bottom) = plane.split_at_mut((h - 1 - y) * w);
            top[y * w..(y + 1) * w].swap_with_slice(&mut bottom[..w]);
        }
    }
}

fn color_jitter(img: &mut FloatImage, cfg: &ColorJitter, rng: &mut ChaCha8Rng) {
    let n = img.width * img.height;
    let brightness = uniform(rng, (1.0 - cfg.brightness, 1.0 + cfg.brightness));
    let contrast = uniform(rng, (1.0 - cfg.contrast, 1.0 + cfg.contrast));
    let saturation = uniform(rng, (1.0 - cfg.saturation, 1.0 + cfg.saturation));
    let hue = uniform(rng, (-cfg.hue, cfg.hue));

    let gray = |d: &[f32], i: usize| 0.299 * d[i] + 0.587 * d[n + i] + 0.114 * d[2 * n + i];

    if brightness != 1.0 {
        for v in &mut img.data {
            *v = (*v * brightness).clamp(0.0, 1.0);
        }
    }
    if contrast != 1.0 {
        let mean = (0..n).map(|i| gray(&img.data, i)).sum::<f32>() / n as f32;
        for v in &mut img.data {
            *v = (mean + (*v - mean) * contrast).clamp(0.0, 1.0);
        }
    }
    if saturation != 1.0 {
        for i in 0..n {
            let g = gray(&img.data, i);
            for c in 0..3 {
                let v = &mut img.data[c * n + i];
                *v = (g + (*v - g) * saturation).clamp(0.0, 1.0);
            }
        }
    }
    if hue != 0.0 {
        for i in 0..n {
            let [h, s, v] = rgb_to_hsv(img.data[i], img.data[n + i], img.data[2 * n + i]);
            let [r, g, b] = hsv_to_rgb(h + hue, s, v);
            img.data[i] = r;
            img.data[n + i] = g;
            img.data[2 * n + i] = b;
        }
    }
}

/// Rotate by `angle_deg` about the centre, scale, then translate; bilinear
/// sampling with black fill outside the source.
fn affine(img: &FloatImage, angle_deg: f32, (tx, ty): (f32, f32), scale: f32) -> FloatImage {
    let (w, h) = (img.width, img.height);
    let (cx, cy) = ((w as f32 - 1.0) * 0.5, (h as f32 - 1.0) * 0.5);
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let mut out = FloatImage::new(w, h);
    for c in 0..3 {
        let src = img.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                // Inverse map: undo translation, rotation and scale.
                let dx = x as f32 - cx - tx;
                let dy = y as f32 - cy - ty;
                let sx = (cos * dx + sin * dy) / scale + cx;
                let sy = (-sin * dx + cos * dy) / scale + cy;
                dst[y * w + x] = sample_zero(src, w, h, sx, sy);
            }
        }
    }
    out
}

fn sample_zero(src: &[f32], w: usize, h: usize, x: f32, y: f32) -> f32 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let at = |xi: f32, yi: f32| -> f32 {
        if xi < 0.0 || yi < 0.0 || xi >= w as f32 || yi >= h as f32 {
            0.0
        } else {
            src[yi as usize * w + xi as usize]
        }
    };
    let mut v = at(x0, y0) * (1.0 - fx) * (1.0 - fy);
    if fx > 0.0 {
        v += at(x0 + 1.0, y0) * fx * (1.0 - fy);
    }
    if fy > 0.0 {
        v += at(x0, y0 + 1.0) * (1.0 - fx) * fy;
        if fx > 0.0 {
            v += at(x0 + 1.0, y0 + 1.0) * fx * fy;
        }
    }
    v
}

fn random_erase(tensor: &mut [f32], w: usize, h: usize, cfg: &EraseConfig, rng: &mut ChaCha8Rng) {
    let area = (w * h) as f32;
    for _ in 0..10 {
        let target = area * uniform(rng, cfg.area_range);
        let ratio = log_uniform(rng, cfg.aspect_range);
        let eh = (target * ratio).sqrt().round() as usize;
        let ew = (target / ratio).sqrt().round() as usize;
        if eh == 0 || ew == 0 || eh >= h || ew >= w {
            continue;
        }
        let y0 = rng.random_range(0..=h - eh);
        let x0 = rng.random_range(0..=w - ew);
        let n = w * h;
        for c in 0..3 {
            for y in y0..y0 + eh {
                tensor[c * n + y * w + x0..c * n + y * w + x0 + ew].fill(0.0);
            }
        }
        return;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(w: usize, h: usize) -> FloatImage {
        let mut img = FloatImage::new(w, h);
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    img.plane_mut(c)[y * w + x] = ((x * 7 + y * 3 + c * 11) % 97) as f32 / 96.0;
                }
            }
        }
        img
    }

    #[test]
    fn defaults_follow_the_training_recipe() {
        let cfg = AugmentationConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.crop_size, 384);
        assert_eq!(cfg.crop_scale_range, (0.8, 1.0));
        assert_eq!(cfg.erase.p, 0.3);
        assert_eq!(cfg.blur.sigma_range, (0.001, 2.0));
        assert_eq!(cfg.affine.max_rotation_deg, 30.0);
    }

    #[test]
    fn identity_config_only_resizes() {
        let src = gradient_image(40, 40);
        let cfg = AugmentationConfig::identity(40);
        assert_eq!(augment_rgb(&src, &cfg, 3).unwrap(), src);

        let cfg = AugmentationConfig::identity(20);
        assert_eq!(augment_rgb(&src, &cfg, 3).unwrap(), src.resize(20, 20));
    }

    #[test]
    fn same_seed_same_output() {
        let src = gradient_image(50, 37);
        let cfg = AugmentationConfig {
            crop_size: 32,
            erase: EraseConfig {
                p: 1.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let a = augment(&src, &cfg, 99).unwrap();
        let b = augment(&src, &cfg, 99).unwrap();
        assert_eq!(a.len(), 3 * 32 * 32);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = augment(&src, &cfg, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn hflip_twice_is_identity() {
        let src = gradient_image(24, 24);
        let cfg = AugmentationConfig {
            hflip_p: 1.0,
            ..AugmentationConfig::identity(24)
        };
        let once = augment_rgb(&src, &cfg, 1).unwrap();
        assert_ne!(once, src);
        assert_eq!(augment_rgb(&once, &cfg, 2).unwrap(), src);
    }

    #[test]
    fn vflip_twice_is_identity() {
        let src = gradient_image(7, 5);
        let mut img = src.clone();
        vflip(&mut img);
        assert_ne!(img, src);
        vflip(&mut img);
        assert_eq!(img, src);
    }

    #[test]
    fn small_images_are_upscaled_first() {
        let src = gradient_image(10, 16);
        let cfg = AugmentationConfig {
            crop_size: 32,
            ..Default::default()
        };
        let out = augment_rgb(&src, &cfg, 5).unwrap();
        assert_eq!((out.width, out.height), (32, 32));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = AugmentationConfig::default();
        cfg.hflip_p = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = AugmentationConfig::default();
        cfg.crop_scale_range = (0.9, 0.8);
        assert!(cfg.validate().is_err());
        let mut cfg = AugmentationConfig::default();
        cfg.crop_size = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn erasing_zeroes_a_rectangle_in_normalized_space() {
        let src = gradient_image(64, 64);
        let cfg = AugmentationConfig {
            erase: EraseConfig {
                p: 1.0,
                ..Default::default()
            },
            ..AugmentationConfig::identity(64)
        };
        let t = augment(&src, &cfg, 11).unwrap();
        let zeros = t.iter().filter(|&&v| v == 0.0).count();
        let area = zeros / 3;
        assert!(area as f32 >= 0.015 * 4096.0 && area as f32 <= 0.11 * 4096.0, "{area}");
    }
}
