//! Small float-image toolkit shared by augmentation, classification and CAM
//! upsampling.

use image::RgbImage;

/// ImageNet channel statistics expected by the pretrained backbone.
pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Planar (CHW) RGB image with samples in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; 3 * width * height],
        }
    }

    pub fn from_rgb(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut out = Self::new(w, h);
        let plane = w * h;
        for (i, px) in img.pixels().enumerate() {
            for c in 0..3 {
                out.data[c * plane + i] = px[c] as f32 / 255.0;
            }
        }
        out
    }

    pub fn to_rgb(&self) -> RgbImage {
        let plane = self.width * self.height;
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let i = y as usize * self.width + x as usize;
            image::Rgb(std::array::from_fn(|c| {
                (self.data[c * plane + i] * 255.0).round().clamp(0.0, 255.0) as u8
            }))
        })
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.width * self.height;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn resize(&self, width: usize, height: usize) -> Self {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let mut out = Self::new(width, height);
        for c in 0..3 {
            let plane = resize_bilinear(self.plane(c), self.width, self.height, width, height);
            out.plane_mut(c).copy_from_slice(&plane);
        }
        out
    }

    /// Crop the `w`×`h` window whose top-left corner is (`x`, `y`).
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Self {
        let mut out = Self::new(w, h);
        for c in 0..3 {
            let src = self.plane(c);
            let dst = out.plane_mut(c);
            for row in 0..h {
                let s = (y + row) * self.width + x;
                dst[row * w..(row + 1) * w].copy_from_slice(&src[s..s + w]);
            }
        }
        out
    }

    /// Subtract the ImageNet mean and divide by its std, per channel.
    pub fn normalized(&self) -> Vec<f32> {
        let n = self.width * self.height;
        let mut out = self.data.clone();
        for c in 0..3 {
            for v in &mut out[c * n..(c + 1) * n] {
                *v = (*v - IMAGENET_MEAN[c]) / IMAGENET_STD[c];
            }
        }
        out
    }
}

/// Bilinear resampling with half-pixel centres (`align_corners = false`),
/// clamping at the borders.
pub fn resize_bilinear(src: &[f32], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f32> {
    let sx = sw as f64 / dw as f64;
    let sy = sh as f64 / dh as f64;
    let taps = |d: usize, scale: f64, n: usize| -> (usize, usize, f32) {
        let s = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, (s - i0 as f64) as f32)
    };
    let cols: Vec<_> = (0..dw).map(|x| taps(x, sx, sw)).collect();
    let mut out = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        let (y0, y1, fy) = taps(y, sy, sh);
        let r0 = &src[y0 * sw..(y0 + 1) * sw];
        let r1 = &src[y1 * sw..(y1 + 1) * sw];
        for &(x0, x1, fx) in &cols {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bottom = r1[x0] + (r1[x1] - r1[x0]) * fx;
            out.push(top + (bottom - top) * fy);
        }
    }
    out
}

pub fn rgb_to_hsv(r: f32, g: f32, b: f32) -> [f32; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta <= f32::EPSILON {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max <= f32::EPSILON { 0.0 } else { delta / max };
    [h, s, max]
}

/// Inverse of [`rgb_to_hsv`]; `h` is in turns.
pub fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = h6.floor() as i32 % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}
