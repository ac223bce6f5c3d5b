//! Separable Gaussian smoothing with symmetric (edge-repeating) reflection
//! at the borders.

use image::RgbImage;

use crate::error::{Error, Result};

/// Normalised 1-D Gaussian taps for offsets `-radius..=radius`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as i64;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Kernel radius used for a given sigma: ⌈4σ⌉.
pub fn radius_for(sigma: f64) -> usize {
    (4.0 * sigma).ceil() as usize
}

/// Map an out-of-range index back into `0..n` by mirror reflection
/// (`d c b a | a b c d | d c b a`), periodic for any overshoot.
#[inline]
pub fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

pub fn convolve_rows(src: &[f32], w: usize, h: usize, kernel: &[f64]) -> Vec<f32> {
    let r = (kernel.len() / 2) as i64;
    let mut out = vec![0f32; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0f64;
            for (k, &t) in kernel.iter().enumerate() {
                acc += t * row[reflect(x as i64 + k as i64 - r, w)] as f64;
            }
            out[y * w + x] = acc as f32;
        }
    }
    out
}

pub fn convolve_cols(src: &[f32], w: usize, h: usize, kernel: &[f64]) -> Vec<f32> {
    let r = (kernel.len() / 2) as i64;
    let mut out = vec![0f32; w * h];
    let mut acc = vec![0f64; w];
    for y in 0..h {
        acc.fill(0.0);
        for (k, &t) in kernel.iter().enumerate() {
            let sy = reflect(y as i64 + k as i64 - r, h);
            for (a, &v) in acc.iter_mut().zip(&src[sy * w..(sy + 1) * w]) {
                *a += t * v as f64;
            }
        }
        for (o, a) in out[y * w..(y + 1) * w].iter_mut().zip(&acc) {
            *o = *a as f32;
        }
    }
    out
}

/// Horizontal pass followed by vertical pass.
pub fn convolve_separable(src: &[f32], w: usize, h: usize, kernel: &[f64]) -> Vec<f32> {
    convolve_cols(&convolve_rows(src, w, h, kernel), w, h, kernel)
}

/// Blur a planar image of `channels` planes, each `w`×`h`.
pub fn gaussian_blur(planes: &[f32], w: usize, h: usize, sigma: f64) -> Result<Vec<f32>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::contract(format!("blur sigma must be positive, got {sigma}")));
    }
    let plane = w * h;
    if plane == 0 || planes.len() % plane != 0 {
        return Err(Error::contract("blur input is not a whole number of planes"));
    }
    let kernel = gaussian_kernel(sigma, radius_for(sigma));
    Ok(planes
        .chunks(plane)
        .flat_map(|p| convolve_separable(p, w, h, &kernel))
        .collect())
}

/// Blur an 8-bit RGB image, rounding back to 8 bits.
pub fn gaussian_blur_rgb(img: &RgbImage, sigma: f64) -> Result<RgbImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let n = w * h;
    let mut planes = vec![0f32; 3 * n];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            planes[c * n + i] = px[c] as f32;
        }
    }
    let out = gaussian_blur(&planes, w, h, sigma)?;
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        image::Rgb(std::array::from_fn(|c| out[c * n + i].round().clamp(0.0, 255.0) as u8))
    }))
}
