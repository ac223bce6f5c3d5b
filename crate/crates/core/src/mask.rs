//! Binary masks and class-id label maps, plus the single-channel palette
//! PNG format used for ground truth and for exported annotations.

use std::io::Cursor;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::ClassId;

/// Row-major H×W binary mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::contract(format!(
                "mask of {width}x{height} needs {} pixels, got {}",
                width as usize * height as usize,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn count(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }
}

/// Row-major H×W map of class ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    ids: Vec<ClassId>,
}

impl LabelMap {
    pub fn filled(width: u32, height: u32, id: ClassId) -> Self {
        Self {
            width,
            height,
            ids: vec![id; width as usize * height as usize],
        }
    }

    pub fn from_ids(width: u32, height: u32, ids: Vec<ClassId>) -> Result<Self> {
        if ids.len() != width as usize * height as usize {
            return Err(Error::contract(format!(
                "label map of {width}x{height} needs {} pixels, got {}",
                width as usize * height as usize,
                ids.len()
            )));
        }
        Ok(Self { width, height, ids })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn ids(&self) -> &[ClassId] {
        &self.ids
    }

    pub fn get(&self, x: u32, y: u32) -> ClassId {
        self.ids[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, id: ClassId) {
        self.ids[y as usize * self.width as usize + x as usize] = id;
    }

    /// Binary mask of the pixels labelled `id`.
    pub fn class_mask(&self, id: ClassId) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.ids.iter().map(|&v| v == id).collect(),
        }
    }

    /// Paint `mask` with `id`.
    pub fn paint(&mut self, mask: &BinaryMask, id: ClassId) -> Result<()> {
        if mask.dims() != self.dims() {
            return Err(Error::contract("painted mask does not match label map dims"));
        }
        for (dst, &on) in self.ids.iter_mut().zip(mask.bits()) {
            if on {
                *dst = id;
            }
        }
        Ok(())
    }

    /// Decode a single-channel PNG whose raw sample values are class ids.
    ///
    /// Accepts indexed (palette) and grayscale images at any bit depth; the
    /// palette itself is ignored.
    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let decode_err = |message: String| Error::Decode {
            what: "palette mask".into(),
            message,
        };
        let mut decoder = png::Decoder::new(Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::IDENTITY);
        let mut reader = decoder.read_info().map_err(|e| decode_err(e.to_string()))?;
        let (color, depth) = reader.output_color_type();
        if !matches!(color, png::ColorType::Indexed | png::ColorType::Grayscale) {
            return Err(decode_err(format!(
                "expected a single-channel image, found {color:?}"
            )));
        }
        let info = reader.info();
        let (width, height) = (info.width, info.height);
        let pixels = width as usize * height as usize;
        // Guard against absurd headers before allocating.
        if pixels == 0 || pixels > (1 << 28) {
            return Err(decode_err(format!("unsupported dimensions {width}x{height}")));
        }
        let mut buf = vec![0u8; reader.output_buffer_size()];
        let frame = reader
            .next_frame(&mut buf)
            .map_err(|e| decode_err(e.to_string()))?;
        let line = frame.line_size;
        let bits = depth as usize;
        let mut ids = Vec::with_capacity(pixels);
        for row in buf.chunks(line).take(height as usize) {
            match bits {
                16 => ids.extend(
                    row.chunks_exact(2)
                        .take(width as usize)
                        .map(|p| u16::from_be_bytes([p[0], p[1]])),
                ),
                8 => ids.extend(row.iter().take(width as usize).map(|&v| v as ClassId)),
                1 | 2 | 4 => {
                    let per_byte = 8 / bits;
                    let mask = (1u8 << bits) - 1;
                    for x in 0..width as usize {
                        let byte = row[x / per_byte];
                        let shift = 8 - bits * (x % per_byte + 1);
                        ids.push(((byte >> shift) & mask) as ClassId);
                    }
                }
                other => return Err(decode_err(format!("unsupported bit depth {other}"))),
            }
        }
        if ids.len() != pixels {
            return Err(decode_err("truncated image data".into()));
        }
        Ok(Self { width, height, ids })
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).at(path)?;
        Self::decode_png(&bytes).map_err(|e| match e {
            Error::Decode { message, .. } => Error::Decode {
                what: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    /// Encode as an 8-bit indexed PNG with a fixed visualisation palette.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        if let Some(&id) = self.ids.iter().find(|&&id| id > 255) {
            return Err(Error::contract(format!(
                "class id {id} does not fit an 8-bit palette mask"
            )));
        }
        let mut out = Vec::new();
        {
            let mut encoder = png::Encoder::new(&mut out, self.width, self.height);
            encoder.set_color(png::ColorType::Indexed);
            encoder.set_depth(png::BitDepth::Eight);
            encoder.set_palette(palette());
            let mut writer = encoder.write_header().map_err(png_write_err)?;
            let data: Vec<u8> = self.ids.iter().map(|&id| id as u8).collect();
            writer.write_image_data(&data).map_err(png_write_err)?;
        }
        Ok(out)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).at(path)
    }
}

fn png_write_err(e: png::EncodingError) -> Error {
    Error::Decode {
        what: "palette mask (encode)".into(),
        message: e.to_string(),
    }
}

/// 256-entry RGB palette: black background followed by well-spread hues.
fn palette() -> Vec<u8> {
    let mut p = Vec::with_capacity(256 * 3);
    p.extend_from_slice(&[0, 0, 0]);
    for i in 1..256u32 {
        // Golden-angle hue walk keeps neighbouring ids visually distinct.
        let h = (i as f32 * 137.507_76) % 360.0;
        let [r, g, b] = crate::imageops::hsv_to_rgb(h / 360.0, 0.65, 0.95);
        p.extend_from_slice(&[(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8]);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_png_round_trip_keeps_raw_ids() {
        let ids: Vec<ClassId> = (0..12).map(|i| (i * 23 % 104) as ClassId).collect();
        let map = LabelMap::from_ids(4, 3, ids).unwrap();
        let bytes = map.encode_png().unwrap();
        assert_eq!(LabelMap::decode_png(&bytes).unwrap(), map);
    }

    #[test]
    fn grayscale_png_is_read_as_ids() {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, 3, 1);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[0, 7, 103]).unwrap();
        }
        let map = LabelMap::decode_png(&out).unwrap();
        assert_eq!(map.ids(), &[0, 7, 103]);
    }

    #[test]
    fn rgb_png_is_rejected() {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, 1, 1);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[1, 2, 3]).unwrap();
        }
        assert!(matches!(LabelMap::decode_png(&out), Err(Error::Decode { .. })));
    }

    #[test]
    fn wide_ids_cannot_be_exported() {
        let map = LabelMap::filled(2, 2, 300);
        assert!(map.encode_png().is_err());
    }

    #[test]
    fn garbage_bytes_fail_cleanly() {
        assert!(LabelMap::decode_png(b"not a png").is_err());
        assert!(LabelMap::decode_png(&[]).is_err());
    }
}
