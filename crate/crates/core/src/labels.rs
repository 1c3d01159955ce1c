//! Per-pixel label grids and the reserved label values.

use crate::error::{Error, Result};

/// Pixel rejected by the open-set layer, or ground truth of the held-out class
/// after remapping.
pub const UNKNOWN: u8 = 255;
/// Pixel excluded from training and evaluation.
pub const IGNORE: u8 = 254;

/// Row-major H×W grid of 8-bit labels.
///
/// Used both for ground truth (dataset class ids or remapped training ids)
/// and for predictions (training ids plus [`UNKNOWN`]).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

/// Final per-pixel decision: a known training id or [`UNKNOWN`].
pub type PredictionMap = LabelMap;

impl LabelMap {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "label map must be non-empty, got {height}×{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "label map {height}×{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(LabelMap {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Self {
        LabelMap {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.data[row * self.width + col] = value;
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(u8) -> u8) -> Self {
        LabelMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn count(&self, value: u8) -> usize {
        self.data.iter().filter(|&&v| v == value).count()
    }

    /// Encodes the raw label values as an 8-bit grayscale PNG.
    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let img =
            image::GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
                .expect("dimensions checked at construction");
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| Error::format("label png", e.to_string()))?;
        Ok(out.into_inner())
    }

    /// Decodes a grayscale PNG holding raw label values.
    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| Error::format("label png", e.to_string()))?;
        if img.color() != image::ColorType::L8 {
            return Err(Error::format(
                "label png",
                format!("expected 8-bit grayscale, got {:?}", img.color()),
            ));
        }
        let g = img.into_luma8();
        LabelMap::new(g.height() as usize, g.width() as usize, g.into_raw())
    }
}

/// Folds an index that may lie outside `0..n` back inside by repeated
/// edge-inclusive reflection (`-1 → 0`, `n → n-1`), so any `n ≥ 1` works.
pub fn mirror_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}
