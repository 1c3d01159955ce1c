use std::path::Path;

use crate::error::{Error, Result};
use crate::labels::IGNORE;

const MAGIC: &[u8; 8] = b"OPXPROBS";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 * 4;
/// Tolerance on the per-pixel sum accepted when building or decoding a map.
const SUM_TOLERANCE: f32 = 1e-5;

/// Per-pixel class distributions, pixel-major (`H × W × classes`).
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    height: usize,
    width: usize,
    classes: usize,
    data: Vec<f32>,
}

impl ProbabilityMap {
    /// Checks that every value is in `[0, 1]` and every pixel sums to one.
    pub fn new(height: usize, width: usize, classes: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || classes == 0 {
            return Err(Error::Shape(format!(
                "probability map must be non-empty, got {height}×{width}×{classes}"
            )));
        }
        if classes >= IGNORE as usize {
            return Err(Error::Shape(format!(
                "{classes} classes exceed the label range"
            )));
        }
        let expected = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(classes))
            .ok_or_else(|| Error::Shape("probability map too large".into()))?;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "probability map {height}×{width}×{classes} needs {expected} values, got {}",
                data.len()
            )));
        }
        for (i, p) in data.chunks_exact(classes).enumerate() {
            if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidArgument(format!(
                    "pixel {i} has a value outside [0, 1]"
                )));
            }
            let sum: f32 = p.iter().sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::InvalidArgument(format!("pixel {i} sums to {sum}")));
            }
        }
        Ok(ProbabilityMap {
            height,
            width,
            classes,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        &self.data[(row * self.width + col) * self.classes..][..self.classes]
    }

    /// Distributions in row-major pixel order.
    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.classes)
    }

    /// Magic, version, height, width, classes (u32 LE), then f32 LE values.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        for v in [
            VERSION,
            self.height as u32,
            self.width as u32,
            self.classes as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let err = |d: String| Error::format("probability map", d);
        if bytes.len() < HEADER_LEN {
            return Err(err(format!(
                "{} bytes is shorter than the header",
                bytes.len()
            )));
        }
        if &bytes[..8] != MAGIC {
            return Err(err("bad magic".into()));
        }
        let word = |i: usize| {
            u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().expect("4 bytes")) as usize
        };
        if word(0) != VERSION as usize {
            return Err(err(format!("unsupported version {}", word(0))));
        }
        let (h, w, c) = (word(1), word(2), word(3));
        let payload = &bytes[HEADER_LEN..];
        let needed = h
            .checked_mul(w)
            .and_then(|v| v.checked_mul(c))
            .and_then(|v| v.checked_mul(4));
        if needed != Some(payload.len()) {
            return Err(err(format!(
                "payload of {} bytes does not fit {h}×{w}×{c}",
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        ProbabilityMap::new(h, w, c, data).map_err(|e| err(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let m = ProbabilityMap::new(1, 2, 2, vec![0.25, 0.75, 1.0, 0.0]).unwrap();
        let bytes = m.encode();
        assert_eq!(&bytes[..8], b"OPXPROBS");
        assert_eq!(ProbabilityMap::decode(&bytes).unwrap(), m);
        assert!(ProbabilityMap::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ProbabilityMap::decode(&bad).is_err());
    }

    #[test]
    fn rejects_invalid_distributions() {
        assert!(ProbabilityMap::new(1, 1, 2, vec![0.5, 0.6]).is_err());
        assert!(ProbabilityMap::new(1, 1, 2, vec![1.5, -0.5]).is_err());
        assert!(ProbabilityMap::new(1, 1, 2, vec![f32::NAN, 1.0]).is_err());
        assert!(ProbabilityMap::new(1, 1, 2, vec![1.0]).is_err());
        assert!(ProbabilityMap::new(0, 1, 2, vec![]).is_err());
    }

    #[test]
    fn huge_header_does_not_allocate() {
        let mut bytes = b"OPXPROBS".to_vec();
        for v in [1u32, u32::MAX, u32::MAX, u32::MAX] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(ProbabilityMap::decode(&bytes).is_err());
    }
}
