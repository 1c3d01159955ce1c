//! Binary parameter files.
//!
//! Layout, all integers u32 little-endian:
//!
//! ```text
//! magic      8 bytes  "OPXCKPT\0"
//! version    u32      1
//! dtype      u8       4 (f32) or 8 (f64), then 3 zero bytes
//! n_classes  u32
//! n_tensors  u32      14 (weights and bias of each layer)
//! shapes     per tensor: rank u32, then rank extents
//! payload    every tensor's values in order, little-endian
//! ```

use std::path::Path;

use super::{layer_shapes, Layer, NetworkParams, Precision, LAYER_NAMES};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

const MAGIC: &[u8; 8] = b"OPXCKPT\0";
const VERSION: u32 = 1;
const N_TENSORS: usize = 14;
/// Largest class count a checkpoint may declare.
const MAX_CLASSES: usize = 253;

fn bad(field: &'static str, detail: impl Into<String>) -> Error {
    Error::Checkpoint {
        field,
        detail: detail.into(),
    }
}

pub fn encode_checkpoint<T: Scalar>(params: &NetworkParams<T>) -> Vec<u8> {
    let tensors = params.tensors();
    let payload: usize = tensors.iter().map(|t| t.len() * T::BYTES).sum();
    let mut out = Vec::with_capacity(64 + N_TENSORS * 20 + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&[T::BYTES as u8, 0, 0, 0]);
    out.extend_from_slice(&(params.n_classes() as u32).to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in &tensors {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for t in &tensors {
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(bad(
                field,
                format!("file truncated at byte {}", self.bytes.len()),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, field: &'static str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().expect("4 bytes")) as usize)
    }
}

/// Decodes a checkpoint written at precision `T`. Nothing is returned unless
/// the whole file is consistent.
pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<NetworkParams<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(bad("magic", "not a network checkpoint"));
    }
    let version = r.u32("version")?;
    if version != VERSION as usize {
        return Err(bad("version", format!("unsupported version {version}")));
    }
    let dtype = r.take(4, "dtype")?;
    if dtype[0] as usize != T::BYTES || dtype[1..] != [0, 0, 0] {
        return Err(bad(
            "dtype",
            format!("file holds {}-byte values, expected {}", dtype[0], T::BYTES),
        ));
    }
    let n_classes = r.u32("n_classes")?;
    if !(2..=MAX_CLASSES).contains(&n_classes) {
        return Err(bad(
            "n_classes",
            format!("{n_classes} outside 2..={MAX_CLASSES}"),
        ));
    }
    let n_tensors = r.u32("n_tensors")?;
    if n_tensors != N_TENSORS {
        return Err(bad(
            "n_tensors",
            format!("expected {N_TENSORS}, got {n_tensors}"),
        ));
    }
    let expected: Vec<Vec<usize>> = layer_shapes(n_classes)
        .into_iter()
        .flat_map(|(w, b)| [w, b])
        .collect();
    for (i, want) in expected.iter().enumerate() {
        let rank = r.u32("shape")?;
        if rank != want.len() {
            return Err(bad(
                "shape",
                format!(
                    "{} tensor {i} has rank {rank}, expected {}",
                    LAYER_NAMES[i / 2],
                    want.len()
                ),
            ));
        }
        let mut got = Vec::with_capacity(rank);
        for _ in 0..rank {
            got.push(r.u32("shape")?);
        }
        if &got != want {
            return Err(bad(
                "shape",
                format!(
                    "{} tensor {i} is {got:?}, expected {want:?}",
                    LAYER_NAMES[i / 2]
                ),
            ));
        }
    }
    let payload: usize = expected
        .iter()
        .map(|s| s.iter().product::<usize>() * T::BYTES)
        .sum();
    let remaining = bytes.len() - r.pos;
    if remaining != payload {
        return Err(bad(
            "payload",
            format!("{remaining} bytes of values, expected {payload}"),
        ));
    }
    let mut tensors = Vec::with_capacity(N_TENSORS);
    for shape in expected {
        let n: usize = shape.iter().product();
        let data = r
            .take(n * T::BYTES, "payload")?
            .chunks_exact(T::BYTES)
            .map(T::read_le)
            .collect();
        let t = Tensor::new(shape, data)?;
        if !t.is_finite() {
            return Err(bad("payload", "non-finite parameter value"));
        }
        tensors.push(t);
    }
    let mut it = tensors.into_iter();
    let mut layers = Vec::with_capacity(7);
    while let (Some(weights), Some(bias)) = (it.next(), it.next()) {
        layers.push(Layer { weights, bias });
    }
    NetworkParams::from_layers(n_classes, layers)
}

/// Value precision declared by a checkpoint header.
pub fn checkpoint_precision(bytes: &[u8]) -> Result<Precision> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(bad("magic", "not a network checkpoint"));
    }
    r.u32("version")?;
    match r.take(4, "dtype")?[0] {
        4 => Ok(Precision::F32),
        8 => Ok(Precision::F64),
        b => Err(bad("dtype", format!("unsupported value size {b}"))),
    }
}

pub fn save_checkpoint<T: Scalar>(params: &NetworkParams<T>, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<NetworkParams<T>> {
    decode_checkpoint(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Loads a checkpoint and checks it classifies exactly `n_classes` classes.
pub fn load_checkpoint_for<T: Scalar>(path: &Path, n_classes: usize) -> Result<NetworkParams<T>> {
    let params = load_checkpoint(path)?;
    if params.n_classes() != n_classes {
        return Err(bad(
            "n_classes",
            format!(
                "{} holds a {}-class model, {n_classes} needed",
                path.display(),
                params.n_classes()
            ),
        ));
    }
    Ok(params)
}
