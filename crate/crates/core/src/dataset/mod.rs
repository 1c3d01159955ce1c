//! Tiles, class schemes for the leave-one-class-out protocol, patch
//! extraction, splitting and the synthetic tile generator.

mod io;
mod palette;
mod patches;
mod split;
mod synth;

use image::RgbImage;

pub use io::{
    decode_tile, load_dataset, load_image, load_labels, load_tile, save_dataset, save_tile,
};
pub use palette::{Palette, PaletteEntry};
pub use patches::{
    crop_patch, extract_training_patches, PatchSample, CONTEXT_RADIUS, PATCH_PIXELS, PATCH_SIZE,
};
pub use split::{
    hold_out_validation, patch_number, split_tiles, SplitPolicy, VAIHINGEN_TEST_PATCHES,
};
pub use synth::{generate_synthetic, ClassTexture, Pattern, SynthConfig};

use crate::error::{Error, Result};
use crate::labels::{LabelMap, IGNORE, UNKNOWN};

/// An image tile with per-pixel ground truth in dataset class ids.
///
/// Band order is whatever the source provides (Vaihingen tiles are
/// near-infrared, red, green); the three channels are treated as opaque.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledTile {
    pub id: String,
    pub image: RgbImage,
    pub labels: LabelMap,
}

impl LabeledTile {
    pub fn new(id: impl Into<String>, image: RgbImage, labels: LabelMap) -> Result<Self> {
        let id = id.into();
        if (image.height() as usize, image.width() as usize) != labels.dims() {
            return Err(Error::Shape(format!(
                "tile {id}: image is {}×{}, labels are {}×{}",
                image.height(),
                image.width(),
                labels.height(),
                labels.width()
            )));
        }
        Ok(LabeledTile { id, image, labels })
    }

    pub fn height(&self) -> usize {
        self.labels.height()
    }

    pub fn width(&self) -> usize {
        self.labels.width()
    }
}

/// Mapping between dataset classes and the contiguous ids the network is
/// trained on.
///
/// Known classes keep their dataset order when renumbered. The held-out class,
/// if any, maps to [`UNKNOWN`]; unlabeled pixels stay [`IGNORE`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassScheme {
    classes: Vec<String>,
    unknown: Option<usize>,
    to_train: Vec<u8>,
    known: Vec<usize>,
}

impl ClassScheme {
    /// Scheme with `unknown` withheld from training.
    pub fn leave_one_out(classes: &[String], unknown: &str) -> Result<Self> {
        let held = classes.iter().position(|c| c == unknown).ok_or_else(|| {
            Error::InvalidArgument(format!("no class named `{unknown}` in {classes:?}"))
        })?;
        Self::build(classes, Some(held))
    }

    /// Scheme where every dataset class is known.
    pub fn closed_set(classes: &[String]) -> Result<Self> {
        Self::build(classes, None)
    }

    fn build(classes: &[String], unknown: Option<usize>) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least two classes, got {classes:?}"
            )));
        }
        if classes.len() >= IGNORE as usize {
            return Err(Error::InvalidArgument(format!(
                "at most {} classes",
                IGNORE - 1
            )));
        }
        let mut to_train = Vec::with_capacity(classes.len());
        let mut known = Vec::new();
        for d in 0..classes.len() {
            if Some(d) == unknown {
                to_train.push(UNKNOWN);
            } else {
                to_train.push(known.len() as u8);
                known.push(d);
            }
        }
        Ok(ClassScheme {
            classes: classes.to_vec(),
            unknown,
            to_train,
            known,
        })
    }

    /// All dataset class names, indexed by dataset id.
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn n_known(&self) -> usize {
        self.known.len()
    }

    pub fn unknown_class(&self) -> Option<&str> {
        self.unknown.map(|d| self.classes[d].as_str())
    }

    pub fn unknown_dataset_id(&self) -> Option<usize> {
        self.unknown
    }

    /// Training id for a dataset id: a known id, [`UNKNOWN`], or [`IGNORE`]
    /// for anything outside the scheme.
    pub fn train_id(&self, dataset_id: u8) -> u8 {
        self.to_train
            .get(dataset_id as usize)
            .copied()
            .unwrap_or(IGNORE)
    }

    /// Inverse of [`Self::train_id`] on known classes.
    pub fn dataset_id(&self, train_id: u8) -> Option<usize> {
        self.known.get(train_id as usize).copied()
    }

    pub fn known_name(&self, train_id: u8) -> Option<&str> {
        self.dataset_id(train_id).map(|d| self.classes[d].as_str())
    }

    pub fn known_names(&self) -> Vec<&str> {
        self.known
            .iter()
            .map(|&d| self.classes[d].as_str())
            .collect()
    }

    /// Converts a dataset-id label map into training ids.
    pub fn remap(&self, labels: &LabelMap) -> LabelMap {
        labels.map(|v| self.train_id(v))
    }

    /// Stable identifier of the known set, used to name cached models.
    pub fn known_tag(&self) -> String {
        self.known_names().join("+")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five() -> Vec<String> {
        Palette::isprs().class_names()
    }

    #[test]
    fn car_held_out() {
        let s = ClassScheme::leave_one_out(&five(), "car").unwrap();
        assert_eq!(s.known_names(), vec!["street", "building", "grass", "tree"]);
        assert_eq!(s.n_known(), 4);
        assert_eq!(s.train_id(4), UNKNOWN);
        assert_eq!(s.unknown_class(), Some("car"));
    }

    #[test]
    fn every_class_can_be_held_out() {
        let classes = five();
        for (d, name) in classes.iter().enumerate() {
            let s = ClassScheme::leave_one_out(&classes, name).unwrap();
            assert_eq!(s.train_id(d as u8), UNKNOWN);
            let known: Vec<u8> = (0..5u8)
                .filter(|&i| i as usize != d)
                .map(|i| s.train_id(i))
                .collect();
            assert_eq!(known, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn remap_inverse_is_identity_on_knowns() {
        let s = ClassScheme::leave_one_out(&five(), "grass").unwrap();
        for d in (0..5u8).filter(|&d| d != 2) {
            assert_eq!(s.dataset_id(s.train_id(d)), Some(d as usize));
        }
        assert_eq!(s.train_id(IGNORE), IGNORE);
    }

    #[test]
    fn unknown_name_rejected() {
        assert!(ClassScheme::leave_one_out(&five(), "water").is_err());
    }

    #[test]
    fn closed_set_has_no_unknown() {
        let s = ClassScheme::closed_set(&five()).unwrap();
        assert_eq!(s.n_known(), 5);
        assert!(s.unknown_class().is_none());
        assert!((0..5u8).all(|d| s.train_id(d) == d));
    }

    #[test]
    fn remapped_maps_use_only_known_and_sentinels() {
        let s = ClassScheme::leave_one_out(&five(), "tree").unwrap();
        let gt = LabelMap::new(1, 7, vec![0, 1, 2, 3, 4, IGNORE, 9]).unwrap();
        let r = s.remap(&gt);
        assert!(r
            .data()
            .iter()
            .all(|&v| v < 4 || v == UNKNOWN || v == IGNORE));
        assert_eq!(r.data(), &[0, 1, 2, UNKNOWN, 3, IGNORE, IGNORE]);
    }
}
