use image::RgbImage;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ClassScheme, LabeledTile};
use crate::error::{Error, Result};
use crate::labels::mirror_index;

/// Side of the square context window classified by its center pixel.
pub const PATCH_SIZE: usize = 55;
/// Pixels between the center and the window edge.
pub const CONTEXT_RADIUS: usize = PATCH_SIZE / 2;
/// Samples in one channel-major 3×55×55 patch.
pub const PATCH_PIXELS: usize = 3 * PATCH_SIZE * PATCH_SIZE;

/// A context window labeled by the training id of its center pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchSample {
    /// Channel-major 3×55×55 samples.
    pub pixels: Vec<u8>,
    pub label: u8,
    pub tile_id: String,
    /// `(row, col)` of the center in the source tile.
    pub center: (usize, usize),
}

/// The 55×55 window centered on `(row, col)`, mirror-padded at the borders,
/// as channel-major samples.
pub fn crop_patch(image: &RgbImage, row: usize, col: usize) -> Vec<u8> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let raw = image.as_raw();
    let mut out = vec![0u8; PATCH_PIXELS];
    let plane = PATCH_SIZE * PATCH_SIZE;
    for dy in 0..PATCH_SIZE {
        let y = mirror_index(row as isize + dy as isize - CONTEXT_RADIUS as isize, h);
        for dx in 0..PATCH_SIZE {
            let x = mirror_index(col as isize + dx as isize - CONTEXT_RADIUS as isize, w);
            let src = &raw[(y * w + x) * 3..][..3];
            for (c, &v) in src.iter().enumerate() {
                out[c * plane + dy * PATCH_SIZE + dx] = v;
            }
        }
    }
    out
}

/// Class-balanced patch extraction.
///
/// For each known class, up to `quota` center pixels are drawn without
/// replacement from all pixels of that class across `tiles`. Centers whose
/// ground truth is the held-out class or IGNORE are never emitted; context
/// windows may still contain such pixels away from the center.
pub fn extract_training_patches(
    tiles: &[LabeledTile],
    scheme: &ClassScheme,
    quota: usize,
    seed: u64,
) -> Result<Vec<PatchSample>> {
    if quota == 0 {
        return Err(Error::InvalidArgument(
            "patch quota must be at least 1".into(),
        ));
    }
    let n_known = scheme.n_known();
    let mut candidates: Vec<Vec<(u32, u32, u32)>> = vec![Vec::new(); n_known];
    for (t, tile) in tiles.iter().enumerate() {
        let w = tile.width();
        for (i, &d) in tile.labels.data().iter().enumerate() {
            let id = scheme.train_id(d);
            if (id as usize) < n_known {
                candidates[id as usize].push((t as u32, (i / w) as u32, (i % w) as u32));
            }
        }
    }
    if let Some(empty) = candidates.iter().position(Vec::is_empty) {
        return Err(Error::Protocol(format!(
            "known class `{}` has no pixels in the training tiles",
            scheme.known_name(empty as u8).unwrap_or("?")
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (class, pool) in candidates.iter().enumerate() {
        let take = quota.min(pool.len());
        for i in index::sample(&mut rng, pool.len(), take) {
            let (t, r, c) = pool[i];
            let tile = &tiles[t as usize];
            out.push(PatchSample {
                pixels: crop_patch(&tile.image, r as usize, c as usize),
                label: class as u8,
                tile_id: tile.id.clone(),
                center: (r as usize, c as usize),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Palette;
    use crate::labels::{LabelMap, IGNORE};

    fn tile(id: &str, h: usize, w: usize, labels: Vec<u8>) -> LabeledTile {
        let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
            image::Rgb([x as u8, y as u8, (x * y) as u8])
        });
        LabeledTile::new(id, img, LabelMap::new(h, w, labels).unwrap()).unwrap()
    }

    fn scheme(unknown: &str) -> ClassScheme {
        ClassScheme::leave_one_out(&Palette::isprs().class_names(), unknown).unwrap()
    }

    #[test]
    fn crop_matches_mirror_padding() {
        let t = tile("a", 10, 12, vec![0; 120]);
        let p = crop_patch(&t.image, 1, 11);
        for (dy, dx) in [(0usize, 0usize), (27, 27), (54, 54), (26, 30)] {
            let y = mirror_index(1 + dy as isize - 27, 10);
            let x = mirror_index(11 + dx as isize - 27, 12);
            let px = t.image.get_pixel(x as u32, y as u32).0;
            for c in 0..3 {
                assert_eq!(p[c * PATCH_SIZE * PATCH_SIZE + dy * PATCH_SIZE + dx], px[c]);
            }
        }
    }

    #[test]
    fn unknown_only_tile_is_a_protocol_error() {
        let t = tile("a", 4, 4, vec![4; 16]);
        let r = extract_training_patches(&[t], &scheme("car"), 10, 0);
        assert!(matches!(r, Err(Error::Protocol(_))));
    }

    #[test]
    fn balanced_quota_and_no_unknown_centers() {
        let mut labels = Vec::new();
        for i in 0..400 {
            labels.push(match i % 7 {
                0 | 1 => 0,
                2 => 1,
                3 => 2,
                4 => 3,
                5 => 4,
                _ => IGNORE,
            });
        }
        let t = tile("a", 20, 20, labels);
        let s = scheme("car");
        let patches = extract_training_patches(std::slice::from_ref(&t), &s, 30, 9).unwrap();
        assert_eq!(patches.len(), 120);
        for class in 0..4u8 {
            assert_eq!(patches.iter().filter(|p| p.label == class).count(), 30);
        }
        for p in &patches {
            let gt = t.labels.get(p.center.0, p.center.1);
            assert_eq!(s.train_id(gt), p.label);
            assert_eq!(p.pixels, crop_patch(&t.image, p.center.0, p.center.1));
        }
        assert_eq!(extract_training_patches(&[t], &s, 30, 9).unwrap(), patches);
    }

    #[test]
    fn quota_larger_than_available_takes_everything() {
        let t = tile("a", 2, 2, vec![0, 1, 2, 3]);
        let p = extract_training_patches(&[t], &scheme("car"), 100, 1).unwrap();
        assert_eq!(p.len(), 4);
    }
}
