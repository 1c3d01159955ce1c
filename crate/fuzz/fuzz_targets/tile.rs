#![no_main]

use libfuzzer_sys::fuzz_target;
use openpixel::dataset::{decode_tile, Palette};

// first byte splits the input into image and label PNGs
fuzz_target!(|data: &[u8]| {
    let Some((&split, rest)) = data.split_first() else { return };
    let at = (split as usize * rest.len()) / 255;
    let (image, labels) = rest.split_at(at.min(rest.len()));
    if let Ok(tile) = decode_tile("fuzz", image, labels, &Palette::isprs()) {
        assert_eq!(tile.labels.dims(), (tile.height(), tile.width()));
    }
});
