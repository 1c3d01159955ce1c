use image::RgbImage;
use openpixel::dataset::{
    crop_patch, decode_tile, extract_training_patches, generate_synthetic, hold_out_validation,
    load_dataset, save_dataset, ClassScheme, LabeledTile, SynthConfig, CONTEXT_RADIUS, PATCH_SIZE,
};
use openpixel::labels::{LabelMap, IGNORE, UNKNOWN};
use proptest::prelude::*;

/// Source row for padded offset `i`: the sequence 0, 1, .., n-1, n-1, .., 0 repeated.
fn reflected(i: isize, n: usize) -> usize {
    let cycle: Vec<usize> = (0..n).chain((0..n).rev()).collect();
    cycle[i.rem_euclid(cycle.len() as isize) as usize]
}

fn image_strategy() -> impl Strategy<Value = RgbImage> {
    (1u32..40, 1u32..40, any::<u64>()).prop_map(|(w, h, seed)| {
        RgbImage::from_fn(w, h, |x, y| {
            let v = (x as u64 * 31 + y as u64 * 17 + seed) % 251;
            image::Rgb([v as u8, (v * 3 % 256) as u8, (v * 7 % 256) as u8])
        })
    })
}

proptest! {
    #[test]
    fn crop_matches_explicit_mirror_padding(img in image_strategy(), r in 0usize..40, c in 0usize..40) {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let (row, col) = (r % h, c % w);
        let patch = crop_patch(&img, row, col);
        prop_assert_eq!(patch.len(), 3 * PATCH_SIZE * PATCH_SIZE);
        for dy in 0..PATCH_SIZE {
            for dx in 0..PATCH_SIZE {
                let y = reflected(row as isize + dy as isize - CONTEXT_RADIUS as isize, h);
                let x = reflected(col as isize + dx as isize - CONTEXT_RADIUS as isize, w);
                let px = img.get_pixel(x as u32, y as u32).0;
                for ch in 0..3 {
                    prop_assert_eq!(patch[ch * PATCH_SIZE * PATCH_SIZE + dy * PATCH_SIZE + dx], px[ch]);
                }
            }
        }
        // the center of the window is the pixel itself
        let center = CONTEXT_RADIUS * PATCH_SIZE + CONTEXT_RADIUS;
        prop_assert_eq!(patch[center], img.get_pixel(col as u32, row as u32).0[0]);
    }

    #[test]
    fn validation_split_partitions_the_tiles(n in 2usize..40, frac in 0.01f64..0.99, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("t{i:02}")).collect();
        match hold_out_validation(&ids, frac, seed) {
            Ok((fit, val)) => {
                prop_assert_eq!(val.len(), (n as f64 * frac).ceil() as usize);
                prop_assert!(!fit.is_empty() && !val.is_empty());
                let mut all: Vec<String> = fit.iter().chain(&val).cloned().collect();
                all.sort();
                prop_assert_eq!(&all, &ids);
                prop_assert_eq!(hold_out_validation(&ids, frac, seed).unwrap(), (fit, val));
            }
            // only a fraction leaving one side empty may fail
            Err(_) => prop_assert!((n as f64 * frac).ceil() as usize >= n),
        }
    }

    #[test]
    fn extraction_never_emits_unknown_or_ignore_centers(seed in 0u64..1000, quota in 1usize..60, held in 0usize..3) {
        let synth = SynthConfig::five_class(1, 24, seed).with_classes(3);
        let mut tiles = generate_synthetic(&synth).unwrap();
        // sprinkle IGNORE pixels
        let tile = &mut tiles[0];
        for i in (0..tile.labels.data().len()).step_by(7) {
            tile.labels.data_mut()[i] = IGNORE;
        }
        let classes: Vec<String> = synth.classes.iter().map(|c| c.name.clone()).collect();
        let scheme = ClassScheme::leave_one_out(&classes, &classes[held]).unwrap();
        let patches = extract_training_patches(&tiles, &scheme, quota, seed).unwrap();
        let mut counts = [0usize; 2];
        for p in &patches {
            let truth = tiles[0].labels.get(p.center.0, p.center.1);
            prop_assert!(truth != IGNORE && truth as usize != held);
            prop_assert_eq!(scheme.train_id(truth), p.label);
            prop_assert_eq!(&p.pixels, &crop_patch(&tiles[0].image, p.center.0, p.center.1));
            counts[p.label as usize] += 1;
        }
        for (id, &n) in counts.iter().enumerate() {
            let available = tiles[0].labels.data().iter().filter(|&&d| scheme.train_id(d) == id as u8).count();
            prop_assert_eq!(n, quota.min(available));
        }
    }

    #[test]
    fn remapped_labels_stay_in_range(data in proptest::collection::vec(0u8..8, 1..200), held in 0usize..5) {
        let classes: Vec<String> = ["a", "b", "c", "d", "e"].map(String::from).to_vec();
        let scheme = ClassScheme::leave_one_out(&classes, &classes[held]).unwrap();
        let data: Vec<u8> = data.into_iter().map(|v| if v >= 5 { IGNORE } else { v }).collect();
        let labels = LabelMap::new(1, data.len(), data).unwrap();
        for &v in scheme.remap(&labels).data() {
            prop_assert!(v < 4 || v == UNKNOWN || v == IGNORE);
        }
    }
}

#[test]
fn synthetic_tiles_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthConfig::five_class(3, 40, 9);
    let tiles = generate_synthetic(&synth).unwrap();
    let palette = synth.palette().unwrap();
    save_dataset(dir.path(), &tiles, &palette).unwrap();
    let loaded = load_dataset(dir.path(), &palette).unwrap();
    assert_eq!(loaded, tiles);

    let t = &tiles[1];
    let path = dir.path().join("tiles").join(&t.id);
    let again: LabeledTile = decode_tile(
        &t.id,
        &std::fs::read(path.join("image.png")).unwrap(),
        &std::fs::read(path.join("labels.png")).unwrap(),
        &palette,
    )
    .unwrap();
    assert_eq!(&again, t);
}
