//! Replays the checked-in fuzz corpus through every decoder.

use std::path::{Path, PathBuf};

use openpixel::dataset::{decode_tile, Palette};
use openpixel::experiment::{ExperimentConfig, Legend};
use openpixel::labels::LabelMap;
use openpixel::net::decode_checkpoint;
use openpixel::openset::{ProbabilityMap, SweepCurve};

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<(PathBuf, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).expect("text seed")
}

#[test]
fn checkpoint_seeds() {
    for (p, b) in seeds("checkpoint") {
        // full checkpoints are megabytes, so the seeds stop after the header
        assert!(decode_checkpoint::<f32>(&b).is_err(), "{}", p.display());
        assert!(decode_checkpoint::<f64>(&b).is_err(), "{}", p.display());
    }
}

#[test]
fn probmap_seeds() {
    for (p, b) in seeds("probmap") {
        match ProbabilityMap::decode(&b) {
            Ok(m) => assert_eq!(m.encode(), b),
            Err(_) => assert!(p.ends_with("header_only")),
        }
    }
}

#[test]
fn text_format_seeds() {
    for (p, b) in seeds("palette") {
        let palette = Palette::parse(text(&b)).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(Palette::parse(&palette.to_text()).unwrap(), palette);
    }
    for (p, b) in seeds("config") {
        let cfg = ExperimentConfig::from_toml(text(&b))
            .unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
    for (p, b) in seeds("sweep_csv") {
        let curve =
            SweepCurve::from_csv(text(&b)).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(curve.to_csv(), text(&b));
    }
    for (p, b) in seeds("legend_csv") {
        let legend = Legend::from_csv(text(&b)).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(legend.to_csv(), text(&b));
    }
}

#[test]
fn image_seeds() {
    for (p, b) in seeds("label_png") {
        let m = LabelMap::from_png_bytes(&b).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(
            LabelMap::from_png_bytes(&m.to_png_bytes().unwrap()).unwrap(),
            m
        );
    }
    for (p, b) in seeds("tile") {
        let (&split, rest) = b.split_first().unwrap();
        let at = (split as usize * rest.len()) / 255;
        let (image, labels) = rest.split_at(at);
        let tile = decode_tile("seed", image, labels, &Palette::isprs())
            .unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(tile.labels.dims(), (tile.height(), tile.width()));
    }
}
