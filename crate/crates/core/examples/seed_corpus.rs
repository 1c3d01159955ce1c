//! Regenerates the fuzz corpus seeds: `cargo run -p openpixel --example seed_corpus`.

use openpixel::dataset::{generate_synthetic, ClassScheme, Palette, SynthConfig};
use openpixel::experiment::{ExperimentConfig, Legend};
use openpixel::labels::{LabelMap, UNKNOWN};
use openpixel::net::{encode_checkpoint, init_network};
use openpixel::openset::{sweep_thresholds, ProbabilityMap, RejectRule};
use std::path::Path;

fn put(target: &str, name: &str, bytes: &[u8]) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join(name), bytes).unwrap();
}

fn png(img: &image::RgbImage) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

fn main() {
    let header = |b: &[u8]| b[..28 + 14 * 20].to_vec();
    put(
        "checkpoint",
        "f32_header",
        &header(&encode_checkpoint(&init_network::<f32>(2, 0).unwrap())),
    );
    put(
        "checkpoint",
        "f64_header",
        &header(&encode_checkpoint(&init_network::<f64>(5, 0).unwrap())),
    );
    put("checkpoint", "magic_only", b"OPXCKPT\0");

    let pm = ProbabilityMap::new(
        2,
        2,
        3,
        vec![0.2, 0.3, 0.5, 1.0, 0.0, 0.0, 0.25, 0.25, 0.5, 0.6, 0.4, 0.0],
    )
    .unwrap();
    put("probmap", "2x2x3", &pm.encode());
    put("probmap", "header_only", &pm.encode()[..20]);

    put("palette", "isprs", Palette::isprs().to_text().as_bytes());
    put(
        "palette",
        "two_classes",
        b"# comment\n0,0,0,water\n255,255,255,land\n",
    );

    let lm = LabelMap::new(3, 4, vec![0, 1, 2, 3, UNKNOWN, 0, 1, 2, 3, 255, 0, 1]).unwrap();
    put("label_png", "3x4", &lm.to_png_bytes().unwrap());

    let synth = SynthConfig::five_class(1, 8, 1);
    let tile = &generate_synthetic(&synth).unwrap()[0];
    let palette = synth.palette().unwrap();
    let labels = image::RgbImage::from_fn(8, 8, |x, y| {
        image::Rgb(
            palette
                .color(tile.labels.get(y as usize, x as usize))
                .unwrap(),
        )
    });
    let (a, b) = (png(&tile.image), png(&labels));
    let mut t = vec![(a.len() * 255 / (a.len() + b.len())) as u8];
    // pick the split byte so the boundary lands exactly between the two PNGs
    for s in 0..=255u8 {
        if (s as usize * (a.len() + b.len())) / 255 == a.len() {
            t[0] = s;
            break;
        }
    }
    t.extend(&a);
    t.extend(&b);
    put("tile", "8x8", &t);

    put(
        "config",
        "default",
        ExperimentConfig::default().to_toml().as_bytes(),
    );
    put(
        "config",
        "desk",
        &std::fs::read("configs/desk.toml").unwrap(),
    );
    put(
        "config",
        "vaihingen",
        &std::fs::read("configs/vaihingen.toml").unwrap(),
    );

    let classes: Vec<String> = palette.class_names();
    let scheme = ClassScheme::leave_one_out(&classes[..4], "grass").unwrap();
    let truth = LabelMap::new(2, 2, vec![0, 1, 2, 3]).unwrap();
    let curve = sweep_thresholds(
        &[(&pm, &truth)],
        &scheme,
        &[0.0, 0.5, 1.0],
        RejectRule::AtLeast,
    )
    .unwrap();
    put("sweep_csv", "three_points", curve.to_csv().as_bytes());

    let scheme = ClassScheme::leave_one_out(&classes, "car").unwrap();
    put(
        "legend_csv",
        "car_held_out",
        Legend::for_scheme(&scheme, &Palette::isprs())
            .unwrap()
            .to_csv()
            .as_bytes(),
    );
}
