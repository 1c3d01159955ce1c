use std::path::Path;
use std::process::{Command, Output};

fn openpixel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_openpixel"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = openpixel(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = openpixel(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

const TINY: &str = r#"
name = "tiny"
validation_fraction = 0.3
inference_batch = 512

[split]
policy = "fraction"
test_fraction = 0.25

[train]
epochs = 1
pool_per_class = 40
patches_per_class = 20
batch_size = 16
"#;

fn setup(dir: &Path) -> (String, String) {
    let data = dir.join("data");
    ok(&[
        "synth-gen",
        "--out",
        data.to_str().unwrap(),
        "--tiles",
        "4",
        "--size",
        "48",
        "--classes",
        "3",
        "--seed",
        "5",
    ]);
    let cfg = dir.join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    (
        data.to_str().unwrap().to_string(),
        cfg.to_str().unwrap().to_string(),
    )
}

#[test]
fn rotate_then_render() {
    let dir = tempfile::tempdir().unwrap();
    let (data, cfg) = setup(dir.path());
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    let stdout = ok(&[
        "rotate", "--config", &cfg, "--data", &data, "--out", out_s, "--seed", "3",
    ]);
    assert_eq!(stdout.lines().count(), 1 + 3 * 4);
    assert_eq!(
        std::fs::read_to_string(out.join("metrics.csv")).unwrap(),
        stdout
    );
    let manifest = std::fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 3"));
    ok(&["render", "--out", out_s]);
    assert!(out
        .join("runs/grass/open_morph/color_synth_003.png")
        .is_file());
    assert!(out.join("runs/grass/sweep.png").is_file());

    // rerunning from the manifest reproduces the metrics
    let again = dir.path().join("again");
    let manifest_path = out.join("manifest.toml");
    let stdout2 = ok(&[
        "run",
        "--config",
        manifest_path.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(stdout2, stdout);
}

#[test]
fn step_by_step_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (data, cfg) = setup(dir.path());
    let d = |p: &str| dir.path().join(p).to_str().unwrap().to_string();
    let ckpt = ok(&[
        "train",
        "--config",
        &cfg,
        "--data",
        &data,
        "--out",
        &d("out"),
        "--unknown",
        "grass",
    ]);
    let ckpt = ckpt.trim();
    assert!(Path::new(ckpt).is_file(), "{ckpt}");

    let tile = format!("{data}/tiles/synth_003");
    ok(&[
        "predict",
        "--checkpoint",
        ckpt,
        "--image",
        &format!("{tile}/image.png"),
        "--out",
        &d("p.bin"),
        "--pred",
        &d("pred.png"),
        "--tau",
        "0.9",
    ]);
    let palette = format!("{data}/palette.txt");
    let sweep = ok(&[
        "sweep",
        "--probs",
        &d("p.bin"),
        "--labels",
        &format!("{tile}/labels.png"),
        "--unknown",
        "grass",
        "--palette",
        &palette,
        "--out",
        &d("sweep.csv"),
    ]);
    assert!(sweep.starts_with("selected tau") || sweep.is_empty());
    let csv = std::fs::read_to_string(d("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);
    ok(&["morph", "--pred", &d("pred.png"), "--out", &d("morph.png")]);
    let scores = ok(&[
        "evaluate",
        "--pred",
        &d("morph.png"),
        "--labels",
        &format!("{tile}/labels.png"),
        "--unknown",
        "grass",
        "--palette",
        &palette,
        "--out",
        &d("cm.csv"),
    ]);
    assert!(scores.starts_with("oa "), "{scores}");
    assert!(scores.contains("\nkappa "));
    assert!(std::fs::read_to_string(d("cm.csv"))
        .unwrap()
        .starts_with("truth\\pred,street,building,unknown\n"));
}

#[test]
fn bad_input_exits_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let (data, cfg) = setup(dir.path());
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    assert!(fails(&["run", "--config", &cfg, "--data", &data, "--tau", "2"]).contains("error:"));
    let e = fails(&[
        "run",
        "--config",
        &cfg,
        "--data",
        &data,
        "--out",
        out_s,
        "--unknown",
        "grass",
        "--context",
        "closed_closed",
    ]);
    assert!(e.contains("closed_closed"), "{e}");
    assert!(fails(&["rotate", "--config", &cfg, "--unknown", "grass"]).contains("rotate"));
    let e = fails(&[
        "run",
        "--config",
        &cfg,
        "--data",
        "/nonexistent/data",
        "--out",
        out_s,
    ]);
    assert!(e.contains("/nonexistent/data"), "{e}");
    let e = fails(&["morph", "--pred", "/nonexistent.png", "--out", out_s]);
    assert!(e.contains("error:"), "{e}");
    assert!(fails(&["render", "--out", dir.path().to_str().unwrap()]).contains("runs"));
    fails(&["synth-gen", "--out", out_s, "--classes", "9"]);
    fails(&["frobnicate"]);
}
