//! Colorized prediction maps and the sweep line plot.

use std::path::{Path, PathBuf};

use image::{ImageFormat, Rgb, RgbImage};

use crate::dataset::{ClassScheme, Palette};
use crate::error::{Error, Result};
use crate::labels::{LabelMap, UNKNOWN};
use crate::openset::SweepCurve;

/// Color of UNKNOWN pixels in rendered maps.
pub const UNKNOWN_COLOR: [u8; 3] = [255, 0, 0];
pub const LEGEND_HEADER: &str = "label_id,class_name,R,G,B";

/// Maps label ids of a prediction map to class names and colors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Legend {
    entries: Vec<(u8, String, [u8; 3])>,
}

impl Legend {
    /// Known training ids in the palette colors of their dataset classes, plus UNKNOWN.
    pub fn for_scheme(scheme: &ClassScheme, palette: &Palette) -> Result<Self> {
        let mut entries = Vec::with_capacity(scheme.n_known() + 1);
        for (id, name) in scheme.known_names().into_iter().enumerate() {
            let color = palette
                .color_of(name)
                .ok_or_else(|| Error::Config(format!("class `{name}` has no palette color")))?;
            entries.push((id as u8, name.to_string(), color));
        }
        entries.push((UNKNOWN, "unknown".into(), UNKNOWN_COLOR));
        Ok(Legend { entries })
    }

    pub fn entries(&self) -> &[(u8, String, [u8; 3])] {
        &self.entries
    }

    pub fn color(&self, label: u8) -> Option<[u8; 3]> {
        self.entries.iter().find(|e| e.0 == label).map(|e| e.2)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{LEGEND_HEADER}\n");
        for (id, name, [r, g, b]) in &self.entries {
            s.push_str(&format!("{id},{name},{r},{g},{b}\n"));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let err = |line: usize, d: &str| Error::format("legend", format!("line {line}: {d}"));
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == LEGEND_HEADER => {}
            _ => return Err(err(1, "missing header")),
        }
        let mut entries: Vec<(u8, String, [u8; 3])> = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(err(i + 1, "expected 5 fields"));
            }
            let byte = |s: &str| {
                s.parse::<u8>()
                    .map_err(|_| err(i + 1, "value outside 0..=255"))
            };
            let id = byte(f[0])?;
            if f[1].is_empty() {
                return Err(err(i + 1, "empty class name"));
            }
            if entries.iter().any(|e| e.0 == id) {
                return Err(err(i + 1, "duplicate label id"));
            }
            entries.push((
                id,
                f[1].to_string(),
                [byte(f[2])?, byte(f[3])?, byte(f[4])?],
            ));
        }
        if entries.is_empty() {
            return Err(err(1, "no entries"));
        }
        Ok(Legend { entries })
    }
}

pub fn colorize(pred: &LabelMap, legend: &Legend) -> Result<RgbImage> {
    let mut lut = [None; 256];
    for (id, _, c) in legend.entries() {
        lut[*id as usize] = Some(*c);
    }
    let (h, w) = pred.dims();
    let mut img = RgbImage::new(w as u32, h as u32);
    for (px, &v) in img.pixels_mut().zip(pred.data()) {
        px.0 = lut[v as usize]
            .ok_or_else(|| Error::InvalidArgument(format!("label {v} missing from legend")))?;
    }
    Ok(img)
}

const PLOT_W: u32 = 640;
const PLOT_H: u32 = 400;
const MARGIN: u32 = 40;

/// Series colors: all, known, unknown, mean.
pub const SERIES_COLORS: [[u8; 3]; 4] =
    [[110, 110, 110], [0, 70, 200], [200, 30, 30], [0, 150, 60]];

fn to_canvas(tau: f64, acc: f64) -> (i64, i64) {
    let w = (PLOT_W - 2 * MARGIN) as f64;
    let h = (PLOT_H - 2 * MARGIN) as f64;
    let x = MARGIN as f64 + tau.clamp(0.0, 1.0) * w;
    let y = (PLOT_H - MARGIN) as f64 - acc.clamp(0.0, 1.0) * h;
    (x.round() as i64, y.round() as i64)
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(c));
    }
}

/// Bresenham line, two pixels thick.
fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3]) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, c);
        put(img, x, y + 1, c);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Accuracy versus threshold, one polyline per series in [`SERIES_COLORS`].
/// Absent values break the line.
pub fn render_sweep(curve: &SweepCurve) -> RgbImage {
    let mut img = RgbImage::from_pixel(PLOT_W, PLOT_H, Rgb([255, 255, 255]));
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let (x0, y) = to_canvas(0.0, v);
        let (x1, _) = to_canvas(1.0, v);
        line(&mut img, (x0, y), (x1, y), [225, 225, 225]);
        let (x, y0) = to_canvas(v, 0.0);
        let (_, y1) = to_canvas(v, 1.0);
        line(&mut img, (x, y0), (x, y1), [225, 225, 225]);
    }
    line(
        &mut img,
        to_canvas(0.0, 0.0),
        to_canvas(1.0, 0.0),
        [0, 0, 0],
    );
    line(
        &mut img,
        to_canvas(0.0, 0.0),
        to_canvas(0.0, 1.0),
        [0, 0, 0],
    );
    for (series, color) in SERIES_COLORS.iter().enumerate() {
        let mut prev: Option<(i64, i64)> = None;
        for p in &curve.points {
            let v = [p.acc_all, p.acc_known, p.acc_unknown, p.acc_mean][series];
            match v {
                Some(v) => {
                    let here = to_canvas(p.tau, v);
                    line(&mut img, prev.unwrap_or(here), here, *color);
                    prev = Some(here);
                }
                None => prev = None,
            }
        }
    }
    img
}

fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(e.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

/// Renders every run under `<bundle>/runs`: `color_<tile>.png` next to each
/// `pred_<tile>.png`, and `sweep.png` next to each `sweep.csv`. Returns the
/// written files.
pub fn render_outputs(bundle: &Path) -> Result<Vec<PathBuf>> {
    let runs = bundle.join("runs");
    if !runs.is_dir() {
        return Err(Error::Config(format!(
            "{} is not a result bundle (no runs/)",
            bundle.display()
        )));
    }
    let mut written = Vec::new();
    for unknown_dir in sorted_entries(&runs)?.into_iter().filter(|p| p.is_dir()) {
        let sweep = unknown_dir.join("sweep.csv");
        if sweep.is_file() {
            let curve = SweepCurve::from_csv(&read_text(&sweep)?)?;
            let out = unknown_dir.join("sweep.png");
            save_png(&render_sweep(&curve), &out)?;
            written.push(out);
        }
        for ctx_dir in sorted_entries(&unknown_dir)?
            .into_iter()
            .filter(|p| p.is_dir())
        {
            let legend = Legend::from_csv(&read_text(&ctx_dir.join("legend.csv"))?)?;
            for file in sorted_entries(&ctx_dir)? {
                let name = file
                    .file_name()
                    .and_then(|n| n.to_str())
                    .unwrap_or_default();
                let Some(tile) = name
                    .strip_prefix("pred_")
                    .and_then(|n| n.strip_suffix(".png"))
                else {
                    continue;
                };
                let bytes = std::fs::read(&file).map_err(|e| Error::io(&file, e))?;
                let pred = LabelMap::from_png_bytes(&bytes)?;
                let out = ctx_dir.join(format!("color_{tile}.png"));
                save_png(&colorize(&pred, &legend)?, &out)?;
                written.push(out);
            }
        }
    }
    Ok(written)
}
