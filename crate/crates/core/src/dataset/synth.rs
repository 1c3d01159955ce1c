//! Synthetic tiles: random convex (Voronoi) regions, each filled with the
//! texture of its class. Labels are exact by construction.

use image::RgbImage;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LabeledTile, Palette, PaletteEntry};
use crate::error::{Error, Result};
use crate::labels::LabelMap;

/// Square-wave modulation applied on top of a class's base color.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Flat,
    Horizontal,
    Vertical,
    Diagonal,
    Checker,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassTexture {
    pub name: String,
    /// Color used for this class in label images.
    pub label_color: [u8; 3],
    pub base: [u8; 3],
    /// Per-channel uniform noise in `[-noise, noise]`.
    pub noise: u8,
    pub pattern: Pattern,
    /// Full period of the square wave in pixels.
    pub period: u32,
    pub amplitude: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub tiles: usize,
    /// Tiles are `size × size`.
    pub size: usize,
    pub classes: Vec<ClassTexture>,
    /// Voronoi sites per tile.
    pub regions: usize,
    /// Every class must cover at least this fraction of each tile; layouts are
    /// redrawn (a bounded number of times) until this holds.
    pub min_class_share: f64,
    pub seed: u64,
}

const LAYOUT_ATTEMPTS: usize = 200;

impl SynthConfig {
    /// Five classes with Vaihingen label colors. The image colors sit on a
    /// hue ring around mid gray, so every class has two close neighbours.
    pub fn five_class(tiles: usize, size: usize, seed: u64) -> Self {
        let isprs = Palette::isprs();
        let tex = |i: usize, base: [u8; 3], pattern: Pattern, period: u32, amplitude: u8| {
            let e = &isprs.entries()[i];
            ClassTexture {
                name: e.name.clone(),
                label_color: e.color,
                base,
                noise: 20,
                pattern,
                period,
                amplitude,
            }
        };
        SynthConfig {
            tiles,
            size,
            classes: vec![
                tex(0, [177, 79, 128], Pattern::Flat, 0, 0),
                tex(1, [170, 140, 74], Pattern::Checker, 8, 15),
                tex(2, [105, 185, 94], Pattern::Horizontal, 6, 15),
                tex(3, [71, 151, 162], Pattern::Diagonal, 10, 15),
                tex(4, [116, 86, 182], Pattern::Vertical, 4, 15),
            ],
            regions: 14,
            min_class_share: 0.05,
            seed,
        }
    }

    /// Smaller variant with the first `n` classes of [`Self::five_class`].
    pub fn with_classes(mut self, n: usize) -> Self {
        self.classes.truncate(n);
        self
    }

    pub fn palette(&self) -> Result<Palette> {
        Palette::new(
            self.classes
                .iter()
                .map(|c| PaletteEntry {
                    color: c.label_color,
                    name: c.name.clone(),
                })
                .collect(),
        )
    }

    fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Config(
                "synthetic data needs at least two classes".into(),
            ));
        }
        if self.tiles == 0 || self.size == 0 {
            return Err(Error::Config("tile count and size must be positive".into()));
        }
        if self.regions < self.classes.len() {
            return Err(Error::Config(format!(
                "{} regions cannot hold {} classes",
                self.regions,
                self.classes.len()
            )));
        }
        if !(0.0..1.0 / self.classes.len() as f64).contains(&self.min_class_share) {
            return Err(Error::Config(format!(
                "min_class_share {} unattainable for {} classes",
                self.min_class_share,
                self.classes.len()
            )));
        }
        self.palette().map(|_| ())
    }
}

/// Generates `config.tiles` tiles named `synth_000`, `synth_001`, ...
pub fn generate_synthetic(config: &SynthConfig) -> Result<Vec<LabeledTile>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.tiles)
        .map(|t| {
            let labels = layout(config, &mut rng);
            let image = paint(config, &labels, &mut rng);
            LabeledTile::new(format!("synth_{t:03}"), image, labels)
        })
        .collect()
}

fn layout(config: &SynthConfig, rng: &mut ChaCha8Rng) -> LabelMap {
    let n = config.size;
    let k = config.classes.len();
    let mut best: Option<(f64, LabelMap)> = None;
    for _ in 0..LAYOUT_ATTEMPTS {
        let sites: Vec<(f64, f64)> = (0..config.regions)
            .map(|_| {
                (
                    rng.random_range(0.0..n as f64),
                    rng.random_range(0.0..n as f64),
                )
            })
            .collect();
        let mut classes: Vec<u8> = (0..k as u8).collect();
        classes.extend((k..config.regions).map(|_| rng.random_range(0..k as u8)));
        classes.shuffle(rng);

        let mut data = Vec::with_capacity(n * n);
        let mut counts = vec![0usize; k];
        for y in 0..n {
            for x in 0..n {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let nearest = sites
                    .iter()
                    .enumerate()
                    .map(|(i, &(sx, sy))| (i, (sx - px).powi(2) + (sy - py).powi(2)))
                    .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
                    .0;
                let c = classes[nearest];
                counts[c as usize] += 1;
                data.push(c);
            }
        }
        let share = *counts.iter().min().unwrap() as f64 / (n * n) as f64;
        let map = LabelMap::new(n, n, data).expect("square layout");
        if share >= config.min_class_share {
            return map;
        }
        if best.as_ref().is_none_or(|(s, _)| share > *s) {
            best = Some((share, map));
        }
    }
    best.expect("at least one attempt").1
}

fn paint(config: &SynthConfig, labels: &LabelMap, rng: &mut ChaCha8Rng) -> RgbImage {
    let n = config.size;
    let mut img = RgbImage::new(n as u32, n as u32);
    for y in 0..n {
        for x in 0..n {
            let tex = &config.classes[labels.get(y, x) as usize];
            let half = (tex.period / 2).max(1) as usize;
            let phase = match tex.pattern {
                Pattern::Flat => None,
                Pattern::Horizontal => Some(y / half),
                Pattern::Vertical => Some(x / half),
                Pattern::Diagonal => Some((x + y) / half),
                Pattern::Checker => Some(x / half + y / half),
            };
            let wave = match phase {
                None => 0,
                Some(p) if p % 2 == 0 => tex.amplitude as i32,
                Some(_) => -(tex.amplitude as i32),
            };
            let mut px = [0u8; 3];
            for (c, out) in px.iter_mut().enumerate() {
                let noise = if tex.noise == 0 {
                    0
                } else {
                    rng.random_range(-(tex.noise as i32)..=tex.noise as i32)
                };
                *out = (tex.base[c] as i32 + wave + noise).clamp(0, 255) as u8;
            }
            img.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    img
}
