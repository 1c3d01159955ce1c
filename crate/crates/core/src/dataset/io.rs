//! PNG tile ingestion. Layout on disk: `<root>/tiles/<id>/image.png` and
//! `<root>/tiles/<id>/labels.png`, with an optional `<root>/palette.txt`.

use std::path::Path;

use image::{ImageFormat, RgbImage};

use super::{LabeledTile, Palette};
use crate::error::{Error, Result};
use crate::labels::{LabelMap, IGNORE};

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads one tile, decoding labels by exact color match against `palette`.
/// Colors absent from the palette become [`IGNORE`].
pub fn load_tile(
    id: &str,
    image_path: &Path,
    label_path: &Path,
    palette: &Palette,
) -> Result<LabeledTile> {
    LabeledTile::new(
        id,
        load_image(image_path)?,
        load_labels(label_path, palette)?,
    )
}

/// Reads an 8-bit RGB tile image.
pub fn load_image(path: &Path) -> Result<RgbImage> {
    decode_image(&read(path)?).map_err(|e| match e {
        Error::Format { detail, .. } => Error::Format {
            what: "tile image",
            detail: format!("{}: {detail}", path.display()),
        },
        other => other,
    })
}

/// Reads a color-coded ground-truth PNG into dataset ids.
pub fn load_labels(path: &Path, palette: &Palette) -> Result<LabelMap> {
    decode_labels(&read(path)?, palette).map_err(|e| match e {
        Error::Format { detail, .. } => Error::Format {
            what: "label image",
            detail: format!("{}: {detail}", path.display()),
        },
        other => other,
    })
}

/// In-memory variant of [`load_tile`].
pub fn decode_tile(
    id: &str,
    image_png: &[u8],
    labels_png: &[u8],
    palette: &Palette,
) -> Result<LabeledTile> {
    LabeledTile::new(
        id,
        decode_image(image_png)?,
        decode_labels(labels_png, palette)?,
    )
}

fn decode_image(bytes: &[u8]) -> Result<RgbImage> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::format("tile image", e.to_string()))?;
    match img {
        image::DynamicImage::ImageRgb8(rgb) => Ok(rgb),
        other => Err(Error::format(
            "tile image",
            format!("expected 8-bit 3-channel PNG, got {:?}", other.color()),
        )),
    }
}

fn decode_labels(bytes: &[u8], palette: &Palette) -> Result<LabelMap> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::format("label image", e.to_string()))?;
    // paletted PNGs are expanded to RGB by the decoder
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb
        .pixels()
        .map(|p| palette.lookup(p.0).unwrap_or(IGNORE))
        .collect();
    LabelMap::new(h as usize, w as usize, data)
}

/// Writes `image.png` and `labels.png` under `dir`.
pub fn save_tile(tile: &LabeledTile, dir: &Path, palette: &Palette) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let image_path = dir.join("image.png");
    tile.image
        .save_with_format(&image_path, ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: image_path.clone(),
            source,
        })?;
    let fallback = palette.unused_color();
    let mut labels = RgbImage::new(tile.width() as u32, tile.height() as u32);
    for (p, &v) in labels.pixels_mut().zip(tile.labels.data()) {
        p.0 = palette.color(v).unwrap_or(fallback);
    }
    let label_path = dir.join("labels.png");
    labels
        .save_with_format(&label_path, ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: label_path.clone(),
            source,
        })
}

/// Loads every tile under `<root>/tiles`, sorted by id.
pub fn load_dataset(root: &Path, palette: &Palette) -> Result<Vec<LabeledTile>> {
    let tiles_dir = root.join("tiles");
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(&tiles_dir).map_err(|e| Error::io(&tiles_dir, e))? {
        let entry = entry.map_err(|e| Error::io(&tiles_dir, e))?;
        if entry.path().is_dir() {
            ids.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    ids.sort();
    if ids.is_empty() {
        return Err(Error::Config(format!(
            "no tiles under {}",
            tiles_dir.display()
        )));
    }
    ids.iter()
        .map(|id| {
            let dir = tiles_dir.join(id);
            load_tile(id, &dir.join("image.png"), &dir.join("labels.png"), palette)
        })
        .collect()
}

/// Writes tiles in the layout [`load_dataset`] reads, plus `palette.txt`.
pub fn save_dataset(root: &Path, tiles: &[LabeledTile], palette: &Palette) -> Result<()> {
    for tile in tiles {
        save_tile(tile, &root.join("tiles").join(&tile.id), palette)?;
    }
    palette.save(&root.join("palette.txt"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn png(img: &RgbImage) -> Vec<u8> {
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png).unwrap();
        out.into_inner()
    }

    #[test]
    fn decodes_colors_and_stray_pixels() {
        let palette = Palette::isprs();
        let image = RgbImage::new(2, 1);
        let mut labels = RgbImage::new(2, 1);
        labels.put_pixel(0, 0, image::Rgb([255, 255, 0]));
        labels.put_pixel(1, 0, image::Rgb([1, 2, 3]));
        let tile = decode_tile("t", &png(&image), &png(&labels), &palette).unwrap();
        assert_eq!(tile.labels.data(), &[4, IGNORE]);
    }

    #[test]
    fn uniform_label_map() {
        let palette = Palette::isprs();
        let labels = RgbImage::from_pixel(3, 2, image::Rgb([0, 255, 0]));
        let tile = decode_tile("t", &png(&RgbImage::new(3, 2)), &png(&labels), &palette).unwrap();
        assert!(tile.labels.data().iter().all(|&v| v == 3));
    }

    #[test]
    fn size_mismatch_is_an_error() {
        let palette = Palette::isprs();
        let r = decode_tile(
            "t",
            &png(&RgbImage::new(3, 2)),
            &png(&RgbImage::new(2, 2)),
            &palette,
        );
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn grayscale_image_rejected() {
        let gray = image::GrayImage::new(2, 2);
        let mut bytes = std::io::Cursor::new(Vec::new());
        gray.write_to(&mut bytes, ImageFormat::Png).unwrap();
        let r = decode_tile(
            "t",
            bytes.get_ref(),
            &png(&RgbImage::new(2, 2)),
            &Palette::isprs(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn missing_file_is_an_error() {
        let p = Path::new("/nonexistent/image.png");
        assert!(matches!(
            load_tile("x", p, p, &Palette::isprs()),
            Err(Error::Io { .. })
        ));
    }
}
