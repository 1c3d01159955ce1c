use std::path::Path;

use crate::error::{Error, Result};
use crate::labels::IGNORE;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaletteEntry {
    pub color: [u8; 3],
    pub name: String,
}

/// Color table for label images. The dataset id of a class is its position
/// in the table.
///
/// Text form is one `R,G,B,class_name` entry per line; blank lines and lines
/// starting with `#` are skipped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Palette {
    entries: Vec<PaletteEntry>,
}

impl Palette {
    pub fn new(entries: Vec<PaletteEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::format("palette", "no classes"));
        }
        if entries.len() >= IGNORE as usize {
            return Err(Error::format(
                "palette",
                format!("{} classes, at most {}", entries.len(), IGNORE - 1),
            ));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.name.is_empty() || e.name.contains(',') || e.name.chars().any(char::is_whitespace)
            {
                return Err(Error::format(
                    "palette",
                    format!("invalid class name {:?}", e.name),
                ));
            }
            if let Some(prev) = entries[..i]
                .iter()
                .find(|p| p.color == e.color || p.name == e.name)
            {
                return Err(Error::format(
                    "palette",
                    format!(
                        "`{}` duplicates the color or name of `{}`",
                        e.name, prev.name
                    ),
                ));
            }
        }
        Ok(Palette { entries })
    }

    /// ISPRS 2D labeling colors for the five Vaihingen classes.
    pub fn isprs() -> Self {
        let table: [([u8; 3], &str); 5] = [
            ([255, 255, 255], "street"),
            ([0, 0, 255], "building"),
            ([0, 255, 255], "grass"),
            ([0, 255, 0], "tree"),
            ([255, 255, 0], "car"),
        ];
        Palette {
            entries: table
                .iter()
                .map(|&(color, name)| PaletteEntry {
                    color,
                    name: name.to_string(),
                })
                .collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [r, g, b, name] = fields.as_slice() else {
                return Err(Error::format(
                    "palette",
                    format!("line {}: expected `R,G,B,name`", lineno + 1),
                ));
            };
            let channel = |s: &str| {
                s.parse::<u8>().map_err(|_| {
                    Error::format("palette", format!("line {}: bad channel `{s}`", lineno + 1))
                })
            };
            entries.push(PaletteEntry {
                color: [channel(r)?, channel(g)?, channel(b)?],
                name: name.to_string(),
            });
        }
        Palette::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Palette::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{},{},{},{}\n", e.color[0], e.color[1], e.color[2], e.name))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn entries(&self) -> &[PaletteEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    /// Dataset id of an exact color match.
    pub fn lookup(&self, color: [u8; 3]) -> Option<u8> {
        self.entries
            .iter()
            .position(|e| e.color == color)
            .map(|i| i as u8)
    }

    pub fn color(&self, dataset_id: u8) -> Option<[u8; 3]> {
        self.entries.get(dataset_id as usize).map(|e| e.color)
    }

    pub fn color_of(&self, name: &str) -> Option<[u8; 3]> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.color)
    }

    /// A color absent from the table, used to write IGNORE pixels.
    pub fn unused_color(&self) -> [u8; 3] {
        (0..=255u8)
            .map(|v| [v, 0, 0])
            .chain((0..=255u8).map(|v| [0, v, 128]))
            .find(|c| self.lookup(*c).is_none())
            .expect("fewer than 254 palette entries")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let text = "# comment\n255,255,255,street\n\n0, 0, 255, building\n";
        let p = Palette::parse(text).unwrap();
        assert_eq!(p.class_names(), vec!["street", "building"]);
        assert_eq!(Palette::parse(&p.to_text()).unwrap(), p);
        assert_eq!(
            Palette::parse(&Palette::isprs().to_text()).unwrap(),
            Palette::isprs()
        );
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Palette::parse("1,2,street").is_err());
        assert!(Palette::parse("1,2,300,street").is_err());
        assert!(Palette::parse("1,2,3,a\n1,2,3,b").is_err());
        assert!(Palette::parse("1,2,3,a\n4,5,6,a").is_err());
        assert!(Palette::parse("# nothing\n").is_err());
    }

    #[test]
    fn car_is_yellow() {
        let p = Palette::isprs();
        assert_eq!(p.lookup([255, 255, 0]), Some(4));
        assert_eq!(p.class_names()[4], "car");
        assert_eq!(p.lookup([1, 2, 3]), None);
        assert_eq!(p.lookup(p.unused_color()), None);
    }
}
