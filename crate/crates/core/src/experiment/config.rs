use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::SplitPolicy;
use crate::error::{Error, Result};
use crate::net::TrainConfig;
use crate::openset::{check_tau, check_window, default_grid, OpenSetConfig, RejectRule};

/// Train/test scenario of one evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Context {
    /// Model trained on every class, tested without rejection.
    ClosedClosed,
    /// Model trained without the held-out class, tested without rejection.
    ClosedOpen,
    /// Held-out model with threshold rejection.
    OpenOpen,
    /// Held-out model with threshold rejection and the erosion filter.
    OpenMorph,
}

impl Context {
    pub const ALL: [Context; 4] = [
        Context::ClosedClosed,
        Context::ClosedOpen,
        Context::OpenOpen,
        Context::OpenMorph,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Context::ClosedClosed => "closed_closed",
            Context::ClosedOpen => "closed_open",
            Context::OpenOpen => "open_open",
            Context::OpenMorph => "open_morph",
        }
    }

    /// Whether the model withholds a class.
    pub fn holds_out(self) -> bool {
        self != Context::ClosedClosed
    }

    /// Whether low-confidence pixels are rejected.
    pub fn rejects(self) -> bool {
        matches!(self, Context::OpenOpen | Context::OpenMorph)
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Context {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Context::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown context `{s}`; expected one of closed_closed, closed_open, open_open, open_morph")))
    }
}

/// A fixed threshold or one selected on the validation tiles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TauSetting {
    Fixed(f64),
    Auto,
}

impl Serialize for TauSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TauSetting::Fixed(t) => s.serialize_f64(*t),
            TauSetting::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for TauSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(t) => Ok(TauSetting::Fixed(t)),
            Raw::Int(t) => Ok(TauSetting::Fixed(t as f64)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl FromStr for TauSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(TauSetting::Auto);
        }
        s.parse::<f64>().map(TauSetting::Fixed).map_err(|_| {
            Error::Config(format!(
                "tau must be a number in [0, 1] or `auto`, got `{s}`"
            ))
        })
    }
}

impl fmt::Display for TauSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauSetting::Fixed(t) => write!(f, "{t}"),
            TauSetting::Auto => f.write_str("auto"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpenSetSettings {
    pub tau: TauSetting,
    pub rule: RejectRule,
    /// Side of the erosion window.
    pub window: usize,
    /// Thresholds tried when `tau = "auto"`.
    pub grid: Vec<f64>,
}

impl Default for OpenSetSettings {
    fn default() -> Self {
        OpenSetSettings {
            tau: TauSetting::Auto,
            rule: RejectRule::AtLeast,
            window: 3,
            grid: default_grid(),
        }
    }
}

impl OpenSetSettings {
    pub fn resolved(&self, tau: f64) -> OpenSetConfig {
        OpenSetConfig {
            tau,
            rule: self.rule,
            window: self.window,
        }
    }
}

/// Which classes to hold out: one by name, each in turn, or none.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum UnknownSelection {
    All,
    None,
    Class(String),
}

impl UnknownSelection {
    pub fn parse(s: &str) -> Self {
        match s {
            "all" => UnknownSelection::All,
            "none" => UnknownSelection::None,
            other => UnknownSelection::Class(other.to_string()),
        }
    }
}

/// One evaluation campaign, read from TOML. Every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Directory holding `tiles/<id>/{image,labels}.png`.
    pub data_root: PathBuf,
    /// Class color table; `<data_root>/palette.txt` or the ISPRS colors when unset.
    pub palette: Option<PathBuf>,
    /// Held-out class name, `all` for every rotation, or `none`.
    pub unknown: String,
    /// Context name or `all`.
    pub context: String,
    pub out_dir: PathBuf,
    /// Checkpoint cache; `<out_dir>/models` when unset.
    pub model_dir: Option<PathBuf>,
    pub seed: u64,
    pub split: SplitPolicy,
    pub validation_fraction: f64,
    /// Pixels pushed through the fully connected layers at once during inference.
    pub inference_batch: usize,
    pub train: TrainConfig,
    pub openset: OpenSetSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            data_root: PathBuf::from("data"),
            palette: None,
            unknown: "all".into(),
            context: "all".into(),
            out_dir: PathBuf::from("out"),
            model_dir: None,
            seed: 0,
            split: SplitPolicy::Vaihingen,
            validation_fraction: 0.1,
            inference_batch: 4096,
            train: TrainConfig::default(),
            openset: OpenSetSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn contexts(&self) -> Result<Vec<Context>> {
        match self.context.as_str() {
            "all" => Ok(Context::ALL.to_vec()),
            one => Ok(vec![one.parse()?]),
        }
    }

    pub fn unknown_selection(&self) -> UnknownSelection {
        UnknownSelection::parse(&self.unknown)
    }

    pub fn model_dir(&self) -> PathBuf {
        self.model_dir
            .clone()
            .unwrap_or_else(|| self.out_dir.join("models"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains([',', '\n']) {
            return Err(Error::Config(format!(
                "experiment name `{}` must be non-empty without commas",
                self.name
            )));
        }
        let contexts = self.contexts()?;
        match self.unknown_selection() {
            UnknownSelection::None if contexts.iter().any(|c| c.holds_out()) => {
                return Err(Error::Config(format!(
                    "context `{}` needs a held-out class, but unknown = \"none\"",
                    self.context
                )))
            }
            UnknownSelection::Class(ref c) if contexts == [Context::ClosedClosed] => {
                return Err(Error::Config(format!(
                    "closed_closed trains on every class; it cannot hold out `{c}` (use unknown = \"none\")"
                )))
            }
            _ => {}
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.inference_batch == 0 {
            return Err(Error::Config("inference_batch must be positive".into()));
        }
        self.train.validate()?;
        if let TauSetting::Fixed(t) = self.openset.tau {
            check_tau(t).map_err(|e| Error::Config(e.to_string()))?;
        }
        check_window(self.openset.window).map_err(|e| Error::Config(e.to_string()))?;
        if self.openset.grid.is_empty() {
            return Err(Error::Config("openset.grid must not be empty".into()));
        }
        for &t in &self.openset.grid {
            check_tau(t).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.openset.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "openset.grid must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            unknown = "car"
            context = "open_morph"
            [split]
            policy = "fraction"
            test_fraction = 0.25
            [train]
            epochs = 2
            [openset]
            tau = 0.7
            "#,
        )
        .unwrap();
        assert_eq!(cfg.contexts().unwrap(), vec![Context::OpenMorph]);
        assert_eq!(cfg.openset.tau, TauSetting::Fixed(0.7));
        assert_eq!(cfg.train.epochs, 2);
        assert_eq!(cfg.train.learning_rate, 0.01);
        assert_eq!(
            cfg.split,
            SplitPolicy::Fraction {
                test_fraction: 0.25
            }
        );
    }

    #[test]
    fn inconsistent_configs_are_rejected() {
        assert!(
            ExperimentConfig::from_toml("unknown = \"car\"\ncontext = \"closed_closed\"").is_err()
        );
        assert!(
            ExperimentConfig::from_toml("unknown = \"none\"\ncontext = \"open_open\"").is_err()
        );
        assert!(
            ExperimentConfig::from_toml("unknown = \"none\"\ncontext = \"closed_closed\"").is_ok()
        );
        assert!(ExperimentConfig::from_toml("context = \"sideways\"").is_err());
        assert!(ExperimentConfig::from_toml("[openset]\ntau = 1.5").is_err());
        assert!(ExperimentConfig::from_toml("[openset]\ntau = \"maybe\"").is_err());
        assert!(ExperimentConfig::from_toml("[openset]\nwindow = 4").is_err());
        assert!(ExperimentConfig::from_toml("surprise = 1").is_err());
    }

    #[test]
    fn tau_accepts_integers_and_auto() {
        let cfg = ExperimentConfig::from_toml("[openset]\ntau = 1").unwrap();
        assert_eq!(cfg.openset.tau, TauSetting::Fixed(1.0));
        let cfg = ExperimentConfig::from_toml("[openset]\ntau = \"auto\"").unwrap();
        assert_eq!(cfg.openset.tau, TauSetting::Auto);
    }
}
