use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::config::{Context, ExperimentConfig, TauSetting, UnknownSelection};
use super::render::Legend;
use crate::dataset::{
    extract_training_patches, hold_out_validation, load_dataset, split_tiles, ClassScheme,
    LabeledTile, Palette,
};
use crate::error::{Error, Result};
use crate::metrics::{
    accumulate, class_error_rates, cohen_kappa, matrix_labels, normalized_accuracy,
    overall_accuracy, per_class_error_rates, ConfusionMatrix, ErrorRateMatrix, MetricsRow,
};
use crate::net::{
    init_network, load_checkpoint_for, predict_image, save_checkpoint, train, NetworkParams,
    Precision, TrainConfig,
};
use crate::openset::{
    argmax_decode, morph_filter, select_threshold, sweep_thresholds, threshold_reject_with,
    ProbabilityMap, SweepCurve,
};
use crate::tensor::Scalar;

/// Label used in place of a class name for closed-set runs.
pub const NO_UNKNOWN: &str = "none";

/// Outcome of one (held-out class, context) evaluation on the test tiles.
#[derive(Clone, Debug)]
pub struct RunRecord {
    /// Held-out class of the rotation, or [`NO_UNKNOWN`].
    pub unknown: String,
    pub context: Context,
    pub tau: f64,
    /// Scheme the confusion matrix is indexed by.
    pub scheme: ClassScheme,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsRow,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub out_dir: PathBuf,
    pub records: Vec<RunRecord>,
    /// Validation sweeps by held-out class, when the threshold was selected automatically.
    pub sweeps: BTreeMap<String, SweepCurve>,
}

impl ExperimentReport {
    pub fn rows(&self) -> Vec<MetricsRow> {
        self.records.iter().map(|r| r.metrics.clone()).collect()
    }

    pub fn metrics_csv(&self) -> String {
        MetricsRow::to_csv(&self.rows())
    }

    pub fn record(&self, unknown: &str, context: Context) -> Option<&RunRecord> {
        self.records
            .iter()
            .find(|r| r.unknown == unknown && r.context == context)
    }
}

/// 64-bit FNV-1a, used to key cached checkpoints.
fn fnv1a(state: u64, bytes: &[u8]) -> u64 {
    bytes.iter().fold(state, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Resolves the class color table of a config.
pub fn resolve_palette(config: &ExperimentConfig) -> Result<(Palette, Option<PathBuf>)> {
    let path = match &config.palette {
        Some(p) => Some(p.clone()),
        None => Some(config.data_root.join("palette.txt")).filter(|p| p.is_file()),
    };
    match path {
        Some(p) => Ok((Palette::load(&p)?, Some(absolute(&p)))),
        None => Ok((Palette::isprs(), None)),
    }
}

struct Workspace {
    config: ExperimentConfig,
    palette: Palette,
    classes: Vec<String>,
    tiles: BTreeMap<String, LabeledTile>,
    fit: Vec<String>,
    val: Vec<String>,
    test: Vec<String>,
}

impl Workspace {
    fn open(config: ExperimentConfig, palette: Palette) -> Result<Self> {
        let tiles: BTreeMap<String, LabeledTile> = load_dataset(&config.data_root, &palette)?
            .into_iter()
            .map(|t| (t.id.clone(), t))
            .collect();
        let ids: Vec<String> = tiles.keys().cloned().collect();
        let (train_ids, test) = split_tiles(&ids, config.split)?;
        if test.is_empty() {
            return Err(Error::Config("the split leaves no test tiles".into()));
        }
        let (fit, val) = hold_out_validation(&train_ids, config.validation_fraction, config.seed)?;
        log::info!(
            "tiles: {} fit, {} validation, {} test",
            fit.len(),
            val.len(),
            test.len()
        );
        Ok(Workspace {
            classes: palette.class_names(),
            config,
            palette,
            tiles,
            fit,
            val,
            test,
        })
    }

    fn tile(&self, id: &str) -> &LabeledTile {
        &self.tiles[id]
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.config.seed,
            ..self.config.train.clone()
        }
    }

    fn model<T: Scalar>(&self, scheme: &ClassScheme) -> Result<NetworkParams<T>> {
        self.model_at(scheme).map(|(params, _)| params)
    }

    /// The model and its checkpoint path in the cache.
    fn model_at<T: Scalar>(&self, scheme: &ClassScheme) -> Result<(NetworkParams<T>, PathBuf)> {
        let tc = self.train_config();
        let mut key = fnv1a(
            FNV_OFFSET,
            toml::to_string(&tc).expect("serializable").as_bytes(),
        );
        key = fnv1a(key, scheme.known_tag().as_bytes());
        for id in &self.fit {
            let t = self.tile(id);
            key = fnv1a(key, id.as_bytes());
            key = fnv1a(key, t.image.as_raw());
            key = fnv1a(key, t.labels.data());
        }
        let path = self.config.model_dir().join(format!(
            "{}-seed{}-{key:016x}.ckpt",
            scheme.known_tag(),
            tc.seed
        ));
        if path.is_file() {
            log::info!("loading cached model {}", path.display());
            return Ok((load_checkpoint_for(&path, scheme.n_known())?, path));
        }
        let fit_tiles: Vec<LabeledTile> = self.fit.iter().map(|id| self.tile(id).clone()).collect();
        let patches = extract_training_patches(&fit_tiles, scheme, tc.pool_per_class, tc.seed)?;
        log::info!(
            "training {}-class model [{}] on {} patches",
            scheme.n_known(),
            scheme.known_tag(),
            patches.len()
        );
        let (params, report) = train(init_network::<T>(scheme.n_known(), tc.seed)?, &patches, &tc)?;
        save_checkpoint(&params, &path)?;
        write(&path.with_extension("train.csv"), report.to_csv())?;
        Ok((params, path))
    }

    fn predict<T: Scalar>(
        &self,
        params: &NetworkParams<T>,
        ids: &[String],
    ) -> Result<Vec<(String, ProbabilityMap)>> {
        ids.iter()
            .map(|id| {
                log::debug!("predicting {id}");
                Ok((
                    id.clone(),
                    predict_image(params, &self.tile(id).image, self.config.inference_batch)?,
                ))
            })
            .collect()
    }

    fn evaluate(
        &self,
        unknown: &str,
        context: Context,
        scheme: &ClassScheme,
        probs: &[(String, ProbabilityMap)],
        tau: f64,
    ) -> Result<RunRecord> {
        let dir = self
            .config
            .out_dir
            .join("runs")
            .join(unknown)
            .join(context.as_str());
        let settings = &self.config.openset;
        let mut cm = ConfusionMatrix::new(scheme.n_known());
        for (id, p) in probs {
            let mut pred = if context.rejects() {
                threshold_reject_with(p, tau, settings.rule)?
            } else {
                argmax_decode(p)
            };
            if context == Context::OpenMorph {
                pred = morph_filter(&pred, settings.window)?;
            }
            write(&dir.join(format!("pred_{id}.png")), pred.to_png_bytes()?)?;
            accumulate(&mut cm, &pred, &self.tile(id).labels, scheme)?;
        }
        write(
            &dir.join("confusion.csv"),
            cm.to_csv(&matrix_labels(scheme))?,
        )?;
        write(
            &dir.join("legend.csv"),
            Legend::for_scheme(scheme, &self.palette)?.to_csv(),
        )?;
        let metrics = MetricsRow {
            experiment: self.config.name.clone(),
            unknown_class: unknown.to_string(),
            context: context.as_str().to_string(),
            tau,
            oa: overall_accuracy(&cm).ok(),
            na: normalized_accuracy(&cm).ok(),
            kappa: cohen_kappa(&cm).ok(),
        };
        log::info!(
            "{unknown}/{context}: tau {tau:.2}, OA {:?}, NA {:?}, kappa {:?}",
            metrics.oa,
            metrics.na,
            metrics.kappa
        );
        Ok(RunRecord {
            unknown: unknown.to_string(),
            context,
            tau,
            scheme: scheme.clone(),
            confusion: cm,
            metrics,
        })
    }
}

/// Lazily built all-class model outputs, shared by every rotation.
struct ClosedSet {
    scheme: ClassScheme,
    probs: Vec<(String, ProbabilityMap)>,
}

fn run_held_out<T: Scalar>(
    ws: &Workspace,
    unknown: &str,
    contexts: &[Context],
    closed: &mut Option<ClosedSet>,
    sweeps: &mut BTreeMap<String, SweepCurve>,
) -> Result<Vec<RunRecord>> {
    let mut records = Vec::new();
    let open: Vec<Context> = contexts.iter().copied().filter(|c| c.holds_out()).collect();
    let mut held = None;
    if !open.is_empty() {
        let scheme = ClassScheme::leave_one_out(&ws.classes, unknown)?;
        let params = ws.model::<T>(&scheme)?;
        let probs = ws.predict(&params, &ws.test)?;
        let tau = if open.iter().any(|c| c.rejects()) {
            match ws.config.openset.tau {
                TauSetting::Fixed(t) => t,
                TauSetting::Auto => {
                    let val = ws.predict(&params, &ws.val)?;
                    let pairs: Vec<(&ProbabilityMap, &crate::labels::LabelMap)> =
                        val.iter().map(|(id, p)| (p, &ws.tile(id).labels)).collect();
                    let curve = sweep_thresholds(
                        &pairs,
                        &scheme,
                        &ws.config.openset.grid,
                        ws.config.openset.rule,
                    )?;
                    write(
                        &ws.config
                            .out_dir
                            .join("runs")
                            .join(unknown)
                            .join("sweep.csv"),
                        curve.to_csv(),
                    )?;
                    let tau = select_threshold(&curve).map_err(|e| {
                        Error::Protocol(format!(
                            "cannot select a threshold on the validation tiles: {e}"
                        ))
                    })?;
                    log::info!("{unknown}: selected tau {tau}");
                    sweeps.insert(unknown.to_string(), curve);
                    tau
                }
            }
        } else {
            0.0
        };
        held = Some((scheme, probs, tau));
    }
    for &context in contexts {
        let record = if context == Context::ClosedClosed {
            if closed.is_none() {
                let scheme = ClassScheme::closed_set(&ws.classes)?;
                let params = ws.model::<T>(&scheme)?;
                let probs = ws.predict(&params, &ws.test)?;
                *closed = Some(ClosedSet { scheme, probs });
            }
            let c = closed.as_ref().expect("built above");
            ws.evaluate(unknown, context, &c.scheme, &c.probs, 0.0)?
        } else {
            let (scheme, probs, tau) = held.as_ref().expect("held-out model built");
            let tau = if context.rejects() { *tau } else { 0.0 };
            ws.evaluate(unknown, context, scheme, probs, tau)?
        };
        records.push(record);
    }
    Ok(records)
}

fn error_matrix(records: &[RunRecord], context: Context) -> Result<ErrorRateMatrix> {
    let runs: Vec<&RunRecord> = records.iter().filter(|r| r.context == context).collect();
    if context.holds_out() {
        let pairs: Vec<(&ClassScheme, &ConfusionMatrix)> =
            runs.iter().map(|r| (&r.scheme, &r.confusion)).collect();
        return per_class_error_rates(&pairs);
    }
    let columns = runs
        .first()
        .map(|r| r.scheme.classes().to_vec())
        .ok_or_else(|| Error::InvalidArgument("no closed-set runs".into()))?;
    let rows = runs
        .iter()
        .map(|r| {
            Ok((
                r.unknown.clone(),
                class_error_rates(&r.confusion, &r.scheme)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorRateMatrix { columns, rows })
}

fn run_with<T: Scalar>(
    config: &ExperimentConfig,
    palette: Palette,
    rotation: bool,
) -> Result<ExperimentReport> {
    let ws = Workspace::open(config.clone(), palette)?;
    let contexts = config.contexts()?;
    let unknowns: Vec<String> = match config.unknown_selection() {
        UnknownSelection::All => ws.classes.clone(),
        UnknownSelection::Class(c) => {
            if !ws.classes.contains(&c) {
                return Err(Error::Config(format!(
                    "unknown class `{c}` is not in the palette {:?}",
                    ws.classes
                )));
            }
            vec![c]
        }
        UnknownSelection::None => vec![],
    };
    let mut closed = None;
    let mut sweeps = BTreeMap::new();
    let mut records = Vec::new();
    if unknowns.is_empty() {
        records.extend(run_held_out::<T>(
            &ws,
            NO_UNKNOWN,
            &contexts,
            &mut closed,
            &mut sweeps,
        )?);
    }
    for u in &unknowns {
        let r = run_held_out::<T>(&ws, u, &contexts, &mut closed, &mut sweeps).map_err(|e| {
            Error::Rotation {
                class: u.clone(),
                source: Box::new(e),
            }
        })?;
        records.extend(r);
    }
    let report = ExperimentReport {
        out_dir: config.out_dir.clone(),
        records,
        sweeps,
    };
    write(&config.out_dir.join("metrics.csv"), report.metrics_csv())?;
    if rotation {
        for &c in &contexts {
            write(
                &config.out_dir.join(format!("error_rates_{c}.csv")),
                error_matrix(&report.records, c)?.to_csv(),
            )?;
        }
    }
    Ok(report)
}

/// Config with every path absolute and the palette pinned, as written to `manifest.toml`.
pub fn resolved_config(config: &ExperimentConfig) -> Result<(ExperimentConfig, Palette)> {
    config.validate()?;
    let (palette, palette_path) = resolve_palette(config)?;
    let resolved = ExperimentConfig {
        data_root: absolute(&config.data_root),
        palette: palette_path,
        out_dir: absolute(&config.out_dir),
        model_dir: Some(absolute(&config.model_dir())),
        train: TrainConfig {
            seed: config.seed,
            ..config.train.clone()
        },
        ..config.clone()
    };
    Ok((resolved, palette))
}

fn run(config: &ExperimentConfig, rotation: bool) -> Result<ExperimentReport> {
    let (config, palette) = resolved_config(config)?;
    let manifest = format!(
        "# openpixel {} run manifest; rerun with `openpixel run --config <this file>`\n{}",
        env!("CARGO_PKG_VERSION"),
        config.to_toml()
    );
    log::info!("resolved configuration:\n{manifest}");
    write(&config.out_dir.join("manifest.toml"), manifest)?;
    palette.save(&config.out_dir.join("palette.txt"))?;
    match config.train.precision {
        Precision::F32 => run_with::<f32>(&config, palette, rotation),
        Precision::F64 => run_with::<f64>(&config, palette, rotation),
    }
}

/// Trains the model for one scheme (`unknown = None` for every class) on the
/// fitting tiles, or finds it in the checkpoint cache. Returns the checkpoint path.
pub fn train_model(config: &ExperimentConfig, unknown: Option<&str>) -> Result<PathBuf> {
    let (config, palette) = resolved_config(config)?;
    let ws = Workspace::open(config, palette)?;
    let scheme = match unknown {
        Some(u) => ClassScheme::leave_one_out(&ws.classes, u)?,
        None => ClassScheme::closed_set(&ws.classes)?,
    };
    match ws.config.train.precision {
        Precision::F32 => ws.model_at::<f32>(&scheme).map(|(_, p)| p),
        Precision::F64 => ws.model_at::<f64>(&scheme).map(|(_, p)| p),
    }
}

/// Trains (or loads cached) models, predicts the test tiles and evaluates the
/// configured contexts, writing the result bundle to `out_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let rotation = config.unknown_selection() == UnknownSelection::All;
    run(config, rotation)
}

/// Every held-out class in turn, plus the per-context error-rate matrices.
pub fn run_rotation(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.unknown_selection() != UnknownSelection::All {
        return Err(Error::Config(format!(
            "rotation needs unknown = \"all\", got `{}`",
            config.unknown
        )));
    }
    run(config, true)
}
