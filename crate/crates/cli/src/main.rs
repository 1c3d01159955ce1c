//! `openpixel` command-line driver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context as _, Result};
use clap::{ArgAction, Args, Parser, Subcommand};
use openpixel::dataset::{
    generate_synthetic, load_image, load_labels, save_dataset, ClassScheme, Palette, SynthConfig,
};
use openpixel::experiment::{
    render_outputs, resolve_palette, run_experiment, run_rotation, train_model, ExperimentConfig,
    ExperimentReport, TauSetting, UnknownSelection,
};
use openpixel::labels::LabelMap;
use openpixel::metrics::{
    accumulate, cohen_kappa, matrix_labels, normalized_accuracy, overall_accuracy, ConfusionMatrix,
};
use openpixel::net::{checkpoint_precision, decode_checkpoint, predict_image, Precision};
use openpixel::openset::{
    default_grid, morph_filter, select_threshold, sweep_thresholds, threshold_reject,
    ProbabilityMap,
};

#[derive(Parser)]
#[command(
    name = "openpixel",
    version,
    about = "Open-set semantic segmentation of aerial tiles"
)]
struct Cli {
    /// More log output (-v debug, -vv trace). RUST_LOG overrides.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

/// Config file plus flag overrides shared by the experiment commands.
#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config (TOML); built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset root holding tiles/<id>/{image,labels}.png
    #[arg(long)]
    data: Option<PathBuf>,
    /// Seed for initialization, patch sampling and the validation hold-out
    #[arg(long)]
    seed: Option<u64>,
    /// Rejection threshold in [0, 1], or `auto` to select it on validation tiles
    #[arg(long)]
    tau: Option<TauSetting>,
    /// closed_closed, closed_open, open_open, open_morph or all
    #[arg(long)]
    context: Option<String>,
    /// Held-out class name, `all` or `none`
    #[arg(long)]
    unknown: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(d) = &self.data {
            cfg.data_root = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.tau {
            cfg.openset.tau = t;
        }
        if let Some(c) = &self.context {
            cfg.context = c.clone();
        }
        if let Some(u) = &self.unknown {
            cfg.unknown = u.clone();
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        cfg.validate()?;
        log::info!(
            "seed {}, tau {}, context {}, unknown {}, out {}",
            cfg.seed,
            cfg.openset.tau,
            cfg.context,
            cfg.unknown,
            cfg.out_dir.display()
        );
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic labeled dataset
    SynthGen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        tiles: usize,
        /// Tile side in pixels
        #[arg(long, default_value_t = 256)]
        size: usize,
        /// Number of classes, 2 to 5
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the model for `--unknown` (a class, `none` for all classes, or `all` for every scheme)
    Train(ExperimentArgs),
    /// Per-pixel class probabilities of one image
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Probability map output
        #[arg(long)]
        out: PathBuf,
        /// Also write thresholded labels (ids, UNKNOWN = 254) to this PNG
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        tau: f64,
        #[arg(long, default_value_t = 4096)]
        batch: usize,
    },
    /// Accuracy versus threshold over probability maps with ground truth
    Sweep {
        /// Probability maps, paired in order with --labels
        #[arg(long, required = true, num_args = 1..)]
        probs: Vec<PathBuf>,
        /// Color-coded ground truth PNGs
        #[arg(long, required = true, num_args = 1..)]
        labels: Vec<PathBuf>,
        /// Class the model was trained without
        #[arg(long)]
        unknown: String,
        /// Class color table; ISPRS colors when omitted
        #[arg(long)]
        palette: Option<PathBuf>,
        /// Sweep CSV output
        #[arg(long)]
        out: PathBuf,
    },
    /// Reassign boundary UNKNOWN pixels of a prediction map
    Morph {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        window: usize,
    },
    /// Score a prediction map against ground truth
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Held-out class, or `none` for a model trained on every class
        #[arg(long)]
        unknown: String,
        #[arg(long)]
        palette: Option<PathBuf>,
        /// Confusion matrix CSV output
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full experiment for the configured unknown class and contexts
    Run(ExperimentArgs),
    /// Every unknown-class rotation plus error-rate matrices
    Rotate(ExperimentArgs),
    /// Colorize prediction maps and plot sweeps of a result bundle
    Render {
        /// Result bundle written by `run` or `rotate`
        #[arg(long)]
        out: PathBuf,
    },
}

fn palette_or_default(path: &Option<PathBuf>) -> Result<Palette> {
    Ok(match path {
        Some(p) => Palette::load(p)?,
        None => Palette::isprs(),
    })
}

fn scheme_for(palette: &Palette, unknown: &str) -> Result<ClassScheme> {
    Ok(match unknown {
        "none" => ClassScheme::closed_set(&palette.class_names())?,
        u => ClassScheme::leave_one_out(&palette.class_names(), u)?,
    })
}

fn read_pred(path: &Path) -> Result<LabelMap> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    LabelMap::from_png_bytes(&bytes).with_context(|| path.display().to_string())
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn print_summary(report: &ExperimentReport) {
    print!("{}", report.metrics_csv());
    eprintln!("results in {}", report.out_dir.display());
}

fn predict(checkpoint: &Path, image: &Path, batch: usize) -> Result<ProbabilityMap> {
    let bytes =
        std::fs::read(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    let image = load_image(image)?;
    let probs = match checkpoint_precision(&bytes)? {
        Precision::F32 => predict_image(&decode_checkpoint::<f32>(&bytes)?, &image, batch)?,
        Precision::F64 => predict_image(&decode_checkpoint::<f64>(&bytes)?, &image, batch)?,
    };
    Ok(probs)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::SynthGen {
            out,
            tiles,
            size,
            classes,
            seed,
        } => {
            ensure!((2..=5).contains(&classes), "--classes must lie in 2..=5");
            let cfg = SynthConfig::five_class(tiles, size, seed).with_classes(classes);
            save_dataset(&out, &generate_synthetic(&cfg)?, &cfg.palette()?)?;
            eprintln!("{tiles} tiles written to {}", out.display());
        }
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let (palette, _) = resolve_palette(&cfg)?;
            let targets: Vec<Option<String>> = match cfg.unknown_selection() {
                UnknownSelection::All => palette
                    .class_names()
                    .into_iter()
                    .map(Some)
                    .chain(std::iter::once(None))
                    .collect(),
                UnknownSelection::None => vec![None],
                UnknownSelection::Class(c) => vec![Some(c)],
            };
            for t in targets {
                println!("{}", train_model(&cfg, t.as_deref())?.display());
            }
        }
        Command::Predict {
            checkpoint,
            image,
            out,
            pred,
            tau,
            batch,
        } => {
            ensure!(batch > 0, "--batch must be positive");
            let probs = predict(&checkpoint, &image, batch)?;
            probs.save(&out)?;
            if let Some(p) = pred {
                write_file(&p, threshold_reject(&probs, tau)?.to_png_bytes()?)?;
            }
        }
        Command::Sweep {
            probs,
            labels,
            unknown,
            palette,
            out,
        } => {
            ensure!(
                probs.len() == labels.len(),
                "{} probability maps but {} label images",
                probs.len(),
                labels.len()
            );
            let palette = palette_or_default(&palette)?;
            let scheme = ClassScheme::leave_one_out(&palette.class_names(), &unknown)?;
            let maps = probs
                .iter()
                .map(|p| ProbabilityMap::load(p))
                .collect::<openpixel::Result<Vec<_>>>()?;
            let truth = labels
                .iter()
                .map(|p| load_labels(p, &palette))
                .collect::<openpixel::Result<Vec<_>>>()?;
            let pairs: Vec<_> = maps.iter().zip(&truth).collect();
            let curve = sweep_thresholds(&pairs, &scheme, &default_grid(), Default::default())?;
            write_file(&out, curve.to_csv())?;
            match select_threshold(&curve) {
                Ok(t) => println!("selected tau {t}"),
                Err(e) => log::warn!("no threshold selected: {e}"),
            }
        }
        Command::Morph { pred, out, window } => {
            let filtered = morph_filter(&read_pred(&pred)?, window)?;
            write_file(&out, filtered.to_png_bytes()?)?;
        }
        Command::Evaluate {
            pred,
            labels,
            unknown,
            palette,
            out,
        } => {
            let palette = palette_or_default(&palette)?;
            let scheme = scheme_for(&palette, &unknown)?;
            let mut cm = ConfusionMatrix::new(scheme.n_known());
            accumulate(
                &mut cm,
                &read_pred(&pred)?,
                &load_labels(&labels, &palette)?,
                &scheme,
            )?;
            let show = |v: openpixel::Result<f64>| {
                v.map_or_else(|e| format!("undefined ({e})"), |v| format!("{v:.6}"))
            };
            println!("oa {}", show(overall_accuracy(&cm)));
            println!("na {}", show(normalized_accuracy(&cm)));
            println!("kappa {}", show(cohen_kappa(&cm)));
            if let Some(o) = out {
                write_file(&o, cm.to_csv(&matrix_labels(&scheme))?)?;
            }
        }
        Command::Run(args) => print_summary(&run_experiment(&args.resolve()?)?),
        Command::Rotate(args) => {
            if let Some(u) = args.unknown.as_deref().filter(|u| *u != "all") {
                bail!("rotate holds out every class in turn; drop --unknown {u} or use `run`");
            }
            let mut cfg = args.resolve()?;
            cfg.unknown = "all".into();
            print_summary(&run_rotation(&cfg)?);
        }
        Command::Render { out } => {
            let written = render_outputs(&out)?;
            eprintln!("{} images written under {}", written.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
