//! Command-line entry points: scan, train, eval, predict and feature
//! dumps.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or model
//! errors. All machine-readable output (manifest CSV, report CSV,
//! model JSON) goes to files or stdout; diagnostics go to stderr.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::data::{
    build_feature_matrix, read_manifest_csv, scan_dataset, stratified_split, write_manifest_csv,
    DataError, DatasetManifest,
};
use crate::eval::{
    accuracy, confusion_matrix, render_report_csv, render_report_text, run_experiment, EvalError,
    ExperimentOptions,
};
use crate::features::{extract, render_hog_cells, FeatureConfig, FeatureError, FeatureKind};
use crate::imgio::{load_image, resize_bilinear_rgb, save_gray_png, to_grayscale, ImageError};
use crate::learn::{
    load_model, predict_label, predict_proba, save_model, train_logreg, train_svm, LabelSpace,
    LinearModel, ModelIoError, ModelKind, Task, TrainConfig, TrainError,
};

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    ModelIo(#[from] ModelIoError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("cannot write {path}: {reason}")]
    Write { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    Country,
    Year,
}

impl From<TaskArg> for Task {
    fn from(value: TaskArg) -> Self {
        match value {
            TaskArg::Country => Task::Country,
            TaskArg::Year => Task::Year,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FeatureArg {
    Hist,
    Hog,
    Daisy,
    All,
}

impl From<FeatureArg> for FeatureKind {
    fn from(value: FeatureArg) -> Self {
        match value {
            FeatureArg::Hist => FeatureKind::Hist,
            FeatureArg::Hog => FeatureKind::Hog,
            FeatureArg::Daisy => FeatureKind::Daisy,
            FeatureArg::All => FeatureKind::All,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Svm,
    Logreg,
}

impl From<ModelArg> for ModelKind {
    fn from(value: ModelArg) -> Self {
        match value {
            ModelArg::Svm => ModelKind::Svm,
            ModelArg::Logreg => ModelKind::Logreg,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "stampid",
    about = "Stamp image classification by country and year",
    version,
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct TrainFlags {
    /// Passes over the training data
    #[arg(long, default_value_t = 100)]
    epochs: u32,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    /// L2 regularization weight
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
}

impl TrainFlags {
    fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            l2_lambda: self.l2,
            epochs_sgd: self.epochs,
            batch_size: self.batch_size,
            seed,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scan a country/year directory tree into a manifest CSV
    Scan {
        /// Dataset root: root/<country>/<year>/<image>.{png,jpg,jpeg}
        root: PathBuf,
        /// Manifest CSV destination (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model and write it as versioned JSON
    Train {
        /// Dataset root directory or manifest CSV
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, value_enum, default_value_t = FeatureArg::Hist)]
        feature: FeatureArg,
        #[arg(long, value_enum, default_value_t = ModelArg::Svm)]
        model: ModelArg,
        /// Model JSON destination
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Train/test split ratio (train side)
        #[arg(long, default_value_t = 2.0 / 3.0)]
        ratio: f64,
        /// Train on all records instead of a held-out split
        #[arg(long)]
        full: bool,
        /// Expand the training set with flips and rotations
        #[arg(long)]
        augment: bool,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Run the repeated split/train/test protocol and report
    Eval {
        /// Dataset root directory or manifest CSV
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, value_enum, default_value_t = FeatureArg::Hist)]
        feature: FeatureArg,
        #[arg(long, value_enum, default_value_t = ModelArg::Svm)]
        model: ModelArg,
        #[arg(long, default_value_t = 5)]
        repeats: u32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 2.0 / 3.0)]
        ratio: f64,
        /// Expand the training side with flips and rotations
        #[arg(long)]
        augment: bool,
        /// Also expand the test side (robustness mode)
        #[arg(long)]
        eval_augmented: bool,
        /// Report CSV destination (text report always goes to stdout)
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Classify one image with a saved model
    Predict {
        /// Model JSON written by `train`
        #[arg(long)]
        model: PathBuf,
        image: PathBuf,
    },
    /// Print descriptor dimensions for one image
    DumpFeatures {
        image: PathBuf,
        #[arg(long, value_enum, default_value_t = FeatureArg::All)]
        feature: FeatureArg,
        /// Write a PNG star plot of the per-cell HOG histograms
        #[arg(long)]
        dump_hog: Option<PathBuf>,
    },
}

/// Parses arguments and runs the selected subcommand, returning the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Scan { root, out } => cmd_scan(&root, out.as_deref()),
        Command::Train {
            manifest,
            task,
            feature,
            model,
            out,
            seed,
            ratio,
            full,
            augment,
            train,
        } => cmd_train(
            &manifest,
            task.into(),
            feature.into(),
            model.into(),
            &out,
            seed,
            ratio,
            full,
            augment,
            &train.to_config(seed),
        ),
        Command::Eval {
            manifest,
            task,
            feature,
            model,
            repeats,
            seed,
            ratio,
            augment,
            eval_augmented,
            out,
            train,
        } => cmd_eval(
            &manifest,
            task.into(),
            feature.into(),
            model.into(),
            repeats,
            seed,
            ratio,
            augment,
            eval_augmented,
            out.as_deref(),
            &train.to_config(seed),
        ),
        Command::Predict { model, image } => cmd_predict(&model, &image),
        Command::DumpFeatures {
            image,
            feature,
            dump_hog,
        } => cmd_dump_features(&image, feature.into(), dump_hog.as_deref()),
    }
}

fn load_manifest(path: &Path) -> Result<DatasetManifest, CliError> {
    if path.is_dir() {
        Ok(scan_dataset(path)?.manifest)
    } else {
        Ok(read_manifest_csv(path)?)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Write {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn tally(manifest: &DatasetManifest, labels: &[String], task: Task) -> String {
    labels
        .iter()
        .map(|l| {
            let n = manifest
                .records()
                .iter()
                .filter(|r| r.label(task) == l)
                .count();
            format!("{l}={n}")
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn cmd_scan(root: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let scan = scan_dataset(root)?;
    if scan.skipped > 0 {
        eprintln!("warning: skipped {} non-image files", scan.skipped);
    }
    let mut csv_bytes = Vec::new();
    write_manifest_csv(&scan.manifest, &mut csv_bytes)?;
    let summary = format!(
        "records: {}\ncountries: {}\nyears: {}\n",
        scan.manifest.len(),
        tally(&scan.manifest, scan.manifest.countries(), Task::Country),
        tally(&scan.manifest, scan.manifest.years(), Task::Year),
    );
    match out {
        Some(path) => {
            std::fs::write(path, &csv_bytes).map_err(|e| CliError::Write {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
            print!("{summary}");
            println!("wrote {}", path.display());
        }
        None => {
            print!("{}", String::from_utf8_lossy(&csv_bytes));
            eprint!("{summary}");
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    manifest_path: &Path,
    task: Task,
    feature: FeatureKind,
    model_kind: ModelKind,
    out: &Path,
    seed: u64,
    ratio: f64,
    full: bool,
    augment: bool,
    tc: &TrainConfig,
) -> Result<(), CliError> {
    let manifest = load_manifest(manifest_path)?;
    let cfg = FeatureConfig::default();
    let space = LabelSpace::new(task, manifest.labels(task).to_vec())?;

    let all_indices: Vec<usize> = (0..manifest.len()).collect();
    let (train_idx, test_idx) = if full {
        (all_indices, Vec::new())
    } else {
        let split = stratified_split(&manifest, task, ratio, seed)?;
        (split.train, split.test)
    };

    let (x, countries, years) = build_feature_matrix(&manifest, &train_idx, feature, &cfg, augment)?;
    let labels = match task {
        Task::Country => &countries,
        Task::Year => &years,
    };
    let y: Vec<&str> = labels.iter().map(String::as_str).collect();
    let model = match model_kind {
        ModelKind::Svm => train_svm(&x, &y, &space, &cfg, tc)?,
        ModelKind::Logreg => train_logreg(&x, &y, &space, &cfg, tc)?,
    };
    println!(
        "model: {model_kind}  task: {task}  feature: {feature}  dim: {}",
        model.feature_dim()
    );
    println!("train samples: {}", x.len());

    if !test_idx.is_empty() {
        let (tx, tc_labels, ty_labels) =
            build_feature_matrix(&manifest, &test_idx, feature, &cfg, false)?;
        let truth = match task {
            Task::Country => tc_labels,
            Task::Year => ty_labels,
        };
        let pred: Vec<String> = tx
            .iter()
            .map(|fv| predict_label(&model, fv).map(str::to_owned))
            .collect::<Result<_, _>>()?;
        let cm = confusion_matrix(&truth, &pred, &space)?;
        println!("held-out accuracy: {:.1}", accuracy(&cm)? * 100.0);
    }

    save_model(&model, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    manifest_path: &Path,
    task: Task,
    feature: FeatureKind,
    model_kind: ModelKind,
    repeats: u32,
    seed: u64,
    ratio: f64,
    augment: bool,
    eval_augmented: bool,
    out: Option<&Path>,
    tc: &TrainConfig,
) -> Result<(), CliError> {
    let manifest = load_manifest(manifest_path)?;
    let cfg = FeatureConfig::default();
    let opts = ExperimentOptions {
        ratio,
        augment_train: augment,
        eval_augmented,
    };
    let report = run_experiment(
        &manifest, task, feature, model_kind, &cfg, tc, repeats, seed, &opts,
    )?;
    print!("{}", render_report_text(&report));
    if let Some(path) = out {
        write_file(path, &render_report_csv(&report))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_predict(model_path: &Path, image_path: &Path) -> Result<(), CliError> {
    let model: LinearModel = load_model(model_path)?;
    let img = load_image(image_path)?;
    let fv = extract(&img, model.feature_kind(), model.feature_config())?;
    let label = predict_label(&model, &fv)?;
    println!("{label}");
    if model.kind() == ModelKind::Logreg {
        let proba = predict_proba(&model, &fv)?;
        let mut ranked: Vec<(usize, f64)> = proba.iter().cloned().enumerate().collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for (idx, p) in ranked {
            println!("{}  {:.12}", model.label_space().labels()[idx], p);
        }
    }
    Ok(())
}

fn cmd_dump_features(
    image_path: &Path,
    feature: FeatureKind,
    dump_hog: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = FeatureConfig::default();
    let img = load_image(image_path)?;
    let fv = extract(&img, feature, &cfg)?;
    println!("kind: {}  dim: {}", fv.kind, fv.dim());
    if let Some(path) = dump_hog {
        let canonical = resize_bilinear_rgb(&img, cfg.canonical_size, cfg.canonical_size)?;
        let plot = render_hog_cells(&to_grayscale(&canonical), &cfg, 16);
        save_gray_png(&plot, path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
