//! `eigenseg`: batch localization, segmentation, semantic segmentation and
//! matting from precomputed DSFT feature files.
//!
//! Exit codes: 0 success, 1 evaluation or convergence failure, 2 bad input
//! or I/O error.

mod commands;
mod gt;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eigenseg::pipeline::PipelineConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] eigenseg::Error),
    /// Unreadable or malformed input.
    #[error("{0}")]
    Input(String),
    /// Processing or evaluation failed.
    #[error("{0}")]
    Failure(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use eigenseg::Error as E;
        match self {
            CliError::Input(_) => 2,
            CliError::Failure(_) => 1,
            CliError::Core(e) => match e {
                E::Io(_)
                | E::Image(_)
                | E::Json(_)
                | E::BadMagic(_)
                | E::UnsupportedVersion(_)
                | E::Truncated { .. }
                | E::MissingSidecar(_) => 2,
                _ => 1,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "eigenseg", version, about = "Spectral decomposition of images from deep features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Pipeline settings; flags override the `--config` file, which overrides
/// the built-in defaults.
#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// TOML file with pipeline settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weight of the KNN color affinity.
    #[arg(long)]
    lambda_knn: Option<f64>,
    /// Neighbors per pixel in the color affinity.
    #[arg(long)]
    knn_k: Option<usize>,
    /// Eigenvectors used for per-image clustering.
    #[arg(long)]
    eigs: Option<usize>,
    #[arg(long)]
    per_image_k: Option<usize>,
    #[arg(long)]
    dataset_k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

impl PipelineArgs {
    pub fn resolve(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.lambda_knn {
            cfg.lambda_knn = v;
        }
        if let Some(v) = self.knn_k {
            cfg.knn_k = v;
        }
        if let Some(v) = self.eigs {
            cfg.n_eigenvectors = v;
        }
        if let Some(v) = self.per_image_k {
            cfg.per_image_k = v;
        }
        if let Some(v) = self.dataset_k {
            cfg.dataset_k = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.validate().map_err(|e| CliError::Input(e.to_string()))?;
        Ok(cfg)
    }
}

fn load_config(path: &Path) -> Result<PipelineConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Directory of `<image_id>.dsft` feature files.
    #[arg(long)]
    features: PathBuf,
    /// Directory of `<image_id>.png` images.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Single-object bounding boxes; CorLoc when `--gt` is given.
    Localize {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Ground-truth boxes JSON `{image_id: [[x1, y1, x2, y2], ...]}`.
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// CRF-refined object masks; mIoU when `--gt` is given.
    Segment {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Directory of ground-truth masks `<image_id>.png` (nonzero = object).
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Dataset-level semantic segmentation and pseudo-label export.
    Semseg {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Directory of ground-truth label maps `<image_id>.png`.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Ground-truth class count including background (default: dataset K + 1).
        #[arg(long)]
        classes: Option<usize>,
        /// Directory of precomputed segment descriptor sidecars.
        #[arg(long)]
        descriptors: Option<PathBuf>,
    },
    /// Soft mattes from full-resolution eigenvectors.
    Matte {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Background image for compositing.
        #[arg(long)]
        background: Option<PathBuf>,
        /// Fraction of feature pairs kept.
        #[arg(long)]
        sample_rate: Option<f64>,
    },
    /// CorLoc of a predictions file.
    EvalCorloc {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Write `report.json` here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// mIoU between two directories of label maps.
    EvalMiou {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Class count including background.
        #[arg(long)]
        classes: usize,
        /// Match predicted ids to classes before scoring.
        #[arg(long)]
        matched: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a directory of VOC XML annotations into a boxes JSON.
    ConvertGt {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Localize { input, pipeline, gt } => commands::localize(&input, &pipeline, gt.as_deref()),
        Command::Segment { input, pipeline, gt } => commands::segment(&input, &pipeline, gt.as_deref()),
        Command::Semseg { input, pipeline, gt, classes, descriptors } => {
            commands::semseg(&input, &pipeline, gt.as_deref(), classes, descriptors)
        }
        Command::Matte { input, pipeline, background, sample_rate } => {
            commands::matte(&input, &pipeline, background.as_deref(), sample_rate)
        }
        Command::EvalCorloc { predictions, gt, out } => commands::eval_corloc(&predictions, &gt, out.as_deref()),
        Command::EvalMiou { pred, gt, classes, matched, out } => {
            commands::eval_miou(&pred, &gt, classes, matched, out.as_deref())
        }
        Command::ConvertGt { annotations, out } => commands::convert_gt(&annotations, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
