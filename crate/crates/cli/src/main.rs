use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dirseg::{Connectivity, LossWeights};

mod commands;
mod dataset;

/// Direction-map nuclei segmentation tools.
#[derive(Debug, Parser)]
#[command(name = "dirseg", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Number of direction classes [default: 4]
    #[arg(long = "directions", global = true)]
    pub n_directions: Option<u8>,
    /// Pixel adjacency used by reconstruction (4 or 8)
    #[arg(long, global = true, default_value = "4")]
    pub connectivity: Connectivity,
    /// Loss weights w_ce,w_dice,w_dir,w_l2
    #[arg(long, global = true, default_value = "1.0,4.0,2.0,0.005")]
    pub weights: LossWeights,
    /// Worker threads; defaults to one per core
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Base seed for synthetic data
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

impl GlobalOpts {
    pub fn directions(&self) -> u8 {
        self.n_directions.unwrap_or(4)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode instance maps into direction maps
    Encode {
        /// Instance-map PNGs or directories of them
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Rebuild instances, classes and counts from segmentation and direction outputs
    Decode {
        /// Class map PNG or 7-channel tensor (file or directory)
        seg: PathBuf,
        /// Direction map PNG or N-channel tensor (file or directory)
        dir: PathBuf,
    },
    /// Score a prediction dataset against a ground-truth dataset
    Eval {
        gt: PathBuf,
        pred: PathBuf,
        /// Average PQ over images instead of pooling matches
        #[arg(long)]
        per_image: bool,
        /// Single R² over all classes' counts
        #[arg(long)]
        pooled_r2: bool,
    },
    /// Clamp and round raw count regressions
    Counts { input: PathBuf },
    /// Generate a synthetic dataset
    Synth(SynthArgs),
    /// Color overlay of an instance map
    Render {
        instances: PathBuf,
        #[arg(long)]
        classes: Option<PathBuf>,
    },
    /// Reference training loss for one image
    Loss(LossArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON generator config; flags below override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of images
    #[arg(long, default_value_t = 1)]
    pub images: usize,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub nuclei: Option<usize>,
    #[arg(long)]
    pub touching: bool,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// 7-channel segmentation tensor
    #[arg(long)]
    pub seg_pred: PathBuf,
    /// N-channel direction tensor
    #[arg(long)]
    pub dir_pred: PathBuf,
    /// Ground-truth class map PNG
    #[arg(long)]
    pub classes: PathBuf,
    /// Ground-truth direction map PNG
    #[arg(long)]
    pub direction_map: PathBuf,
    /// Predicted counts CSV
    #[arg(long, requires = "count_gt")]
    pub count_pred: Option<PathBuf>,
    /// Ground-truth counts CSV
    #[arg(long, requires = "count_pred")]
    pub count_gt: Option<PathBuf>,
    /// Row to use from the counts CSVs
    #[arg(long)]
    pub image: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
