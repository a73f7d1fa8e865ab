mod commands;
mod config;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lofi_core::features::FeatureMode;

/// Exit status for malformed command lines; module errors use [`lofi_core::Error::exit_code`].
const USAGE_EXIT: u8 = 64;

/// Camera-labelled Wi-Fi CSI dataset tooling.
#[derive(Parser, Debug)]
#[command(name = "lofi", version, about)]
pub struct Cli {
    /// JSON config supplying defaults for any flag (a scenario file for `simulate`)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Suppress summaries on stdout
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Override the scenario seed for `simulate`
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the ground-plane homography from four anchors
    Calibrate {
        #[arg(long, value_name = "FILE")]
        anchors: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Turn per-frame detections into ground-plane position labels
    Label {
        #[arg(long, value_name = "FILE")]
        detections: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        homography: Option<PathBuf>,
        #[arg(long)]
        target_label: Option<String>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Fill lost CSI packets by interpolation
    Complete {
        #[arg(long, value_name = "FILE")]
        csi: Option<PathBuf>,
        #[command(flatten)]
        stream: StreamArgs,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Pair every CSI packet with the nearest position label
    Align {
        #[arg(long, value_name = "FILE")]
        csi: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        labels: PathBuf,
        #[command(flatten)]
        stream: StreamArgs,
        #[command(flatten)]
        labeling: LabelingArgs,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Also write the dataset as CSV
        #[arg(long, value_name = "FILE")]
        out_csv: Option<PathBuf>,
    },
    /// Extract per-window features from a labelled dataset
    Features {
        #[arg(long, value_name = "FILE")]
        dataset: PathBuf,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Score k-NN localization against the constant predictor
    Eval {
        #[arg(long, value_name = "FILE")]
        dataset: PathBuf,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        split: Option<f64>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        knn: Option<usize>,
        /// Write the full report as JSON
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
        /// Write the k-NN error CDF as CSV
        #[arg(long, value_name = "FILE")]
        cdf_out: Option<PathBuf>,
    },
    /// Generate detections, CSI and ground truth for a scenario
    Simulate {
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Compare produced positions with simulator ground truth
    EvalLabels {
        /// Label or dataset JSONL
        #[arg(long, value_name = "FILE")]
        produced: PathBuf,
        #[arg(long, value_name = "FILE")]
        truth: PathBuf,
    },
    /// Calibrate, label, complete and align in one run
    Pipeline {
        #[arg(long, value_name = "FILE")]
        anchors: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        detections: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        csi: Option<PathBuf>,
        #[arg(long)]
        target_label: Option<String>,
        #[command(flatten)]
        stream: StreamArgs,
        #[command(flatten)]
        labeling: LabelingArgs,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long, value_name = "FILE")]
        out_csv: Option<PathBuf>,
        /// Run report (JSON)
        #[arg(long, value_name = "FILE")]
        report: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct StreamArgs {
    /// Nominal CSI rate, Hz
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub subcarriers: Option<usize>,
}

#[derive(Args, Debug)]
pub struct LabelingArgs {
    #[arg(long)]
    pub person_id: Option<String>,
    /// Largest accepted packet-to-label distance, seconds (default two camera periods)
    #[arg(long)]
    pub max_gap: Option<f64>,
    /// Camera frame rate, Hz
    #[arg(long)]
    pub camera_rate: Option<f64>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
pub enum ModeArg {
    Corr,
    Std,
}

impl From<ModeArg> for FeatureMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Corr => FeatureMode::Corr,
            ModeArg::Std => FeatureMode::Std,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(USAGE_EXIT) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({
                "error": e.kind(),
                "code": e.exit_code(),
                "message": e.to_string(),
            });
            eprintln!("{line}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
