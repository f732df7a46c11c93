use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

mod commands;

/// Speech-to-gesture pipeline tools.
#[derive(Parser)]
#[command(name = "oratorio", version)]
struct Cli {
    /// Pipeline configuration JSON; subcommand flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pipeline: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align keypoint frames to a reference speaker frame.
    Normalize(NormalizeArgs),
    /// Cluster pose vectors into a gesture library.
    Discover(DiscoverArgs),
    /// Split a WAV recording into phrases.
    Segment(SegmentArgs),
    /// Train the phrase-to-gesture forest.
    Train(TrainArgs),
    /// Print the gesture predicted for a phrase.
    Predict(PredictArgs),
    /// Build a performance script for one behaviour mode.
    Script(ScriptArgs),
    /// Replay a script against a gaze log.
    Simulate(SimulateArgs),
    /// Attention ratios and modulation trace for a gaze log.
    Attend(AttendArgs),
    /// One-way ANOVA over behaviour scores.
    Anova(AnovaArgs),
}

#[derive(Args)]
struct NormalizeArgs {
    #[arg(long)]
    keypoints: PathBuf,
    /// Frame id, or `auto` for the first frame with a usable head.
    #[arg(long, default_value = "auto")]
    reference: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiscoverArgs {
    #[arg(long)]
    keypoints: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// JSON array of gesture names, or `default`.
    #[arg(long, default_value = "default")]
    names: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    audio: PathBuf,
    /// Segmenter configuration JSON, or `default`.
    #[arg(long, default_value = "default")]
    config: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    text: String,
}

#[derive(Args)]
struct ScriptArgs {
    #[arg(long)]
    phrases: PathBuf,
    #[arg(long)]
    transcript: PathBuf,
    /// Required for modes 2 to 4.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    library: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    mode: Option<u8>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    script: PathBuf,
    #[arg(long)]
    gaze: PathBuf,
    /// Camera geometry JSON, or `default`.
    #[arg(long)]
    geometry: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttendArgs {
    #[arg(long)]
    gaze: PathBuf,
    /// Camera geometry JSON, or `default`.
    #[arg(long)]
    geometry: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnovaArgs {
    #[arg(long)]
    scores: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
