//! `hairseg` command-line driver.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit statuses.
pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const DATA: u8 = 2;
    pub const VERIFY: u8 = 3;
}

#[derive(Parser, Debug)]
#[command(name = "hairseg", version, about = "Hair-mask segmentation: training, evaluation and reporting")]
struct Cli {
    /// Worker threads for data-parallel work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic hair-mask dataset.
    Synth(SynthArgs),
    /// Cross-validated training with checkpointing.
    Train(TrainArgs),
    /// Evaluate saved weights on a dataset.
    Eval(EvalArgs),
    /// Render markdown tables and learning curves from a metrics CSV.
    Report(ReportArgs),
    /// Finite-difference gradient verification.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output dataset root; `images/` and `masks/` are created inside.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub count: usize,
    /// Square image extent in pixels, a multiple of 32.
    #[arg(long, default_value_t = 64)]
    pub extent: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// key = value configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Dataset root holding `images/` and `masks/`.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoints, weights, metrics and report.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from checkpoints in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Run the three-variant ablation instead of a single cross-validation.
    #[arg(long)]
    pub ablation: bool,
    /// Stop after FOLD:EPOCH, leaving a resumable checkpoint.
    #[arg(long, hide = true, value_parser = parse_halt)]
    pub halt_after: Option<(usize, usize)>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "tiny")]
    pub preset: String,
    /// Perceptual network weights; LPIPS is reported as n/a without them.
    #[arg(long)]
    pub lpips_weights: Option<PathBuf>,
    /// Write the metrics as CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub csv: PathBuf,
    /// Directory for `report.md` and `learning_curves.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "tiny")]
    pub preset: String,
    /// Perturb one backward rule to confirm the suite notices.
    #[arg(long, hide = true)]
    pub corrupt_backward: bool,
}

fn parse_halt(s: &str) -> Result<(usize, usize), String> {
    let (f, e) = s.split_once(':').ok_or("expected FOLD:EPOCH")?;
    Ok((
        f.parse().map_err(|_| format!("bad fold {f:?}"))?,
        e.parse().map_err(|_| format!("bad epoch {e:?}"))?,
    ))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = commands::configure_threads(cli.threads) {
        eprintln!("error: {e}");
        return ExitCode::from(exit::USAGE);
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Report(a) => commands::report(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
