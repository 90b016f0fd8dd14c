mod commands;
mod stage;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spectral_attr::{Error, GateSchedule, SvdMode, TargetKind};

/// Spectral path attribution for small image classifiers.
#[derive(Debug, Parser)]
#[command(name = "spectral-attr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute an attribution map and heatmap for one input.
    Attribute(AttributeArgs),
    /// Insertion/deletion curves, DiffID and optional localization scores.
    Evaluate(EvaluateArgs),
    /// Path frames, per-step contributions and the frequency trace.
    Analyze(AnalyzeArgs),
    /// Run the built-in invariant checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Sig,
    Ig,
    Gxi,
    Blur,
    Dct,
    Laplacian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Linear,
    Cosine,
    Sigmoid,
    Step,
}

impl From<ScheduleArg> for GateSchedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Linear => GateSchedule::Linear,
            ScheduleArg::Cosine => GateSchedule::Cosine,
            ScheduleArg::Sigmoid => GateSchedule::Sigmoid,
            ScheduleArg::Step => GateSchedule::Step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SvdModeArg {
    PerChannel,
    Joint,
}

impl From<SvdModeArg> for SvdMode {
    fn from(m: SvdModeArg) -> Self {
        match m {
            SvdModeArg::PerChannel => SvdMode::PerChannel,
            SvdModeArg::Joint => SvdMode::Joint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Prob,
    Logit,
}

impl From<TargetArg> for TargetKind {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Prob => TargetKind::Probability,
            TargetArg::Logit => TargetKind::Logit,
        }
    }
}

/// Options shared by every command that runs an attribution.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Input image (PGM P2, PPM P3 or tensor text).
    #[arg(long)]
    pub input: PathBuf,
    /// zero, mean, blur, or a path to an image of the input's shape.
    #[arg(long, default_value = "zero")]
    pub baseline: String,
    /// Weights file; defaults to a seeded tiny MLP sized to the input.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Sig)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// Activation-window overlap ω in (0, 1].
    #[arg(long, default_value_t = 0.4)]
    pub overlap: f64,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Linear)]
    pub schedule: ScheduleArg,
    #[arg(long = "svd-mode", value_enum, default_value_t = SvdModeArg::PerChannel)]
    pub svd_mode: SvdModeArg,
    #[arg(long, value_enum, default_value_t = TargetArg::Prob)]
    pub target: TargetArg,
    #[arg(long = "class", default_value_t = 0)]
    pub class: usize,
    /// Largest blur standard deviation for the blur path and baseline.
    #[arg(long = "blur-sigma", default_value_t = 35.0)]
    pub blur_sigma: f64,
    /// Heatmap clipping percentile in (50, 100].
    #[arg(long, default_value_t = 99.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Evaluate this attribution tensor instead of computing one.
    #[arg(long)]
    pub attribution: Option<PathBuf>,
    /// Number of curve points, including both endpoints.
    #[arg(long, default_value_t = spectral_attr::metrics::DEFAULT_FRACTIONS)]
    pub fractions: usize,
    /// Ground-truth mask image (pixels above 0.5 are inside).
    #[arg(long, conflicts_with = "bbox")]
    pub mask: Option<PathBuf>,
    /// Ground-truth box x0,y0,x1,y1 with inclusive corners.
    #[arg(long)]
    pub bbox: Option<String>,
    /// Heatmap mass captured by the top-mass region.
    #[arg(long, default_value_t = 0.5)]
    pub mass: f64,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Number of evenly spaced path points to render.
    #[arg(long, default_value_t = 9)]
    pub frames: usize,
    /// High-frequency cutoff as a fraction of the Nyquist radius.
    #[arg(long, default_value_t = 0.5)]
    pub cutoff: f64,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also check finite-difference gradients of this weights file.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) | Error::Degenerate(_) | Error::Precondition(_) => 1,
        Error::Io(_) | Error::Parse { .. } | Error::Syntax { .. } => 2,
        Error::NumericalFailure { .. } => 3,
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("SPECTRAL_ATTR_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        format!("SPECTRAL_ATTR_THREADS must be a non-negative integer, got '{raw}'")
    })?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    let outcome = match cli.command {
        Command::Attribute(a) => commands::attribute(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Analyze(a) => commands::analyze(&a),
        Command::Selftest(a) => commands::selftest(&a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
