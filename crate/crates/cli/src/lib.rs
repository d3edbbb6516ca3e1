//! `wavehax` command line: harmonic priors, synthesis, aliasing analysis,
//! gradient checks, toy training, evaluation and model accounting.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 internal failure
//! (including failed gradient checks).

pub mod checks;
mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use wavehax_core::{Error, Result};

pub use commands::load_generator_config;

#[derive(Debug, Parser)]
#[command(name = "wavehax", version, about = "Aliasing-free neural vocoder toolkit")]
pub struct Cli {
    /// key = value file overriding the generator configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the band-limited harmonic prior of an F0 contour
    Prior(PriorArgs),
    /// Synthesize a waveform from mel features and F0 with a checkpoint
    Synth(SynthArgs),
    /// Extract log-mel features of a WAV file into a `MELS` feature file
    Mel(MelArgs),
    /// Spectra of a pure tone through the oversampled nonlinearity
    AnalyzeAlias(AliasArgs),
    /// Harmonic coefficients of sin^k
    SinePowers(SinePowersArgs),
    /// Finite-difference checks of every differentiable op and the generator
    Gradcheck(GradcheckArgs),
    /// Train a small generator and discriminator bank
    TrainToy(TrainArgs),
    /// Multi-resolution STFT distance between reference and synthesized audio
    Eval(EvalArgs),
    /// Parameter count, MACs per second and receptive field
    Info(InfoArgs),
}

#[derive(Debug, Args)]
pub struct PriorOptions {
    /// frame power constant; the prior's mean square is lc²
    #[arg(long, default_value_t = 0.1)]
    pub lc: f64,
    /// standard deviation of the additive Gaussian noise
    #[arg(long, default_value_t = 0.01)]
    pub noise_sigma: f64,
    /// highest harmonic frequency in Hz (default: Nyquist)
    #[arg(long)]
    pub fmax: Option<f64>,
    /// harmonic | sine | noise
    #[arg(long, default_value = "harmonic")]
    pub kind: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PriorArgs {
    /// F0 contour CSV (`frame_index,f0_hz`)
    #[arg(long)]
    pub f0: PathBuf,
    #[arg(long, default_value_t = 24000)]
    pub sr: u32,
    /// contour hop in samples (default: 10 ms)
    #[arg(long)]
    pub hop: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// store 16-bit PCM instead of 32-bit float
    #[arg(long)]
    pub pcm16: bool,
    #[command(flatten)]
    pub prior: PriorOptions,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// mel feature file (`MELS` header, f32 frames × bands)
    #[arg(long)]
    pub mel: PathBuf,
    #[arg(long)]
    pub f0: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub pcm16: bool,
    #[command(flatten)]
    pub prior: PriorOptions,
}

#[derive(Debug, Args)]
pub struct MelArgs {
    #[arg(long)]
    pub wav: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AliasArgs {
    /// tone frequency in Hz
    #[arg(long, default_value_t = 60.0)]
    pub f0: f64,
    #[arg(long, default_value_t = 1000)]
    pub sr: u32,
    #[arg(long, default_value_t = 8192)]
    pub len: usize,
    /// identity | relu | tanh | snake | snake:ALPHA | poly:c0,c1,...
    #[arg(long, default_value = "relu")]
    pub nonlinearity: String,
    /// spectra CSV (`signal,bin_hz,log_amplitude_db`); summary goes to stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SinePowersArgs {
    #[arg(long)]
    pub k: i64,
    /// CSV `m,a_m,b_m` (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// directory of `*.wav` files with sibling `*.f0.csv` contours
    #[arg(long, conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    /// train on this many generated voiced utterances instead of `--data`
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// length of each generated utterance in seconds
    #[arg(long, default_value_t = 1.0)]
    pub synthetic_seconds: f64,
    /// updates with all three losses
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// mel-only updates before adversarial training starts
    #[arg(long, default_value_t = 0)]
    pub warmup_steps: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub warmup_lr: f64,
    #[arg(long, default_value_t = 2e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 16)]
    pub segment_frames: usize,
    /// comma-separated per-subdiscriminator loss weights
    #[arg(long)]
    pub sub_weights: Option<String>,
    /// also write the checkpoint every N steps
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// training log CSV (default: `<out>.log.csv`)
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// reference `*.wav` files
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// synthesized files with the same names
    #[arg(long)]
    pub syn: PathBuf,
    /// per-utterance CSV (default: stdout). Both signals are scaled to
    /// 0.25 RMS first, standing in for loudness normalization; lengths are
    /// trimmed to the shorter signal.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// per-F0-bin CSV from `<ref>/<name>.f0.csv` contours (10 ms hop)
    #[arg(long)]
    pub bins: Option<PathBuf>,
    #[arg(long, default_value_t = 30.0)]
    pub bin_hz: f64,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    /// list every layer
    #[arg(long)]
    pub layers: bool,
}

/// Exit code for an error: 2 for internal failures, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Internal(_) => 2,
        _ => 1,
    }
}

/// Run with explicit arguments (the first is the program name) and streams.
pub fn run_with(argv: impl IntoIterator<Item = OsString>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    1
                }
            };
        }
    };
    match commands::dispatch(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(argv: impl IntoIterator<Item = OsString>) -> i32 {
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::invalid(msg)
}

pub(crate) type CmdResult = Result<()>;
