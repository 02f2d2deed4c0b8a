//! `rppg` command-line front end.
//!
//! Exit status: 0 success, 2 argument or format error, 3 data or alignment
//! error, 1 internal error. `RPPG_THREADS` caps the worker pool size.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rppg_core::clips::Resize;
use rppg_core::error::ErrorKind;
use rppg_core::frames::{CfaLayout, Roi, WhiteBalance};
use rppg_core::rppg::Method;

/// Bad invocation detected by the front end itself (exit status 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Comma-separated list of numbers, e.g. `1.3,4.0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Floats<const N: usize>(pub [f64; N]);

impl<const N: usize> FromStr for Floats<N> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| format!("expected {N} comma-separated numbers, got {s:?}"))?;
        let arr: [f64; N] = v
            .try_into()
            .map_err(|_| format!("expected {N} comma-separated numbers, got {s:?}"))?;
        Ok(Floats(arr))
    }
}

impl<const N: usize> fmt::Display for Floats<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl Floats<2> {
    pub fn pair(&self) -> (f64, f64) {
        (self.0[0], self.0[1])
    }
}

/// Comma-separated non-negative integers.
#[derive(Clone, Debug, PartialEq)]
pub struct Sizes(pub Vec<usize>);

impl FromStr for Sizes {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map(Sizes)
            .map_err(|_| format!("expected comma-separated pixel counts, got {s:?}"))
    }
}

#[derive(Parser, Debug)]
#[command(name = "rppg", version, about = "Remote photoplethysmography toolkit")]
#[command(after_help = "Any subcommand accepts --config FILE: a JSON object of flag names to values \
    (e.g. {\"window\": 10, \"band_bpm\": [90, 240]}). Flags given on the command line override it.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Demosaic, downsample and white-balance a frame directory.
    Preprocess(PreprocessArgs),
    /// Generate surrogate pulse labels (CHROM/POS + band-pass) for an ROI.
    Sgt(SgtArgs),
    /// Estimate windowed heart rate from a pulse CSV.
    Hr(HrArgs),
    /// Compare predicted HR against a reference: metrics and plot data.
    Eval(EvalArgs),
    /// ROI-increment robustness study on a frame directory.
    Sweep(SweepArgs),
    /// Render a synthetic pulsatile video with ground truth.
    Synth(SynthArgs),
    /// Export fixed-length training clips with labels and a train/val split.
    Clips(ClipsArgs),
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct PreprocessArgs {
    /// Input frame directory (rgb, bayer or gray).
    #[arg(long)]
    pub input: PathBuf,
    /// Output RGB frame directory.
    #[arg(long)]
    pub output: PathBuf,
    /// Bayer layout (rggb, bggr, grbg, gbrg) [default: meta.json `cfa`]. Overrides the metadata when given.
    #[arg(long)]
    pub cfa: Option<CfaLayout>,
    /// Spatial box-filter downsampling factor.
    #[arg(long, default_value_t = 3)]
    pub downsample: usize,
    /// White balance: grayworld or none.
    #[arg(long, default_value = "grayworld")]
    pub white_balance: WhiteBalance,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct SgtArgs {
    /// Input frame directory.
    #[arg(long)]
    pub input: PathBuf,
    /// Region of interest `x,y,w,h`.
    #[arg(long)]
    pub roi: Roi,
    /// Output label CSV (`frame_index,time_s,ppg`); a `.json` sidecar is written next to it.
    #[arg(long)]
    pub output: PathBuf,
    /// Extraction method: chrom or pos.
    #[arg(long, default_value = "chrom")]
    pub method: Method,
    /// Label band-pass `lo,hi` in Hz.
    #[arg(long, default_value = "1.3,4.0")]
    pub band: Floats<2>,
    /// Also write the ROI-averaged RGB trace CSV here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct HrArgs {
    /// Pulse CSV (`frame_index,time_s,ppg`).
    #[arg(long)]
    pub input: PathBuf,
    /// Output HR CSV (`t_s,bpm,valid`).
    #[arg(long)]
    pub output: PathBuf,
    /// Analysis window in seconds.
    #[arg(long, default_value_t = 10.0)]
    pub window: f64,
    /// Window stride in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub stride: f64,
    /// Peak-search band `lo,hi` in bpm.
    #[arg(long, default_value = "90,240")]
    pub band_bpm: Floats<2>,
    /// Post-processing band-pass `lo,hi` in Hz applied before estimation.
    #[arg(long, default_value = "1.5,4.0")]
    pub post_band: Floats<2>,
    /// Butterworth order of the post-processing band-pass.
    #[arg(long, default_value_t = 1)]
    pub post_order: usize,
    /// Skip the post-processing band-pass.
    #[arg(long)]
    pub no_post_filter: bool,
    /// Skip the amplitude outlier filter.
    #[arg(long)]
    pub no_filter: bool,
    /// Amplitude filter: context span in seconds.
    #[arg(long, default_value_t = 30.0)]
    pub context: f64,
    /// Amplitude filter: maximum robust z-score.
    #[arg(long, default_value_t = 3.0)]
    pub z_max: f64,
    /// Amplitude filter: minimum spectral SNR in dB.
    #[arg(long, default_value_t = 2.0)]
    pub min_snr_db: f64,
    /// Amplitude filter: floor on the robust spread, relative to the context median.
    #[arg(long, default_value_t = 0.1)]
    pub min_rel_spread: f64,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    /// Predicted HR CSV (`t_s,bpm,valid`).
    #[arg(long)]
    pub pred: PathBuf,
    /// Reference CSV (`t_s,bpm`, optional `valid`).
    #[arg(long)]
    pub reference: PathBuf,
    /// Output directory for report.json, bland_altman.csv and correlation.csv.
    #[arg(long)]
    pub output: PathBuf,
    /// Window length of the predicted series, in seconds.
    #[arg(long, default_value_t = 10.0)]
    pub window: f64,
    /// Maximum timestamp distance when pairing windows, in seconds.
    #[arg(long, default_value_t = 0.5)]
    pub tolerance: f64,
    /// Treat the reference as already windowed instead of averaging raw samples per window.
    #[arg(long)]
    pub no_resample: bool,
    /// Report an undefined correlation as null instead of failing.
    #[arg(long)]
    pub allow_constant: bool,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct SweepArgs {
    /// Input frame directory.
    #[arg(long)]
    pub input: PathBuf,
    /// Base region of interest `x,y,w,h`.
    #[arg(long)]
    pub roi: Roi,
    /// Output histogram CSV (`bin_lo,bin_hi,count`).
    #[arg(long)]
    pub output: PathBuf,
    /// ROI increments in pixels.
    #[arg(long, default_value = "10,20,30,40")]
    pub increments: Sizes,
    /// Extraction method: chrom or pos.
    #[arg(long, default_value = "chrom")]
    pub method: Method,
    /// Label band-pass `lo,hi` in Hz.
    #[arg(long, default_value = "1.3,4.0")]
    pub band: Floats<2>,
    /// Peak-search band `lo,hi` in bpm.
    #[arg(long, default_value = "78,240")]
    pub band_bpm: Floats<2>,
    /// Analysis window in seconds.
    #[arg(long, default_value_t = 10.0)]
    pub window: f64,
    /// Window stride in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub stride: f64,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct SynthArgs {
    /// Output frame directory; truth_pulse.csv and truth_hr.csv are written inside it.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 25.0)]
    pub fps: f64,
    /// Duration in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub duration: f64,
    /// Skin patch `x,y,w,h`.
    #[arg(long, default_value = "16,16,32,32")]
    pub skin: Roi,
    /// Constant pulse rate in bpm.
    #[arg(long, default_value_t = 120.0)]
    pub bpm: f64,
    /// Linear chirp `start,end` in bpm; overrides --bpm.
    #[arg(long)]
    pub chirp: Option<Floats<2>>,
    /// Skin base color `r,g,b`.
    #[arg(long, default_value = "150,100,80")]
    pub base_rgb: Floats<3>,
    /// Per-channel pulse amplitude `r,g,b` in intensity levels.
    #[arg(long, default_value = "0.8,1.5,0.6")]
    pub amp_rgb: Floats<3>,
    /// Background color `r,g,b`.
    #[arg(long, default_value = "90,90,90")]
    pub background: Floats<3>,
    /// Gaussian noise sigma in intensity levels.
    #[arg(long, default_value_t = 2.0)]
    pub noise: f64,
    /// Global flicker `freq_hz,relative_amp`.
    #[arg(long)]
    pub flicker: Option<Floats<2>>,
    /// Maximum skin-patch translation in whole pixels.
    #[arg(long)]
    pub jitter: Option<usize>,
    /// Write raw Bayer mosaics (P5) instead of RGB frames.
    #[arg(long)]
    pub bayer: bool,
    /// Bayer layout used with --bayer.
    #[arg(long, default_value = "rggb")]
    pub cfa: CfaLayout,
    /// Truth HR window in seconds.
    #[arg(long, default_value_t = 10.0)]
    pub window: f64,
    /// Truth HR stride in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub stride: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct ClipsArgs {
    /// Input frame directory.
    #[arg(long)]
    pub frames: PathBuf,
    /// Label CSV matching the frames one to one.
    #[arg(long)]
    pub labels: PathBuf,
    /// Output directory for clip_NNNN/ and split.json.
    #[arg(long)]
    pub output: PathBuf,
    /// Crop `x,y,w,h` before resizing [default: label sidecar ROI, else full frame].
    #[arg(long)]
    pub roi: Option<Roi>,
    /// Frames per clip.
    #[arg(long, default_value_t = 148)]
    pub clip_len: usize,
    /// Frames between clip starts.
    #[arg(long, default_value_t = 148)]
    pub stride: usize,
    /// Output side length in pixels.
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// Resize filter: bilinear or nearest.
    #[arg(long, default_value = "bilinear")]
    pub resize: Resize,
    /// Fraction of clips assigned to training.
    #[arg(long, default_value_t = 0.6)]
    pub train_ratio: f64,
    /// Shuffle seed for the split.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("RPPG_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("RPPG_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| anyhow::anyhow!("configuring {n} worker threads: {e}"))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<rppg_core::Error>() {
            return match e.kind() {
                ErrorKind::Input => 2,
                ErrorKind::Data => 3,
                ErrorKind::Internal => 1,
            };
        }
        if cause.is::<UsageError>() {
            return 2;
        }
    }
    1
}

fn run() -> anyhow::Result<()> {
    let args = config::expand(std::env::args_os().collect())?;
    let cli = Cli::try_parse_from(args).unwrap_or_else(|e| e.exit());
    init_threads()?;
    match cli.command {
        Command::Preprocess(a) => commands::preprocess(&a),
        Command::Sgt(a) => commands::sgt(&a),
        Command::Hr(a) => commands::hr(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Clips(a) => commands::clips(&a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
