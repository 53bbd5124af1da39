//! Command-line front end: `detect`, `filters`, `count` and `compare`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid flags, 3 algorithmic
//! failure (for example a featureless image).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod error;

pub use commands::{run_detector, DetectorOutput, MethodSettings};
pub use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "eigedge",
    version,
    about = "Eigenfilter dictionary edge detection and cell counting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the edge map of one method
    Detect(DetectArgs),
    /// Dump the learned eigenfilters, per-filter edge images and coefficient CSV
    Filters(FiltersArgs),
    /// Dictionary edges followed by circular Hough cell counting
    Count(CountArgs),
    /// Run every detector on one image and write a manifest
    Compare(CompareArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Sobel,
    Prewitt,
    Log,
    Canny,
    Dictionary,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Sobel,
        Method::Prewitt,
        Method::Log,
        Method::Canny,
        Method::Dictionary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sobel => "sobel",
            Method::Prewitt => "prewitt",
            Method::Log => "log",
            Method::Canny => "canny",
            Method::Dictionary => "dictionary",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum BorderArg {
    Replicate,
    Zero,
}

impl From<BorderArg> for eigedge::Border {
    fn from(b: BorderArg) -> Self {
        match b {
            BorderArg::Replicate => eigedge::Border::Replicate,
            BorderArg::Zero => eigedge::Border::Zero,
        }
    }
}

/// Detector flags shared by `detect` and `compare`.
#[derive(Args, Debug, Clone)]
pub struct DetectorFlags {
    /// Dictionary patch side n (2..=8)
    #[arg(long, default_value_t = 4)]
    pub patch_size: usize,
    /// Gaussian sigma for canny (default 1.4) or log (default 2.0)
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Canny low hysteresis threshold, fraction of max magnitude
    #[arg(long, default_value_t = 0.1)]
    pub low: f64,
    /// Canny high hysteresis threshold, fraction of max magnitude
    #[arg(long, default_value_t = 0.3)]
    pub high: f64,
    /// Percentile cut: sobel/prewitt binarization (default 0.9), dictionary (default 0, off)
    #[arg(long)]
    pub threshold_percentile: Option<f64>,
    #[arg(long, value_enum, default_value_t = BorderArg::Replicate)]
    pub border: BorderArg,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[arg(long, value_enum, default_value_t = Method::Dictionary)]
    pub method: Method,
    #[command(flatten)]
    pub flags: DetectorFlags,
    pub input: PathBuf,
    /// Output image (.png or .pgm)
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct FiltersArgs {
    #[arg(long, default_value_t = 4)]
    pub patch_size: usize,
    #[arg(long, value_enum, default_value_t = BorderArg::Replicate)]
    pub border: BorderArg,
    #[arg(long)]
    pub out_dir: PathBuf,
    pub input: PathBuf,
}

#[derive(Args, Debug)]
pub struct CountArgs {
    #[arg(long, default_value_t = 4)]
    pub patch_size: usize,
    /// Percentile cut applied to the dictionary edge map before voting
    #[arg(long, default_value_t = 0.5)]
    pub threshold_percentile: f64,
    #[arg(long, value_enum, default_value_t = BorderArg::Replicate)]
    pub border: BorderArg,
    #[arg(long, default_value_t = 3)]
    pub rmin: usize,
    #[arg(long, default_value_t = 8)]
    pub rmax: usize,
    /// Minimum circle score (fraction of a perfect circle's votes)
    #[arg(long, default_value_t = 0.4)]
    pub acc_threshold: f64,
    /// Minimum distance between accepted centres (default: rmin)
    #[arg(long)]
    pub min_dist: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
    pub input: PathBuf,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub flags: DetectorFlags,
    #[arg(long)]
    pub out_dir: PathBuf,
    pub input: PathBuf,
}

/// Worker cap from `EIGEDGE_THREADS` (0 or unset = automatic).
fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("EIGEDGE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        CliError::Usage(format!(
            "EIGEDGE_THREADS must be a non-negative integer, got '{raw}'"
        ))
    })?;
    if n > 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

pub fn output_format(path: &Path) -> Result<eigedge::imgcore::ImageFormat, CliError> {
    eigedge::imgcore::ImageFormat::from_path(path).ok_or_else(|| {
        CliError::Usage(format!(
            "cannot infer output format of {} (use .png or .pgm)",
            path.display()
        ))
    })
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                // --help and --version
                let _ = e.print();
                return 0;
            }
            let rendered = e.to_string();
            eprintln!("{}", rendered.lines().next().unwrap_or("invalid arguments"));
            return 2;
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Detect(a) => commands::detect(&a),
        Command::Filters(a) => commands::filters(&a),
        Command::Count(a) => commands::count(&a),
        Command::Compare(a) => commands::compare(&a),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
