//! The `tabext` command line: mask post-processing, region cleanup, column
//! alignment, training, evaluation and synthetic data, all driven by one
//! flat configuration file that explicit flags override.

mod cmd;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use config::PipelineConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "tabext", version, about = "Recover tables from page masks and OCR word boxes")]
pub struct Cli {
    /// Flat `key = value` file; explicit flags win over its entries.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for per-page and per-table work. Output order never depends on it.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn probability masks into table boxes.
    DetectPost(cmd::detect::DetectArgs),
    /// Crop, rotate and strip ruling lines from a page region.
    Prep(cmd::prep::PrepArgs),
    /// Segment OCR words into cells and export the aligned grid.
    Align(cmd::align::AlignArgs),
    /// Train a segmentation model on a labeled corpus.
    Train(cmd::train::TrainArgs),
    /// Cell-count SMAPE and token MCC over a labeled corpus.
    Eval(cmd::eval::EvalArgs),
    /// Generate synthetic tables, masks and rasters with ground truth.
    Synth(cmd::synth::SynthArgs),
}

/// Settings shared by every subcommand after config and flags are merged.
pub(crate) struct Context {
    pub cfg: PipelineConfig,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 1 on input errors, 2 when an internal
/// invariant breaks.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match catch_unwind(AssertUnwindSafe(|| execute(cli))) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("tabext: {e}");
            e.exit_code()
        }
        Err(_) => {
            eprintln!("tabext: internal error: unexpected panic");
            2
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    match &cli.command {
        Command::DetectPost(a) => a.overlay(&mut cfg),
        Command::Prep(a) => a.overlay(&mut cfg),
        Command::Align(a) => a.overlay(&mut cfg),
        Command::Train(a) => a.overlay(&mut cfg),
        Command::Eval(a) => a.overlay(&mut cfg),
        Command::Synth(a) => a.overlay(&mut cfg),
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    let ctx = Context { cfg };
    pool.install(|| match &cli.command {
        Command::DetectPost(a) => cmd::detect::run(&ctx, a),
        Command::Prep(a) => cmd::prep::run(&ctx, a),
        Command::Align(a) => cmd::align::run(&ctx, a),
        Command::Train(a) => cmd::train::run(&ctx, a),
        Command::Eval(a) => cmd::eval::run(&ctx, a),
        Command::Synth(a) => cmd::synth::run(&ctx, a),
    })
}

/// Copies each `Some` flag over the matching config field.
macro_rules! overlay {
    ($cfg:expr, $args:expr; $($field:ident),+) => {
        $(if let Some(v) = $args.$field { $cfg.$field = v; })+
    };
}
pub(crate) use overlay;

pub(crate) fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>> {
    std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Writes to `path`, or standard output when there is none.
pub(crate) fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::input(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

