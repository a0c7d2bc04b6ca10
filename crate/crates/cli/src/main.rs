//! `nlc`: compress, decompress and inspect images with a nested latent
//! variable model, evaluate reconstructions and run the AR equivalence check.

mod commands;
mod error;
mod io;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::{exit, CliError};

#[derive(Debug, Parser)]
#[command(name = "nlc", version, about = "Nested latent variable image codec")]
struct Cli {
    /// Worker threads for tiled coding.
    #[arg(long, global = true, env = "NLC_THREADS")]
    threads: Option<usize>,

    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compress a PPM or PNG image.
    Compress(CompressArgs),
    /// Decode a container or tile archive back to an image.
    Decompress(DecompressArgs),
    /// Show header fields and per-layer sizes of a compressed file.
    Inspect(InspectArgs),
    /// Print "PSNR / MS-SSIM / bit/px" for reconstructions.
    Eval(EvalArgs),
    /// Verify that nested latent chains reproduce random autoregressive models.
    ArCheck(ArCheckArgs),
    /// Write a randomly initialised weight file.
    InitWeights(InitWeightsArgs),
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Tile side in pixels; must be a multiple of the model's downsampling factor.
    #[arg(long, default_value_t = 256)]
    pub tile: usize,
    /// Latent precision P (2^P bins).
    #[arg(long, default_value_t = nlc_core::entropy::DEFAULT_PRECISION)]
    pub precision: u32,
    /// Print bpp and per-layer estimated and actual bits.
    #[arg(long)]
    pub report: bool,
    /// Decode every tile again and require a bit-identical result.
    #[arg(long)]
    pub self_check: bool,
}

#[derive(Debug, Args)]
pub struct DecompressArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Original image; repeat for several images.
    #[arg(long, required = true)]
    pub input: Vec<PathBuf>,
    /// Reconstruction of the matching --input.
    #[arg(long)]
    pub reconstructed: Vec<PathBuf>,
    /// Compressed file of the matching --input, used for bit/px.
    #[arg(long)]
    pub container: Vec<PathBuf>,
    /// Round-trip each --input through this model instead of reading reconstructions.
    #[arg(long, conflicts_with_all = ["reconstructed", "container"])]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 256, requires = "model")]
    pub tile: usize,
}

#[derive(Debug, Args)]
pub struct ArCheckArgs {
    /// Number of binary pixels T (at most 12).
    #[arg(long, short = 't')]
    pub pixels: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
}

#[derive(Debug, Args)]
pub struct InitWeightsArgs {
    #[arg(long)]
    pub output: PathBuf,
    /// Number of latent layers L.
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = nlc_core::nn::spec::DEFAULT_HIDDEN_FILTERS)]
    pub hidden: usize,
    #[arg(long, default_value_t = nlc_core::nn::spec::DEFAULT_LATENT_CHANNELS)]
    pub latent: usize,
}

fn run(cli: Cli) -> Result<u8, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let json = cli.json;
    match cli.command {
        Command::Compress(a) => commands::compress(&a, json),
        Command::Decompress(a) => commands::decompress(&a, json),
        Command::Inspect(a) => commands::inspect(&a, json),
        Command::Eval(a) => commands::eval(&a, json),
        Command::ArCheck(a) => commands::ar_check(&a, json),
        Command::InitWeights(a) => commands::init_weights(&a, json),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::INVALID_ARGUMENTS } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("nlc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
