mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use failure::Failure;

/// Hide messages in the initial noise of a diffusion sampler and recover
/// them from the generated images.
#[derive(Debug, Parser)]
#[command(name = "noisecoder", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Key file plus per-field overrides.
#[derive(Debug, Clone, Args)]
pub struct KeyArgs {
    /// Shared key file (`key = value` lines).
    #[arg(long, value_name = "CFG")]
    pub key: Option<PathBuf>,
    /// gmm:<path> or bridge:<endpoint>
    #[arg(long)]
    pub model: Option<String>,
    /// mn, mb, mc, multibits(<b>) or multichannel
    #[arg(long)]
    pub projection: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Model tensor shape, CxHxW (bridge models).
    #[arg(long)]
    pub shape: Option<String>,
    /// Codebook file (multichannel).
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    /// Opaque conditioning string forwarded to the model.
    #[arg(long)]
    pub context: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Hide a message file in a generated image (.png or .nzt).
    Hide {
        #[command(flatten)]
        key: KeyArgs,
        /// Message: `.bits` text (0/1 characters) or any other file as raw bytes.
        #[arg(long)]
        msg: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Image index; selects the noise and sign streams.
        #[arg(long, default_value_t = 0)]
        index: u32,
        /// Sample even if the carrier fails the collapse checks.
        #[arg(long)]
        force: bool,
        /// Also write the carrier noise (NZT1).
        #[arg(long, value_name = "PATH")]
        save_noise: Option<PathBuf>,
    },
    /// Recover a message from an image.
    Extract {
        #[command(flatten)]
        key: KeyArgs,
        #[arg(long)]
        img: PathBuf,
        /// `.bits` for text output, anything else for raw bytes.
        #[arg(long)]
        out: PathBuf,
        /// Payload length in bits; defaults to full capacity.
        #[arg(long)]
        len: Option<usize>,
        /// Original message; prints `acc=`.
        #[arg(long, value_name = "MSG")]
        compare: Option<PathBuf>,
        /// Also write the recovered noise (NZT1).
        #[arg(long, value_name = "PATH")]
        save_noise: Option<PathBuf>,
    },
    /// Generate carriers with random payloads plus a manifest.
    Sample {
        #[command(flatten)]
        key: KeyArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        outdir: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Message channels per image.
        #[arg(long, default_value_t = 1)]
        channels: usize,
        /// png or nzt
        #[arg(long, default_value = "png")]
        format: String,
    },
    /// Run the collapse checks on a carrier.
    Diagnose {
        #[command(flatten)]
        key: KeyArgs,
        /// Message to project; random full payload if absent.
        #[arg(long)]
        msg: Option<PathBuf>,
        /// Check this noise tensor instead of building a carrier.
        #[arg(long, value_name = "NZT")]
        noise: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        index: u32,
    },
    /// Metrics over files.
    #[command(subcommand)]
    Eval(Eval),
    /// Write a key file.
    Keygen {
        #[command(flatten)]
        key: KeyArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a random binary codebook (NZT1, 3×H×W).
    Codebook {
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        index: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the desk-scale Gaussian-mixture fixture.
    GmmFixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = noisecoder::gmm::DESK_SEED)]
        seed: u64,
        #[arg(long, default_value = "3x16x16")]
        shape: String,
    },
    /// Serve a mixture model over the bridge protocol (stdio or TCP).
    Serve {
        /// Mixture fixture path.
        #[arg(long)]
        gmm: PathBuf,
        /// host:port; stdio when absent.
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
enum Eval {
    /// Bit accuracy between two message files.
    Acc { reference: PathBuf, recovered: PathBuf },
    /// Detection error from two score tensors.
    Pe { stego: PathBuf, cover: PathBuf },
    /// Fréchet distance between two (rows × dim) feature tensors.
    Frechet { a: PathBuf, b: PathBuf },
    /// Histogram of z − z′ from two noise tensors.
    Hist {
        z: PathBuf,
        recovered: PathBuf,
        #[arg(long, default_value_t = 64)]
        bins: usize,
        /// Two-column histogram file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Steganalysis features of images, as a (rows × dim) tensor.
    Features {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    use commands::*;
    match cli.command {
        Command::Hide { key, msg, out, index, force, save_noise } => hide(&key, &msg, &out, index, force, save_noise.as_deref()),
        Command::Extract { key, img, out, len, compare, save_noise } => {
            extract(&key, &img, &out, len, compare.as_deref(), save_noise.as_deref())
        }
        Command::Sample { key, n, outdir, jobs, channels, format } => sample(&key, n, &outdir, jobs, channels, &format),
        Command::Diagnose { key, msg, noise, index } => diagnose(&key, msg.as_deref(), noise.as_deref(), index),
        Command::Eval(Eval::Acc { reference, recovered }) => eval_acc(&reference, &recovered),
        Command::Eval(Eval::Pe { stego, cover }) => eval_pe(&stego, &cover),
        Command::Eval(Eval::Frechet { a, b }) => eval_frechet(&a, &b),
        Command::Eval(Eval::Hist { z, recovered, bins, out }) => eval_hist(&z, &recovered, bins, out.as_deref()),
        Command::Eval(Eval::Features { out, images }) => eval_features(&out, &images),
        Command::Keygen { key, out } => keygen(&key, &out),
        Command::Codebook { height, width, seed, index, out } => codebook(height, width, seed, index, &out),
        Command::GmmFixture { out, seed, shape } => gmm_fixture(&out, seed, &shape),
        Command::Serve { gmm, listen } => serve(&gmm, listen.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("bad arguments").trim_start_matches("error: ");
            eprintln!("{}", Failure::usage(first));
            return ExitCode::from(failure::EXIT_USAGE);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code)
        }
    }
}
