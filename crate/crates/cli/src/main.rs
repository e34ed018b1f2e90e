mod commands;
mod config;
mod failure;
mod images;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};

use failure::{classify, fail, report, Kind, EXIT_CODES};

/// Restores hazy, blurry or snowy images with ECFNet.
#[derive(Parser)]
#[command(name = "ecfnet", version, after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DegradationKind {
    Haze,
    Blur,
    Snow,
}

impl DegradationKind {
    fn name(self) -> &'static str {
        match self {
            DegradationKind::Haze => "haze",
            DegradationKind::Blur => "blur",
            DegradationKind::Snow => "snow",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a JSON run config.
    #[command(after_help = EXIT_CODES)]
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `train.total_steps`.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Restore one PPM image at full resolution.
    #[command(after_help = EXIT_CODES)]
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score PSNR, SSIM and MAE over DIR/input/*.ppm against DIR/target/*.ppm.
    #[command(after_help = EXIT_CODES)]
    Eval {
        /// Without a model the degraded inputs are scored as they are.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        pairs: PathBuf,
        /// Defaults to DIR/metrics.csv.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Apply a synthetic degradation to a clean PPM image.
    #[command(after_help = EXIT_CODES)]
    Degrade {
        #[arg(long, value_enum)]
        kind: DegradationKind,
        /// JSON object overriding the kind's defaults, e.g. '{"sigma": 2.0}'.
        #[arg(long, default_value = "{}")]
        params: String,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List a checkpoint's parameters, total count and cost at a given size.
    #[command(after_help = EXIT_CODES)]
    Inspect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 256)]
        size: usize,
    },
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("ECFNET_THREADS") else {
        return Ok(());
    };
    let n: usize = match v.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => {
            return Err(fail(
                Kind::Config,
                format!("ECFNET_THREADS must be a positive integer, got `{v}`"),
            ))
        }
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| fail(Kind::Internal, e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Train {
            config,
            seed,
            steps,
        } => commands::train(&config, seed, steps),
        Command::Infer {
            model,
            input,
            output,
        } => commands::infer(&model, &input, &output),
        Command::Eval { model, pairs, csv } => {
            let csv = csv.unwrap_or_else(|| pairs.join("metrics.csv"));
            commands::eval(model.as_deref(), &pairs, Some(&csv))
        }
        Command::Degrade {
            kind,
            params,
            input,
            output,
            seed,
        } => {
            let spec = commands::degradation(kind.name(), &params)?;
            commands::degrade_image(&spec, &input, &output, seed)
        }
        Command::Inspect { model, size } => commands::inspect(&model, size),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", report(&e));
            ExitCode::from(classify(&e).code() as u8)
        }
    }
}
