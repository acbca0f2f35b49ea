use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use psca_cli::commands;
use psca_cli::config::RunConfig;
use psca_core::{Result, SyntheticSpec};

#[derive(Parser)]
#[command(name = "psca", version, about = "Domain adaptive hashing: train, encode, retrieve, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// key = value configuration file
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set lambda1=100`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic two-domain dataset (source.csv, target.csv)
    Synth {
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 50)]
        dim: usize,
        #[arg(long, default_value_t = 50)]
        per_class_source: usize,
        #[arg(long, default_value_t = 50)]
        per_class_target: usize,
        #[arg(long, default_value_t = 8.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long, default_value_t = 2.0)]
        shift: f64,
        /// Target rotation in degrees
        #[arg(long, default_value_t = 30.0)]
        rotation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model and write codes, encoder, traces and manifest
    Train(ConfigArgs),
    /// Random-projection baseline in the same artifact format
    Baseline(ConfigArgs),
    /// Evaluate held-out target queries; writes map.csv, topk.csv, pr.csv
    Eval(ConfigArgs),
    /// Encode a feature CSV with a trained model
    Encode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Rank database codes by Hamming distance for each query code
    Retrieve {
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Keep only the first K results per query
        #[arg(long)]
        top: Option<usize>,
    },
    /// One-at-a-time hyperparameter sweep; prints param,value,map
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// `lambda1=1,10,100`; repeatable. Defaults to all three lambdas.
        #[arg(long)]
        grid: Vec<String>,
    },
}

fn run(cli: Cli) -> Result<Vec<String>> {
    match cli.command {
        Command::Synth {
            out,
            classes,
            dim,
            per_class_source,
            per_class_target,
            separation,
            noise,
            shift,
            rotation,
            seed,
        } => {
            let spec = SyntheticSpec {
                c: classes,
                d: dim,
                per_class_source,
                per_class_target,
                class_separation: separation,
                noise_sigma: noise,
                shift_magnitude: shift,
                rotation_angle: rotation.to_radians(),
                seed,
            };
            commands::synth(&spec, &out)
        }
        Command::Train(args) => commands::train(&args.load()?),
        Command::Baseline(args) => commands::baseline(&args.load()?),
        Command::Eval(args) => commands::eval(&args.load()?),
        Command::Encode { model, input, output } => commands::encode(&model, &input, &output),
        Command::Retrieve { query, db, output, top } => commands::retrieve(&query, &db, &output, top),
        Command::Sweep { config, grid } => {
            let cfg = config.load()?;
            let grid = if grid.is_empty() {
                commands::default_grid()
            } else {
                grid.iter().map(|g| commands::parse_grid(g)).collect::<Result<_>>()?
            };
            commands::sweep(&cfg, &grid)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(psca_cli::exit_code(&e) as u8)
        }
    }
}
