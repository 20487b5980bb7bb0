//! fedpix: federated pix2pix experiments on paired image corpora.
//!
//! Exit codes: 0 success, 1 configuration/validation error, 2 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedpix_cli::config::{ExperimentConfig, Overrides};
use fedpix_cli::{cmd_compare, cmd_generate_data, cmd_train};
use fedpix_core::report::ModelKind;

#[derive(Parser)]
#[command(name = "fedpix", version, about = "federated pix2pix experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML experiment configuration
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the image resolution (power of two >= 16)
    #[arg(long)]
    resolution: Option<usize>,
    /// Override the number of training epochs / federation rounds
    #[arg(long)]
    epochs: Option<usize>,
    /// Force sequential (deterministic) client execution
    #[arg(long)]
    deterministic: Option<bool>,
    /// Override the output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate both synthetic site corpora (train/test) with manifests
    GenerateData(CommonArgs),
    /// Train one model: baseline-a, baseline-b, central, or federated
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Which of the four models to train
        #[arg(long)]
        mode: String,
    },
    /// Evaluate all four trained models and write the comparison report
    Compare(CommonArgs),
}

type Action = Box<dyn FnOnce(&ExperimentConfig) -> anyhow::Result<()>>;

fn load(common: &CommonArgs) -> anyhow::Result<ExperimentConfig> {
    let overrides = Overrides {
        seed: common.seed,
        resolution: common.resolution,
        epochs: common.epochs,
        deterministic: common.deterministic,
        out_dir: common.out.clone(),
    };
    ExperimentConfig::load(&common.config, &overrides)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/version through the same error path
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };

    let (common, action): (&CommonArgs, Action) = match &cli.command {
            Command::GenerateData(common) => (common, Box::new(cmd_generate_data)),
            Command::Train { common, mode } => {
                let kind: ModelKind = match mode.parse() {
                    Ok(kind) => kind,
                    Err(e) => {
                        eprintln!("configuration error: {e}");
                        return ExitCode::from(1);
                    }
                };
                (common, Box::new(move |cfg| cmd_train(cfg, kind)))
            }
            Command::Compare(common) => (common, Box::new(|cfg| cmd_compare(cfg).map(|_| ()))),
        };

    let cfg = match load(common) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("configuration error: {e:#}");
            return ExitCode::from(1);
        }
    };

    match action(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
