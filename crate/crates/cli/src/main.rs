use std::path::PathBuf;
use std::process::ExitCode;

use boxseg::batch::{run_batch, BatchInput};
use boxseg::{config, evaluation, CliError, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "boxseg",
    version,
    about = "Box-supervised instance segmentation by level-set evolution"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one level set per annotated box and write masks and results.
    Segment {
        /// Directory the annotation file names are relative to.
        #[arg(long)]
        images: PathBuf,
        /// COCO-style JSON with `images` and `annotations`.
        #[arg(long)]
        annotations: PathBuf,
        /// Directory of `<image stem>.feat` feature maps.
        #[arg(long)]
        features: Option<PathBuf>,
        /// `key = value` configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a configuration key; may be repeated.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads per image.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: u64,
        /// Write per-instance energy traces as CSV.
        #[arg(long)]
        trace: bool,
    },
    /// Score predicted masks against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Run the built-in synthetic checks.
    Selftest,
    /// Time the engine on synthetic inputs.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [32usize, 64, 128])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Segment {
            images,
            annotations,
            features,
            config: config_file,
            overrides,
            out,
            jobs,
            trace,
        } => {
            let cfg = config::load(config_file.as_deref(), &overrides)?;
            let report = run_batch(&BatchInput {
                images,
                annotations,
                features,
                config_file,
                config: cfg,
                out,
                jobs: jobs as usize,
                trace,
            })?;
            println!("segmented {} instances, {} failed", report.total, report.failed);
            if report.failed > 0 {
                return Err(CliError::Failed {
                    failed: report.failed,
                    total: report.total,
                });
            }
            Ok(())
        }
        Command::Eval { pred, gt } => {
            let p = evaluation::load_masks(&pred)?;
            let g = evaluation::load_masks(&gt)?;
            print!("{}", evaluation::report(&evaluation::score(&p, &g)?));
            Ok(())
        }
        Command::Selftest => {
            let checks = boxseg::selftest::run();
            let failed = checks.iter().filter(|c| !c.passed).count();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if failed > 0 {
                return Err(CliError::Failed {
                    failed,
                    total: checks.len(),
                });
            }
            Ok(())
        }
        Command::Bench { sizes, repeats } => {
            for line in boxseg::bench::run(&sizes, repeats) {
                println!("{line}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
