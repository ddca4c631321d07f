use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use mrwave::cli::{cmd_evaluate, cmd_preprocess, cmd_synth, cmd_train, Context, RunConfig};
use mrwave::Error;

#[derive(Parser)]
#[command(
    name = "mrwave",
    version,
    about = "Multiresolution EEG seizure detection"
)]
struct Args {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parallel training jobs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter, resample and segment the dataset.
    Preprocess,
    /// Train every leave-one-patient-out job that has no checkpoint yet.
    Train,
    /// Evaluate checkpoints and write the reports.
    Evaluate,
    /// Write the configured synthetic corpus as EDF and CSV files.
    Synth,
}

fn run(args: Args) -> Result<bool, Error> {
    let path = args
        .config
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let config = RunConfig::load(&path)?;
    let ctx = Context::new(config, args.seed, args.output, args.jobs)?;
    match args.command {
        Command::Preprocess => {
            let s = cmd_preprocess(&ctx)?;
            println!(
                "{} recordings, {} test segments, {} training segments",
                s.recordings, s.test_segments, s.train_segments
            );
        }
        Command::Train => {
            let s = cmd_train(&ctx)?;
            println!(
                "trained {}, skipped {}, failed {}",
                s.trained.len(),
                s.skipped.len(),
                s.failed.len()
            );
            for (job, msg) in &s.failed {
                error!("{job}: {msg}");
            }
            return Ok(s.failed.is_empty());
        }
        Command::Evaluate => {
            let out = cmd_evaluate(&ctx)?;
            print!("{}", out.plain.to_table("Without post-processing"));
            if let Some(post) = &out.post_processed {
                print!("\n{}", post.to_table("With post-processing"));
            }
        }
        Command::Synth => {
            for path in cmd_synth(&ctx)? {
                info!("wrote {}", path.display());
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
