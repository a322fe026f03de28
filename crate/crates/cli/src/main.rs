use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nsbl_cli::{stages, CliError, CliResult, Config, Context};

#[derive(Parser)]
#[command(name = "nsbl", version, about = "Relevance learning for the aeroelastic case study")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment id (1d-e3, 1d-e5, 2d-e3e4, 2d-e3e5, 2d-e5e6, 4d).
    #[arg(long)]
    experiment: Option<String>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Root directory for run artifacts.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate, corrupt and filter the pitch measurements.
    GenerateData(Common),
    /// Sample likelihood times known prior and split into KDE instances.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        per_instance: Option<usize>,
    },
    /// Optimize the ARD hyperparameters per instance.
    Learn(Common),
    /// Summarize verdicts, optima and marginals.
    Report(Common),
}

fn context(common: &Common) -> CliResult<Context> {
    let mut config = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(Context::new(config, &common.out))
}

fn experiment(common: &Common) -> CliResult<&str> {
    common
        .experiment
        .as_deref()
        .ok_or_else(|| CliError::config("--experiment", "required for this command"))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenerateData(c) => {
            let ctx = context(&c)?;
            stages::generate_data(&ctx)?;
            println!("{}", ctx.layout.stage_dir(nsbl_cli::artifacts::Stage::Data, None).display());
        }
        Command::Sample {
            common,
            instances,
            per_instance,
        } => {
            let ctx = context(&common)?;
            let id = experiment(&common)?;
            stages::sample(&ctx, id, instances, per_instance)?;
            println!("{}", ctx.layout.stage_dir(nsbl_cli::artifacts::Stage::Sample, Some(id)).display());
        }
        Command::Learn(c) => {
            let ctx = context(&c)?;
            let id = experiment(&c)?;
            stages::learn(&ctx, id)?;
            println!("{}", ctx.layout.stage_dir(nsbl_cli::artifacts::Stage::Learn, Some(id)).display());
        }
        Command::Report(c) => {
            let ctx = context(&c)?;
            let id = experiment(&c)?;
            stages::report(&ctx, id)?;
            println!("{}", ctx.layout.stage_dir(nsbl_cli::artifacts::Stage::Report, Some(id)).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
