use clap::{Parser, ValueEnum};
use holoscat::error::Error;
use holoscat::experiment::pipeline::output_dir;
use holoscat::experiment::{ExperimentConfig, Runner, Stage};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Verb {
    Generate,
    Prior,
    Map,
    Laplace,
    Mcmc,
    Evidence,
    Stats,
    All,
}

/// Shape inference from single-incidence scattering data.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    verb: Verb,
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated stages to skip with `all`.
    #[arg(long, value_delimiter = ',')]
    stage_skip: Vec<String>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::IllConditioned { .. } | Error::SeriesNonConvergence { .. } | Error::Inadmissible(_) | Error::PointTooClose { .. } => 3,
        Error::SamplerInit { .. } => 5,
        _ => 1,
    }
}

fn run(cli: &Cli) -> Result<u8, Error> {
    let mut cfg = ExperimentConfig::load(&cli.config).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("{}: {io}", cli.config.display())),
        other => other,
    })?;
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    let skip = cli.stage_skip.iter().map(|s| Stage::parse(s.trim())).collect::<Result<Vec<_>, _>>()?;
    let dir = output_dir(&cfg, cli.out.as_deref());
    let mut runner = Runner::new(cfg, &dir)?;
    let outcome = match cli.verb {
        Verb::All => runner.run_all(&skip)?,
        Verb::Generate => runner.run(Stage::Generate)?,
        Verb::Prior => runner.run(Stage::Prior)?,
        Verb::Map => runner.run(Stage::Map)?,
        Verb::Laplace => runner.run(Stage::Laplace)?,
        Verb::Mcmc => runner.run(Stage::Mcmc)?,
        Verb::Evidence => runner.run(Stage::Evidence)?,
        Verb::Stats => runner.run(Stage::Stats)?,
    };
    Ok(if outcome.map_not_converged { 4 } else { 0 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
