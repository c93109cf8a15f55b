mod commands;
mod config;
mod error;
mod inputs;

use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use commands::Context;
use config::GlobalArgs;
use error::{CliError, EXIT_CODES};

/// Pointwise information decomposition of text-conditioned diffusion denoisers.
#[derive(Debug, Parser)]
#[command(name = "diffpid", version, after_help = EXIT_CODES)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pointwise and image-level information between a condition and a field.
    EstimateMi(commands::EstimateMiArgs),
    /// Redundancy, uniqueness and synergy maps for one prompt case.
    EstimatePid(commands::EstimatePidArgs),
    /// Occupation/attribute redundancy table over a case file.
    BiasAudit(commands::BiasAuditArgs),
    /// Re-generate a field under an edited prompt and measure how much it changed.
    Intervene(commands::InterveneArgs),
    /// Denoising errors and information integrands at fixed noise levels.
    MmseCurves(commands::MmseCurvesArgs),
    /// Orthogonality residual of the conditional denoiser at fixed noise levels.
    Orthogonality(commands::OrthogonalityArgs),
    /// Train the toy MLP denoiser on samples of a mixture.
    TrainToy(commands::TrainToyArgs),
    /// Exact decomposition of a logic-gate distribution.
    OraclePid(commands::OraclePidArgs),
    /// Render a PFM map to PGM, optionally upsampled or thresholded.
    Render(commands::RenderArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = cli.global.resolve()?;
    if let Some(n) = config.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let mut ctx = Context::new(config, Instant::now());
    match &cli.command {
        Command::EstimateMi(a) => commands::estimate_mi(&mut ctx, a),
        Command::EstimatePid(a) => commands::estimate_pid(&mut ctx, a),
        Command::BiasAudit(a) => commands::bias_audit(&mut ctx, a),
        Command::Intervene(a) => commands::intervene(&mut ctx, a),
        Command::MmseCurves(a) => commands::mmse_curves(&mut ctx, a),
        Command::Orthogonality(a) => commands::orthogonality(&mut ctx, a),
        Command::TrainToy(a) => commands::train_toy(&mut ctx, a),
        Command::OraclePid(a) => commands::oracle_pid(&mut ctx, a),
        Command::Render(a) => commands::render(&mut ctx, a),
    }
}

fn fail(err: CliError) -> ExitCode {
    let record = err.record();
    eprintln!("{}", serde_json::to_string(&record).expect("error record serializes"));
    ExitCode::from(record.exit_code as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(CliError::Usage(e.to_string().trim_end().to_string())),
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
