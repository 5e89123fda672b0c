use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rdd::cli::{
    cmd_check, cmd_curve, cmd_dmax, cmd_surface, ExitStatus, OutputFormat, Overrides, RunConfig,
};

#[derive(Parser)]
#[command(name = "rdd", version, about = "Rate distortion-in-distortion solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace one rate-distortion curve (single theta).
    Curve(Common),
    /// Trace rate-distortion points over a theta x lambda grid.
    Surface(Common),
    /// Estimate the zero-rate distortion threshold.
    Dmax(Common),
    /// Run the decomposition and Blahut-Arimoto self-checks.
    Check(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads for sweeps (1 gives serial, bit-reproducible runs).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    lambda_start: Option<f64>,
    #[arg(long)]
    lambda_end: Option<f64>,
    #[arg(long)]
    lambda_count: Option<usize>,
    /// Comma-separated mixing weights.
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<f64>>,
    /// Restarts for the threshold estimate.
    #[arg(long)]
    restarts: Option<usize>,
    /// Also write each point's coupling matrix.
    #[arg(long)]
    emit_coupling: bool,
    /// Recompute distortions from the couplings and compare.
    #[arg(long)]
    audit: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            output: self.output.clone(),
            format: self.format.map(|f| match f {
                Format::Csv => OutputFormat::Csv,
                Format::Json => OutputFormat::Json,
            }),
            jobs: self.jobs,
            seed: self.seed,
            max_iter: self.max_iter,
            lambda_start: self.lambda_start,
            lambda_end: self.lambda_end,
            lambda_count: self.lambda_count,
            theta_values: self.theta.clone(),
            restarts: self.restarts,
            emit_coupling: self.emit_coupling,
            audit: self.audit,
        }
    }
}

type Handler = fn(&RunConfig, &mut dyn std::io::Write) -> ExitStatus;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RDD_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() {
                ExitStatus::ConfigError.code()
            } else {
                0
            };
            return ExitCode::from(code as u8);
        }
    };
    let (common, run): (&Common, Handler) = match &cli.command {
        Command::Curve(c) => (c, cmd_curve),
        Command::Surface(c) => (c, cmd_surface),
        Command::Dmax(c) => (c, cmd_dmax),
        Command::Check(c) => (c, cmd_check),
    };
    let config = RunConfig::from_path(&common.config).and_then(|c| common.overrides().apply(c));
    let status = match config {
        Ok(config) => run(&config, &mut std::io::stdout().lock()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitStatus::ConfigError
        }
    };
    ExitCode::from(status.code() as u8)
}
