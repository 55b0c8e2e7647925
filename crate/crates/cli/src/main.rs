use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tseb_cli::config::{RawConfig, RawPrior};
use tseb_cli::{cmd_plotdata, cmd_run, cmd_sweep, CliError};

#[derive(Parser)]
#[command(
    name = "tseb",
    version,
    about = "Run TSEB experiments on the chain and queuing benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment at a single lambda.
    Run(ConfigArgs),
    /// Run every lambda in the grid over `runs` seeds.
    Sweep(ConfigArgs),
    /// Average trace CSVs in a directory into long-format plot data.
    Plotdata {
        /// Directory holding per-run trace CSVs.
        dir: PathBuf,
        /// Output file; defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma-separated lambda grid for sweeps.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// recurrence, direct or param_distance.
    #[arg(long)]
    bonus_mode: Option<String>,
    /// per_step or per_episode.
    #[arg(long)]
    cadence: Option<String>,
    #[arg(long)]
    arrival_prob: Option<f64>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    delta_r: Option<f64>,
    #[arg(long)]
    f0_probes: Option<usize>,
    #[arg(long, short)]
    output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(self) -> Result<tseb_cli::ExperimentConfig, CliError> {
        let file = match &self.config {
            Some(path) => RawConfig::load(path)?,
            None => RawConfig::default(),
        };
        let flags = RawConfig {
            env: self.env,
            lambda: self.lambda,
            lambdas: self.lambdas,
            episodes: self.episodes,
            horizon: self.horizon,
            gamma: self.gamma,
            seed: self.seed,
            runs: self.runs,
            bonus_mode: self.bonus_mode,
            cadence: self.cadence,
            arrival_prob: self.arrival_prob,
            prior: self.alpha0.map(|a| RawPrior {
                alpha0: Some(a),
                ..RawPrior::default()
            }),
            delta_r: self.delta_r,
            f0_probes: self.f0_probes,
            output_dir: self.output_dir,
            ..RawConfig::default()
        };
        file.merge(flags).resolve()
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(args) => {
            let config = args.resolve()?;
            let report = cmd_run(&config)?;
            println!(
                "lambda={} episodes={} cumulative_reward={} mean_regret={} -> {}",
                report.summary.lambda,
                report.summary.episodes,
                report.summary.final_cumulative_reward,
                report.summary.mean_regret,
                config.output_dir.display()
            );
        }
        Command::Sweep(args) => {
            let config = args.resolve()?;
            let rows = cmd_sweep(&config)?;
            for row in rows {
                println!(
                    "lambda={} mean_cumulative_reward={:.2} std={:.2}",
                    row.lambda, row.mean_cumulative_reward, row.std_cumulative_reward
                );
            }
        }
        Command::Plotdata { dir, out } => {
            cmd_plotdata(&dir, out.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
