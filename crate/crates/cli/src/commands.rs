//! The `run`, `sweep` and `plotdata` commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use tseb::metrics::mean_std;
use tseb::rng::run_seed;
use tseb::{run_experiment, EnvKind, MetricsTrace, RunSummary};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{plot_csv, sweep_csv, trace_csv, write_atomic, PlotRow, SweepRow};

pub const TRACE_FILE: &str = "trace.csv";
pub const RUN_SUMMARY_FILE: &str = "summary.json";
pub const SWEEP_SUMMARY_FILE: &str = "summary.csv";
pub const RUNS_DIR: &str = "runs";

/// Runs one (lambda, run index) cell. The cell seed depends only on the base
/// seed and the run index, so every lambda sees the same random streams.
pub fn run_cell(
    config: &ExperimentConfig,
    lambda: f64,
    run_id: u64,
) -> Result<MetricsTrace, CliError> {
    let agent = config.agent_config(lambda);
    let (env, arrival) = (config.env, config.arrival_prob);
    let trace = run_experiment(
        move |rng| EnvKind::build(env, arrival, rng),
        &agent,
        run_seed(config.seed, run_id),
    )?;
    Ok(trace.with_run_id(run_id))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub env: EnvKind,
    pub seed: u64,
    pub cell_seed: u64,
    pub summary: RunSummary,
}

/// Single experiment at `config.lambda`; writes the trace and a JSON summary
/// into `config.output_dir`.
pub fn cmd_run(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    let trace = run_cell(config, config.lambda, 0)?;
    let dir = &config.output_dir;
    let csv_path = dir.join(TRACE_FILE);
    let bytes = trace_csv(&trace, config.seed).map_err(|e| CliError::io(&csv_path, e))?;
    write_atomic(&csv_path, &bytes)?;
    let report = RunReport {
        env: config.env,
        seed: config.seed,
        cell_seed: trace.seed,
        summary: trace.summary(),
    };
    let mut json = serde_json::to_string_pretty(&report).expect("report serialises");
    json.push('\n');
    write_atomic(&dir.join(RUN_SUMMARY_FILE), json.as_bytes())?;
    Ok(report)
}

pub fn cell_file_name(lambda: f64, run_id: u64) -> String {
    format!("lambda_{lambda:.6}_run_{run_id:03}.csv")
}

/// Every (lambda, run) cell of the grid, in parallel. Writes one trace per
/// cell under `runs/` and a per-lambda table to `summary.csv`.
pub fn cmd_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>, CliError> {
    let runs_dir = config.output_dir.join(RUNS_DIR);
    let cells: Vec<(usize, f64, u64)> = config
        .lambdas
        .iter()
        .enumerate()
        .flat_map(|(i, &l)| (0..config.runs as u64).map(move |r| (i, l, r)))
        .collect();
    let results: Vec<Result<RunSummary, CliError>> = cells
        .par_iter()
        .map(|&(_, lambda, run_id)| {
            let trace = run_cell(config, lambda, run_id)?;
            let path = runs_dir.join(cell_file_name(lambda, run_id));
            let bytes = trace_csv(&trace, config.seed).map_err(|e| CliError::io(&path, e))?;
            write_atomic(&path, &bytes)?;
            Ok(trace.summary())
        })
        .collect();

    let mut per_lambda: Vec<Vec<RunSummary>> = vec![Vec::new(); config.lambdas.len()];
    let mut failed = 0;
    for (&(i, lambda, run_id), result) in cells.iter().zip(results) {
        match result {
            Ok(s) => per_lambda[i].push(s),
            Err(e) => {
                failed += 1;
                eprintln!("cell lambda={lambda} run={run_id} failed: {e}");
            }
        }
    }
    let rows: Vec<SweepRow> = config
        .lambdas
        .iter()
        .zip(&per_lambda)
        .filter(|(_, s)| !s.is_empty())
        .map(|(&lambda, s)| summarise(lambda, s))
        .collect();
    let path = config.output_dir.join(SWEEP_SUMMARY_FILE);
    let bytes = sweep_csv(&rows, config.seed).map_err(|e| CliError::io(&path, e))?;
    write_atomic(&path, &bytes)?;
    if failed > 0 {
        return Err(CliError::Cells {
            failed,
            total: cells.len(),
        });
    }
    Ok(rows)
}

fn summarise(lambda: f64, runs: &[RunSummary]) -> SweepRow {
    let collect = |f: fn(&RunSummary) -> f64| runs.iter().map(f).collect::<Vec<_>>();
    let (mean, std) = mean_std(&collect(|s| s.final_cumulative_reward));
    SweepRow {
        lambda,
        runs: runs.len(),
        mean_cumulative_reward: mean,
        std_cumulative_reward: std,
        mean_final_f: mean_std(&collect(|s| s.final_f_value)).0,
        mean_avg_regret: mean_std(&collect(|s| s.mean_regret)).0,
    }
}

const PLOT_SERIES: [&str; 3] = ["f_value", "f_bound", "avg_regret"];

#[derive(Default)]
struct Accum {
    sums: [f64; 3],
    count: usize,
}

/// Per-lambda, per-episode means of the plotted series over every trace CSV
/// in `dir`, in long format.
pub fn plot_rows(dir: &Path) -> Result<(Vec<PlotRow>, Vec<String>), CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Input(format!(
            "no CSV files in {}",
            dir.display()
        )));
    }

    let mut by_lambda: Vec<(f64, BTreeMap<usize, Accum>)> = Vec::new();
    let mut seeds = Vec::new();
    for path in &files {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        if let Some(seed) = text
            .lines()
            .next()
            .filter(|l| l.starts_with('#'))
            .and_then(|l| l.split_whitespace().find_map(|t| t.strip_prefix("seed=")))
        {
            if !seeds.iter().any(|s| s == seed) {
                seeds.push(seed.to_string());
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let bad_file = |what: String| CliError::Input(format!("{}: {what}", path.display()));
        let headers = reader
            .headers()
            .map_err(|e| bad_file(e.to_string()))?
            .clone();
        let column = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| bad_file(format!("missing column `{name}`")))
        };
        let lambda_col = column("lambda")?;
        let episode_col = column("episode")?;
        let series_cols = [
            column(PLOT_SERIES[0])?,
            column(PLOT_SERIES[1])?,
            column(PLOT_SERIES[2])?,
        ];
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| bad_file(e.to_string()))?;
            let field = |col: usize| -> Result<&str, CliError> {
                record
                    .get(col)
                    .ok_or_else(|| bad_file(format!("short row {}", line + 1)))
            };
            let num = |col: usize| -> Result<f64, CliError> {
                field(col)?
                    .parse()
                    .map_err(|_| bad_file(format!("non-numeric value in row {}", line + 1)))
            };
            let lambda = num(lambda_col)?;
            let episode: usize = field(episode_col)?
                .parse()
                .map_err(|_| bad_file(format!("bad episode in row {}", line + 1)))?;
            let idx = match by_lambda.iter().position(|(l, _)| *l == lambda) {
                Some(i) => i,
                None => {
                    by_lambda.push((lambda, BTreeMap::new()));
                    by_lambda.len() - 1
                }
            };
            let acc = by_lambda[idx].1.entry(episode).or_default();
            for (k, &col) in series_cols.iter().enumerate() {
                acc.sums[k] += num(col)?;
            }
            acc.count += 1;
        }
    }
    by_lambda.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut rows = Vec::new();
    for (k, series) in PLOT_SERIES.iter().enumerate() {
        for (lambda, episodes) in &by_lambda {
            for (&episode, acc) in episodes {
                rows.push(PlotRow {
                    series,
                    lambda: *lambda,
                    episode,
                    value: acc.sums[k] / acc.count as f64,
                });
            }
        }
    }
    Ok((rows, seeds))
}

/// Writes plot data to `out`, or stdout when `out` is `None`.
pub fn cmd_plotdata(dir: &Path, out: Option<&Path>) -> Result<usize, CliError> {
    let (rows, seeds) = plot_rows(dir)?;
    let stdout = Path::new("<stdout>");
    let bytes = plot_csv(&rows, &seeds).map_err(|e| CliError::io(out.unwrap_or(stdout), e))?;
    match out {
        Some(path) => write_atomic(path, &bytes)?,
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(&bytes)
                .map_err(|e| CliError::io(stdout, e))?;
        }
    }
    Ok(rows.len())
}
