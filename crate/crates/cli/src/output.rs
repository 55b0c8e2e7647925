//! File formats written by the commands. Every file starts with a `#` line
//! carrying the seed so any output can be traced back to its run.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use tseb::{MetricsTrace, TraceRow};

use crate::error::CliError;

/// Per-episode CSV columns, in order.
pub const TRACE_COLUMNS: [&str; 10] = [
    "run_id",
    "lambda",
    "episode",
    "episode_return",
    "cumulative_reward",
    "f_value",
    "f_bound",
    "avg_regret",
    "n_min",
    "tau_bound",
];

#[derive(Serialize)]
struct TraceCsvRow {
    run_id: u64,
    lambda: f64,
    episode: usize,
    episode_return: f64,
    cumulative_reward: f64,
    f_value: f64,
    f_bound: f64,
    avg_regret: f64,
    n_min: u64,
    tau_bound: f64,
}

impl From<&TraceRow> for TraceCsvRow {
    fn from(r: &TraceRow) -> Self {
        Self {
            run_id: r.run_id,
            lambda: r.lambda,
            episode: r.episode,
            episode_return: r.episode_return,
            cumulative_reward: r.cumulative_reward,
            f_value: r.f_value,
            f_bound: r.f_bound,
            avg_regret: r.avg_regret,
            n_min: r.n_min,
            tau_bound: r.tau_bound,
        }
    }
}

fn csv_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// Renders a trace as CSV under a seed header line.
pub fn trace_csv(trace: &MetricsTrace, base_seed: u64) -> std::io::Result<Vec<u8>> {
    let mut buf = format!(
        "# seed={base_seed} cell_seed={} run_id={} lambda={}\n",
        trace.seed, trace.run_id, trace.lambda
    )
    .into_bytes();
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(&mut buf);
    w.write_record(TRACE_COLUMNS).map_err(csv_err)?;
    for row in &trace.rows {
        w.serialize(TraceCsvRow::from(row)).map_err(csv_err)?;
    }
    w.flush()?;
    drop(w);
    Ok(buf)
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// One line of the sweep summary table.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub runs: usize,
    pub mean_cumulative_reward: f64,
    pub std_cumulative_reward: f64,
    pub mean_final_f: f64,
    pub mean_avg_regret: f64,
}

pub fn sweep_csv(rows: &[SweepRow], base_seed: u64) -> std::io::Result<Vec<u8>> {
    let mut buf = format!("# seed={base_seed}\n").into_bytes();
    let mut w = csv::Writer::from_writer(&mut buf);
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    drop(w);
    Ok(buf)
}

/// Long-format plot series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub series: &'static str,
    pub lambda: f64,
    pub episode: usize,
    pub value: f64,
}

pub fn plot_csv(rows: &[PlotRow], seeds: &[String]) -> std::io::Result<Vec<u8>> {
    let mut buf = format!("# seeds={}\n", seeds.join(",")).into_bytes();
    let mut w = csv::Writer::from_writer(&mut buf);
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    drop(w);
    Ok(buf)
}
