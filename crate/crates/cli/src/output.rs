use std::io::Write;
use std::path::Path;

use pareto_filter::matops::Matrix;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Result table. Cells are already formatted.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Column names `{prefix}_{i}_{j}` in row-major order.
pub fn matrix_columns(prefix: &str, rows: usize, cols: usize) -> Vec<String> {
    (0..rows)
        .flat_map(|i| (0..cols).map(move |j| format!("{prefix}_{i}_{j}")))
        .collect()
}

pub fn matrix_cells(m: &Matrix) -> Vec<String> {
    (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| num(m[(i, j)])))
        .collect()
}

pub fn config_hash(config: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn provenance(config: &ExperimentConfig, seed: u64) -> String {
    format!(
        "# provenance: config_sha256={} seed={seed} version={} {} experiment={}",
        config_hash(config),
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        config.experiment.as_str()
    )
}

fn render(provenance: &str, table: &Table, out: impl Write) -> csv::Result<()> {
    let mut out = out;
    writeln!(out, "{provenance}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Write to `path` through a temporary file in the same directory and an
/// atomic rename, or to stdout when `path` is `None`.
pub fn write_table(path: Option<&Path>, provenance: &str, table: &Table) -> CliResult<()> {
    let Some(path) = path else {
        let stdout = std::io::stdout();
        return render(provenance, table, stdout.lock())
            .map_err(|e| CliError::io(format!("stdout: {e}")));
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let fail =
        |e: &dyn std::fmt::Display| CliError::io(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    render(provenance, table, tmp.as_file_mut()).map_err(|e| fail(&e))?;
    tmp.as_file().sync_all().map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e.error))?;
    Ok(())
}
