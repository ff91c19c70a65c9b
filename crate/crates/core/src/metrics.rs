//! metrics.csv writing: one row per training iteration, missing
//! quantities as empty fields, LF line endings, '.' decimal separator.

use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const CSV_HEADER: &str = "run_id,seed,iteration,global_step,rollout_len,batch_size,\
epochs_used,epsilon,divergence_raw,divergence_smoothed,gns_value,loss_mean,\
episodic_return_mean,episodic_return_count,wall_ms";

/// One training iteration's worth of metrics. Quantities a mode does not
/// produce stay `None` and are written as empty fields, never as zeros.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub seed: u64,
    pub iteration: u64,
    pub global_step: u64,
    pub rollout_len: Option<u64>,
    pub batch_size: u64,
    pub epochs_used: Option<u64>,
    pub epsilon: Option<f64>,
    pub divergence_raw: Option<f64>,
    pub divergence_smoothed: Option<f64>,
    pub gns_value: Option<f64>,
    pub loss_mean: Option<f64>,
    pub episodic_return_mean: Option<f64>,
    pub episodic_return_count: u64,
    pub wall_ms: Option<f64>,
}

fn opt_u(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_f(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.seed,
            self.iteration,
            self.global_step,
            opt_u(self.rollout_len),
            self.batch_size,
            opt_u(self.epochs_used),
            opt_f(self.epsilon),
            opt_f(self.divergence_raw),
            opt_f(self.divergence_smoothed),
            opt_f(self.gns_value),
            opt_f(self.loss_mean),
            opt_f(self.episodic_return_mean),
            self.episodic_return_count,
            opt_f(self.wall_ms),
        )
    }
}

/// Buffered CSV writer that emits the header on creation and flushes on
/// demand (always flushed before a divergence abort).
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<MetricsWriter> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = MetricsWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        w.write_line(CSV_HEADER)?;
        Ok(w)
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        let line = row.to_csv_line();
        self.write_line(&line)
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        self.out
            .write_all(line.as_bytes())
            .and_then(|_| self.out.write_all(b"\n"))
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// A metrics.csv read back for comparison/reporting. Values are kept as
/// parsed options mirroring the writer's empty-field convention.
#[derive(Debug, Clone)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

pub fn read_metrics(path: &Path) -> Result<MetricsTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        Some(h) => {
            return Err(Error::Malformed(format!(
                "{}: unexpected header '{h}'",
                path.display()
            )))
        }
        None => {
            return Err(Error::Malformed(format!("{}: empty file", path.display())))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        rows.push(parse_row(line).map_err(|msg| {
            Error::Malformed(format!("{} row {}: {msg}", path.display(), i + 2))
        })?);
    }
    Ok(MetricsTable { rows })
}

fn parse_row(line: &str) -> std::result::Result<MetricsRow, String> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 15 {
        return Err(format!("expected 15 fields, got {}", f.len()));
    }
    fn req<T: std::str::FromStr>(s: &str, name: &str) -> std::result::Result<T, String> {
        s.parse().map_err(|_| format!("bad {name} '{s}'"))
    }
    fn opt<T: std::str::FromStr>(s: &str, name: &str) -> std::result::Result<Option<T>, String> {
        if s.is_empty() {
            Ok(None)
        } else {
            req(s, name).map(Some)
        }
    }
    Ok(MetricsRow {
        run_id: f[0].to_string(),
        seed: req(f[1], "seed")?,
        iteration: req(f[2], "iteration")?,
        global_step: req(f[3], "global_step")?,
        rollout_len: opt(f[4], "rollout_len")?,
        batch_size: req(f[5], "batch_size")?,
        epochs_used: opt(f[6], "epochs_used")?,
        epsilon: opt(f[7], "epsilon")?,
        divergence_raw: opt(f[8], "divergence_raw")?,
        divergence_smoothed: opt(f[9], "divergence_smoothed")?,
        gns_value: opt(f[10], "gns_value")?,
        loss_mean: opt(f[11], "loss_mean")?,
        episodic_return_mean: opt(f[12], "episodic_return_mean")?,
        episodic_return_count: req(f[13], "episodic_return_count")?,
        wall_ms: opt(f[14], "wall_ms")?,
    })
}
