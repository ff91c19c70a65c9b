//! Run comparison: early/late-decile return summary table and optional
//! SVG charts, computed purely from each run's metrics.csv.

use crate::error::{Error, Result};
use crate::math::{mean, std_dev};
use crate::metrics::{read_metrics, MetricsRow};
use crate::svg::{line_chart, Series};
use std::path::{Path, PathBuf};

/// Early/late-window numbers for one run directory.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_id: String,
    pub dir: PathBuf,
    pub iterations: usize,
    /// Mean episodic return over the first 10% of iterations.
    pub early_mean: Option<f64>,
    /// Mean episodic return over the last 10% of iterations.
    pub late_mean: Option<f64>,
    /// Std of the episodic return over the last 10% of iterations.
    pub late_std: Option<f64>,
    rows: Vec<MetricsRow>,
}

/// Rows of the first/last `frac` of iterations (at least one row each).
pub fn decile_slices(rows: &[MetricsRow], frac: f64) -> (&[MetricsRow], &[MetricsRow]) {
    let n = rows.len();
    let w = ((n as f64 * frac).ceil() as usize).clamp(1, n);
    (&rows[..w], &rows[n - w..])
}

fn window_returns(rows: &[MetricsRow]) -> Vec<f64> {
    rows.iter().filter_map(|r| r.episodic_return_mean).collect()
}

pub fn summarize_run(dir: &Path) -> Result<RunSummary> {
    let table = read_metrics(&dir.join("metrics.csv"))?;
    if table.rows.is_empty() {
        return Err(Error::Malformed(format!(
            "{}: metrics.csv has no data rows",
            dir.display()
        )));
    }
    let (early, late) = decile_slices(&table.rows, 0.10);
    let early_returns = window_returns(early);
    let late_returns = window_returns(late);
    Ok(RunSummary {
        run_id: table.rows[0].run_id.clone(),
        dir: dir.to_path_buf(),
        iterations: table.rows.len(),
        early_mean: (!early_returns.is_empty()).then(|| mean(&early_returns)),
        late_mean: (!late_returns.is_empty()).then(|| mean(&late_returns)),
        late_std: (!late_returns.is_empty()).then(|| std_dev(&late_returns)),
        rows: table.rows,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

/// Build the comparison table; with `svg` also write return, rollout
/// length, and divergence charts (one trace per run) into `svg_dir`.
pub fn compare_runs(dirs: &[PathBuf], svg: Option<&Path>) -> Result<String> {
    if dirs.is_empty() {
        return Err(Error::Config("compare needs at least one run directory".into()));
    }
    let summaries: Vec<RunSummary> = dirs
        .iter()
        .map(|d| summarize_run(d))
        .collect::<Result<_>>()?;

    let mut out = String::new();
    out.push_str(&format!(
        "{:<32} {:>10} {:>12} {:>12} {:>12}\n",
        "run_id", "iters", "early_mean", "late_mean", "late_std"
    ));
    for s in &summaries {
        out.push_str(&format!(
            "{:<32} {:>10} {:>12} {:>12} {:>12}\n",
            s.run_id,
            s.iterations,
            cell(s.early_mean),
            cell(s.late_mean),
            cell(s.late_std),
        ));
    }

    if let Some(dir) = svg {
        write_charts(&summaries, dir)?;
    }
    Ok(out)
}

fn trace(
    s: &RunSummary,
    pick: impl Fn(&MetricsRow) -> Option<f64>,
) -> Series {
    Series {
        label: s.run_id.clone(),
        points: s
            .rows
            .iter()
            .filter_map(|r| pick(r).map(|y| (r.global_step as f64, y)))
            .collect(),
    }
}

fn write_charts(summaries: &[RunSummary], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let charts: [(&str, &str, Box<dyn Fn(&MetricsRow) -> Option<f64>>); 3] = [
        (
            "compare_return.svg",
            "episodic return (trailing mean)",
            Box::new(|r: &MetricsRow| r.episodic_return_mean),
        ),
        (
            "compare_rollout_len.svg",
            "rollout length",
            Box::new(|r: &MetricsRow| r.rollout_len.map(|v| v as f64)),
        ),
        (
            "compare_divergence.svg",
            "smoothed divergence",
            Box::new(|r: &MetricsRow| r.divergence_smoothed),
        ),
    ];
    for (file, ylabel, pick) in charts {
        let series: Vec<Series> = summaries.iter().map(|s| trace(s, &pick)).collect();
        let svg = line_chart(ylabel, "environment step", ylabel, &series);
        let path = dir.join(file);
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{MetricsRow, MetricsWriter};

    fn fake_run(dir: &Path, run_id: &str, returns: &[f64]) {
        std::fs::create_dir_all(dir).unwrap();
        let mut w = MetricsWriter::create(&dir.join("metrics.csv")).unwrap();
        for (i, &ret) in returns.iter().enumerate() {
            w.append(&MetricsRow {
                run_id: run_id.into(),
                seed: 0,
                iteration: i as u64 + 1,
                global_step: (i as u64 + 1) * 100,
                rollout_len: Some(16 + (i as u64 % 4) * 16),
                batch_size: 2048,
                episodic_return_mean: Some(ret),
                episodic_return_count: 100,
                ..Default::default()
            })
            .unwrap();
        }
        w.flush().unwrap();
    }

    #[test]
    fn single_run_table_has_early_late_and_std() {
        let dir = std::env::temp_dir().join(format!("cmp-one-{}", std::process::id()));
        // 20 rows: early decile = first 2 rows, late = last 2.
        let returns: Vec<f64> = (0..20).map(|i| i as f64).collect();
        fake_run(&dir, "demo", &returns);
        let s = summarize_run(&dir).unwrap();
        assert_eq!(s.iterations, 20);
        assert!((s.early_mean.unwrap() - 0.5).abs() < 1e-12);
        assert!((s.late_mean.unwrap() - 18.5).abs() < 1e-12);
        assert!((s.late_std.unwrap() - 0.5).abs() < 1e-12);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn identical_runs_produce_identical_summary_lines() {
        let base = std::env::temp_dir().join(format!("cmp-two-{}", std::process::id()));
        let returns: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        fake_run(&base.join("a"), "same", &returns);
        fake_run(&base.join("b"), "same", &returns);
        let table = compare_runs(&[base.join("a"), base.join("b")], None).unwrap();
        let lines: Vec<&str> = table.lines().skip(1).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], lines[1]);
        std::fs::remove_dir_all(&base).unwrap();
    }

    #[test]
    fn svg_charts_are_written() {
        let base = std::env::temp_dir().join(format!("cmp-svg-{}", std::process::id()));
        fake_run(&base.join("a"), "r", &[0.0, 0.5, 1.0, 1.5]);
        let out = base.join("charts");
        compare_runs(&[base.join("a")], Some(&out)).unwrap();
        for f in [
            "compare_return.svg",
            "compare_rollout_len.svg",
            "compare_divergence.svg",
        ] {
            let text = std::fs::read_to_string(out.join(f)).unwrap();
            assert!(text.starts_with("<svg"), "{f}");
        }
        std::fs::remove_dir_all(&base).unwrap();
    }

    #[test]
    fn missing_metrics_is_an_error() {
        let dir = std::env::temp_dir().join(format!("cmp-missing-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        assert!(summarize_run(&dir).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
