//! Aggregation of benchmark runs into comparison tables.
//!
//! Values are multiplied by 100 for display. Each row is one design and
//! test set, each column one method; the smallest mean in a row is bold.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::benchmark::{SummaryRow, RESULTS_JSON};
use crate::error::CliError;
use crate::io;
use crate::manifest::{read_json, RunManifest, MANIFEST_FILE};

pub const SCALE: f64 = 100.0;

#[derive(Clone, Debug, PartialEq)]
pub enum Report {
    /// No benchmark manifest was found.
    Empty,
    Tables { markdown: String, n_rows: usize, sources: Vec<PathBuf> },
}

/// Benchmark output directories below `root` (including `root`).
pub fn find_runs(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = std::fs::read_dir(&dir).map_err(|e| CliError::io(&dir, e))?;
        for e in entries {
            let path = e.map_err(|e| CliError::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == MANIFEST_FILE) {
                let m = RunManifest::read(&dir)?;
                if m.command == "benchmark" {
                    found.push(dir.clone());
                }
            }
        }
    }
    found.sort();
    Ok(found)
}

fn cell(r: &SummaryRow) -> String {
    match r.sem {
        Some(s) => format!("{:.3} ± {:.3}", r.mean * SCALE, s * SCALE),
        None => format!("{:.3}", r.mean * SCALE),
    }
}

/// Markdown tables of one metric, or `None` when no row has it.
pub fn metric_table(rows: &[SummaryRow], metric: &str) -> Option<(String, usize)> {
    let rows: Vec<&SummaryRow> = rows.iter().filter(|r| r.metric == metric).collect();
    if rows.is_empty() {
        return None;
    }
    let mut methods: Vec<&str> = Vec::new();
    for r in &rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let mut table: BTreeMap<(usize, &str, &str), BTreeMap<&str, &SummaryRow>> = BTreeMap::new();
    for r in &rows {
        let order = r.setting.parse().map_or(usize::MAX, crate::benchmark::setting_order);
        table.entry((order, &r.setting, &r.test_set)).or_default().insert(&r.method, r);
    }

    let mut md = format!("### {} (x100)\n\n| setting | test set |", metric.to_uppercase());
    for m in &methods {
        md.push_str(&format!(" {m} |"));
    }
    md.push_str("\n|---|---|");
    md.push_str(&"---|".repeat(methods.len()));
    md.push('\n');
    for ((_, setting, set), cells) in &table {
        let best = cells.values().map(|r| r.mean).fold(f64::INFINITY, f64::min);
        md.push_str(&format!("| {setting} | {set} |"));
        for m in &methods {
            match cells.get(m) {
                Some(r) if r.mean == best => md.push_str(&format!(" **{}** |", cell(r))),
                Some(r) => md.push_str(&format!(" {} |", cell(r))),
                None => md.push_str(" NA |"),
            }
        }
        md.push('\n');
    }
    Some((md, table.len()))
}

/// Reads every benchmark run below `root` and builds the report.
pub fn build(root: &Path) -> Result<Report, CliError> {
    let runs = find_runs(root)?;
    if runs.is_empty() {
        return Ok(Report::Empty);
    }
    let mut rows: Vec<SummaryRow> = Vec::new();
    for dir in &runs {
        let m = RunManifest::read(dir)?;
        m.verify(dir)?;
        rows.extend(read_json::<Vec<SummaryRow>>(&dir.join(RESULTS_JSON))?);
    }
    let mut markdown = String::from("# Benchmark summary\n\n");
    let mut n_rows = 0;
    for metric in ["mse", "mae"] {
        if let Some((t, n)) = metric_table(&rows, metric) {
            markdown.push_str(&t);
            markdown.push('\n');
            n_rows = n_rows.max(n);
        }
    }
    Ok(Report::Tables { markdown, n_rows, sources: runs })
}

/// Writes `summary.md` and the scaled long-form `summary.csv` into `out`.
pub fn write(root: &Path, out: &Path) -> Result<Report, CliError> {
    let report = build(root)?;
    if let Report::Tables { markdown, sources, .. } = &report {
        io::create_dir(out)?;
        io::write_text(&out.join("summary.md"), markdown)?;
        let mut rows = Vec::new();
        for dir in sources {
            for r in read_json::<Vec<SummaryRow>>(&dir.join(RESULTS_JSON))? {
                rows.push(vec![
                    Some(r.setting.clone()),
                    Some(r.method.clone()),
                    Some(r.test_set.clone()),
                    Some(r.metric.clone()),
                    Some((r.mean * SCALE).to_string()),
                    r.sem.map(|s| (s * SCALE).to_string()),
                    Some(r.reps.to_string()),
                ]);
            }
        }
        io::save_table(
            &["setting", "method", "test_set", "metric", "mean_x100", "sem_x100", "reps"],
            &rows,
            &out.join("summary.csv"),
        )?;
    }
    Ok(report)
}
