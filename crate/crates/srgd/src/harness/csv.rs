//! CSV output for runs and aggregates, plus a reader for post-hoc
//! bound evaluation.
//!
//! Files start with a `# generated-unix <secs>` comment; every other
//! `#` line is also a comment.  Missing diagnostics are empty cells so
//! the column layout is fixed per file kind.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::engine::RunResult;
use crate::harness::ensemble::{AggregateRow, EnsembleResult};
use crate::harness::HarnessError;

pub const RUN_HEADER: &str = "k,f,grad_norm,tau,stagnation,test_error";
pub const AGGREGATE_HEADER: &str =
    "k,f_mean,f_var,test_error_mean,test_error_var,grad_norm_mean,tau_mean,stagnation_fraction";

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn timestamp_comment() -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    format!("# generated-unix {secs}\n")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// One CSV row per iteration of a single run.
pub fn write_run_csv(path: &Path, run: &RunResult) -> Result<(), HarnessError> {
    let mut out = timestamp_comment();
    out.push_str(RUN_HEADER);
    out.push('\n');
    for tr in &run.traces {
        let test_error = tr
            .metrics
            .iter()
            .find(|(name, _)| name == "test_error")
            .map(|(_, v)| *v);
        let stag = tr.stagnation.map(|s| if s { 1.0 } else { 0.0 });
        writeln!(
            out,
            "{},{},{},{},{},{}",
            tr.k,
            tr.f_value,
            opt(tr.grad_norm),
            opt(tr.tau),
            opt(stag),
            opt(test_error),
        )
        .expect("string write");
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Aggregate rows, optionally with extra named columns appended
/// (used for bound evaluation output).
pub fn write_aggregate_csv(
    path: &Path,
    result: &EnsembleResult,
    extra: Option<(&[&str], &[Vec<f64>], &str)>,
) -> Result<(), HarnessError> {
    let mut out = timestamp_comment();
    if let Some((_, _, note)) = extra {
        if !note.is_empty() {
            let _ = writeln!(out, "# {note}");
        }
    }
    out.push_str(AGGREGATE_HEADER);
    if let Some((names, _, _)) = extra {
        for n in names {
            out.push(',');
            out.push_str(n);
        }
    }
    out.push('\n');
    for (i, row) in result.rows.iter().enumerate() {
        write!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.k,
            row.f_mean,
            row.f_var,
            opt(row.test_error_mean),
            opt(row.test_error_var),
            opt(row.grad_norm_mean),
            opt(row.tau_mean),
            opt(row.stagnation_fraction),
        )
        .expect("string write");
        if let Some((_, cols, _)) = extra {
            for col in cols {
                let _ = write!(out, ",{}", col[i]);
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

fn parse_cell(cell: &str, path: &Path, line: usize) -> Result<Option<f64>, HarnessError> {
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>().map(Some).map_err(|_| {
        HarnessError::Config(format!(
            "{}:{line}: not a number: {cell:?}",
            path.display()
        ))
    })
}

/// Reads back an aggregate CSV (comments skipped, extra columns ignored).
pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.starts_with('#') || raw.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if !raw.starts_with(AGGREGATE_HEADER) {
                return Err(HarnessError::Config(format!(
                    "{}:{line}: unexpected header {raw:?}",
                    path.display()
                )));
            }
            saw_header = true;
            continue;
        }
        let cells: Vec<&str> = raw.split(',').collect();
        if cells.len() < 8 {
            return Err(HarnessError::Config(format!(
                "{}:{line}: expected at least 8 columns, found {}",
                path.display(),
                cells.len()
            )));
        }
        let req = |i: usize| -> Result<f64, HarnessError> {
            parse_cell(cells[i], path, line)?.ok_or_else(|| {
                HarnessError::Config(format!(
                    "{}:{line}: column {} must not be empty",
                    path.display(),
                    i + 1
                ))
            })
        };
        rows.push(AggregateRow {
            k: req(0)? as u64,
            f_mean: req(1)?,
            f_var: req(2)?,
            test_error_mean: parse_cell(cells[3], path, line)?,
            test_error_var: parse_cell(cells[4], path, line)?,
            grad_norm_mean: parse_cell(cells[5], path, line)?,
            tau_mean: parse_cell(cells[6], path, line)?,
            stagnation_fraction: parse_cell(cells[7], path, line)?,
        });
    }
    if !saw_header {
        return Err(HarnessError::Config(format!(
            "{}: no header row found",
            path.display()
        )));
    }
    Ok(rows)
}

/// Strips comment lines; used to compare outputs for reproducibility.
pub fn strip_comments(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}
