//! Result files. Numbers are printed with fixed precision so identical
//! results give identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{AggregateRow, ExperimentError, ExperimentResult, RunRow, Stat, TableKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Markdown,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "md" | "markdown" => Ok(Format::Markdown),
            other => Err(format!("unknown format '{other}' (expected csv, json or md)")),
        }
    }
}

/// Summary table: one row per cell, one column per scheduler.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    pub row_header: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<Stat>>)>,
    /// Multiplier applied when printing (100 for percentages).
    pub scale: f64,
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn size_label(mb: f64) -> String {
    if mb >= 1024.0 && (mb / 1024.0).fract() == 0.0 {
        format!("{} GB", mb / 1024.0)
    } else {
        format!("{mb} MB")
    }
}

pub fn summary_table(res: &ExperimentResult) -> Table {
    let (title, header, scale, metric): (&str, &str, f64, fn(&AggregateRow) -> Option<Stat>) = match res.table {
        TableKind::CompletionBySize => ("Task completion time (s)", "File size", 1.0, |a| a.completion_s),
        TableKind::LocalityByNodes => ("Task locality ratio (%)", "Nodes", 100.0, |a| a.locality),
        TableKind::ThroughputByReplication => ("Throughput (MB/s)", "Replication factor", 1.0, |a| a.throughput_mb_s),
        TableKind::CompletionByNodes => ("Completion time under stragglers (s)", "Nodes", 1.0, |a| a.completion_s),
    };
    let varies = |f: fn(&super::Cell) -> String| {
        let mut v: Vec<String> = res.cells.iter().map(f).collect();
        v.sort();
        v.dedup();
        v.len() > 1
    };
    let nodes = varies(|c| c.nodes.to_string());
    let mut pairs: Vec<String> = res.cells.iter().map(|c| format!("{} {:?}", c.nodes, c.input_mb)).collect();
    pairs.sort();
    pairs.dedup();
    let mut node_values: Vec<usize> = res.cells.iter().map(|c| c.nodes).collect();
    node_values.sort();
    node_values.dedup();
    // sizes that only follow the cluster size are not shown
    let size = varies(|c| format!("{:?}", c.input_mb)) && pairs.len() > node_values.len();
    let rf = varies(|c| c.replication.to_string());
    let block = varies(|c| c.block_mb.to_string());
    let rows = res
        .cells
        .iter()
        .map(|c| {
            let size_part = c.input_mb.map(size_label).unwrap_or_else(|| "profile".into());
            let mut parts = vec![match res.table {
                TableKind::CompletionBySize => size_part.clone(),
                TableKind::LocalityByNodes | TableKind::CompletionByNodes => c.nodes.to_string(),
                TableKind::ThroughputByReplication => c.replication.to_string(),
            }];
            if nodes && !matches!(res.table, TableKind::LocalityByNodes | TableKind::CompletionByNodes) {
                parts.push(format!("{} nodes", c.nodes));
            }
            if size && res.table != TableKind::CompletionBySize {
                parts.push(size_part);
            }
            if rf && res.table != TableKind::ThroughputByReplication {
                parts.push(format!("RF {}", c.replication));
            }
            if block {
                parts.push(format!("{} MB blocks", c.block_mb));
            }
            let values = res.schedulers.iter().map(|&k| res.aggregate_for(c.index, k).and_then(metric)).collect();
            (parts.join(", "), values)
        })
        .collect();
    Table {
        title: title.into(),
        row_header: header.into(),
        columns: res.schedulers.iter().map(|k| k.title().to_string()).collect(),
        rows,
        scale,
    }
}

impl Table {
    pub fn to_markdown(&self) -> String {
        let mut out = format!("### {}\n\n| {} |", self.title, self.row_header);
        for c in &self.columns {
            let _ = write!(out, " {c} |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(self.columns.len()));
        out.push('\n');
        for (label, values) in &self.rows {
            let _ = write!(out, "| {label} |");
            for v in values {
                match v {
                    Some(s) => {
                        let _ = write!(out, " {:.2} ± {:.2} |", s.mean * self.scale, s.sd * self.scale);
                    }
                    None => out.push_str(" n/a |"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> Result<String, ExperimentError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![self.row_header.clone()];
        for c in &self.columns {
            header.push(format!("{c} mean"));
            header.push(format!("{c} sd"));
        }
        w.write_record(&header).map_err(io)?;
        for (label, values) in &self.rows {
            let mut rec = vec![label.clone()];
            for v in values {
                rec.push(opt(v.map(|s| s.mean * self.scale)));
                rec.push(opt(v.map(|s| s.sd * self.scale)));
            }
            w.write_record(&rec).map_err(io)?;
        }
        finish(w)
    }
}

fn io(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io(e.to_string())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, ExperimentError> {
    let bytes = w.into_inner().map_err(io)?;
    String::from_utf8(bytes).map_err(io)
}

pub fn runs_csv(runs: &[RunRow]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "cell", "nodes", "input_mb", "replication", "block_mb", "scheduler", "rep", "seed", "status", "completion_s", "locality",
        "throughput_mb_s", "network_mb", "recovery_s", "migrations", "iterations",
    ])
    .map_err(io)?;
    for r in runs {
        w.write_record([
            r.cell.to_string(),
            r.nodes.to_string(),
            opt(r.input_mb),
            r.replication.to_string(),
            num(r.block_mb),
            r.scheduler.label().to_string(),
            r.rep.to_string(),
            r.seed.to_string(),
            r.status.clone(),
            opt(r.completion_s),
            opt(r.locality),
            opt(r.throughput_mb_s),
            opt(r.network_mb),
            opt(r.recovery_s),
            r.migrations.map(|m| m.to_string()).unwrap_or_default(),
            r.iterations.map(|m| m.to_string()).unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    finish(w)
}

const METRICS: [&str; 6] = ["completion_s", "locality", "throughput_mb_s", "network_mb", "recovery_s", "migrations"];

pub fn aggregate_csv(rows: &[AggregateRow]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["cell", "nodes", "input_mb", "replication", "block_mb", "scheduler", "runs", "failures"].map(String::from).to_vec();
    for m in METRICS {
        for s in ["mean", "sd", "ci_lo", "ci_hi"] {
            header.push(format!("{m}_{s}"));
        }
    }
    w.write_record(&header).map_err(io)?;
    for a in rows {
        let mut rec = vec![
            a.cell.to_string(),
            a.nodes.to_string(),
            opt(a.input_mb),
            a.replication.to_string(),
            num(a.block_mb),
            a.scheduler.label().to_string(),
            a.runs.to_string(),
            a.failures.to_string(),
        ];
        for s in [a.completion_s, a.locality, a.throughput_mb_s, a.network_mb, a.recovery_s, a.migrations] {
            rec.extend([opt(s.map(|s| s.mean)), opt(s.map(|s| s.sd)), opt(s.map(|s| s.ci_lo)), opt(s.map(|s| s.ci_hi))]);
        }
        w.write_record(&rec).map_err(io)?;
    }
    finish(w)
}

pub fn aggregate_json(rows: &[AggregateRow]) -> String {
    let mut s = serde_json::to_string_pretty(rows).expect("aggregate rows serialize");
    s.push('\n');
    s
}

fn write(dir: &Path, name: &str, body: &str, out: &mut Vec<PathBuf>) -> Result<(), ExperimentError> {
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
    out.push(path);
    Ok(())
}

/// Writes `runs.csv` plus the aggregate in `format`; returns the paths.
pub fn emit(res: &ExperimentResult, dir: &Path, format: Format) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|e| ExperimentError::Io(format!("{}: {e}", dir.display())))?;
    let mut out = Vec::new();
    write(dir, "runs.csv", &runs_csv(&res.runs)?, &mut out)?;
    let table = summary_table(res);
    match format {
        Format::Csv => {
            write(dir, "aggregate.csv", &aggregate_csv(&res.aggregates)?, &mut out)?;
            write(dir, "table.csv", &table.to_csv()?, &mut out)?;
        }
        Format::Json => write(dir, "aggregate.json", &aggregate_json(&res.aggregates), &mut out)?,
        Format::Markdown => write(dir, "table.md", &table.to_markdown(), &mut out)?,
    }
    Ok(out)
}
