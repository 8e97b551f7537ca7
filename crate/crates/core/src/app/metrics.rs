//! Metrics CSV schema. Core columns come first; the header never changes
//! within a schema version.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::game::EpochMetrics;

pub const METRICS_SCHEMA_VERSION: u32 = 1;
pub const PREF_COLUMNS: usize = 10;

const CORE: [&str; 7] = [
    "epoch",
    "env_accuracy",
    "comm_success",
    "sender_reward_mean",
    "probe_entropy_mean",
    "curvature_mean",
    "size_fraction_mean",
];
const EXTRA: [&str; 8] = [
    "probe_top1",
    "phase",
    "payoff",
    "comm_probability",
    "env_rounds",
    "comm_rounds",
    "updates_skipped",
    "clip_fraction_mean",
];

pub fn header() -> Vec<String> {
    CORE.iter()
        .map(|s| s.to_string())
        .chain((0..PREF_COLUMNS).map(|r| format!("pref_r{r}")))
        .chain(EXTRA.iter().map(|s| s.to_string()))
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn label<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|j| j.as_str().map(str::to_string)).unwrap_or_default()
}

/// Referents beyond `PREF_COLUMNS` are not recorded.
pub fn row(m: &EpochMetrics) -> Vec<String> {
    let mut out = vec![
        m.epoch.to_string(),
        opt(m.env_accuracy),
        opt(m.comm_success),
        opt(m.sender_reward_mean),
        opt(m.probe_entropy_mean),
        m.curvature_mean.to_string(),
        m.size_fraction_mean.to_string(),
    ];
    let pref = m.pref.as_deref().unwrap_or(&[]);
    out.extend((0..PREF_COLUMNS).map(|r| pref.get(r).map(|p| p.to_string()).unwrap_or_default()));
    out.extend([
        opt(m.probe_top1),
        label(&m.phase),
        label(&m.payoff),
        m.comm_probability.to_string(),
        m.env_rounds.to_string(),
        m.comm_rounds.to_string(),
        m.updates_skipped.to_string(),
        m.clip_fraction_mean.to_string(),
    ]);
    out
}

/// Append-only writer flushed after every row.
pub struct MetricsWriter {
    inner: csv::Writer<File>,
}

impl MetricsWriter {
    /// Opens `path` for appending; a missing or empty file gets the header.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if fresh {
            inner.write_record(header())?;
            inner.flush()?;
        }
        Ok(Self { inner })
    }

    pub fn append(&mut self, m: &EpochMetrics) -> std::io::Result<()> {
        self.inner.write_record(row(m))?;
        self.inner.flush()
    }
}

/// Drops rows whose epoch exceeds `epoch`, keeping the header.
pub fn truncate_after(path: &Path, epoch: usize) -> std::io::Result<()> {
    let reader = BufReader::new(File::open(path)?);
    let mut kept = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let first = line.split(',').next().unwrap_or("");
        if i == 0 || first.parse::<usize>().map(|e| e <= epoch).unwrap_or(false) {
            kept.push(line);
        }
    }
    let mut f = File::create(path)?;
    for line in kept {
        writeln!(f, "{line}")?;
    }
    f.flush()
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("{path}: no data rows")]
    NoDataRows { path: PathBuf },
    #[error("{path}: column {column} missing from header")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: line {line}, column {column}: cannot parse {value:?} as a number")]
    BadValue { path: PathBuf, line: usize, column: String, value: String },
}

/// Parsed metrics: column names and one value per row (None when blank).
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl MetricsTable {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

const TEXT_COLUMNS: [&str; 2] = ["phase", "payoff"];

pub fn read_metrics(path: &Path) -> Result<MetricsTable, MetricsError> {
    let read_err = |e: &dyn std::fmt::Display| MetricsError::Read { path: path.to_path_buf(), message: e.to_string() };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| read_err(&e))?;
    let columns: Vec<String> = rdr.headers().map_err(|e| read_err(&e))?.iter().map(str::to_string).collect();
    if !columns.iter().any(|c| c == "epoch") {
        return Err(MetricsError::MissingColumn { path: path.to_path_buf(), column: "epoch".into() });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| read_err(&e))?;
        let mut row = Vec::with_capacity(columns.len());
        for (col, value) in columns.iter().zip(rec.iter()) {
            if value.is_empty() || TEXT_COLUMNS.contains(&col.as_str()) {
                row.push(None);
                continue;
            }
            let v = value.parse::<f64>().map_err(|_| MetricsError::BadValue {
                path: path.to_path_buf(),
                line: i + 2,
                column: col.clone(),
                value: value.to_string(),
            })?;
            row.push(Some(v));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(MetricsError::NoDataRows { path: path.to_path_buf() });
    }
    Ok(MetricsTable { columns, rows })
}
