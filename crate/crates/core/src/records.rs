//! On-disk formats: dataset, candidate, trajectory, training-log and result
//! CSVs, plus `key=value` metadata sidecars.
//!
//! Reals are written with 17 significant digits so every file round-trips
//! exactly and re-runs produce byte-identical output.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::sampler::Snapshot;
use crate::training::{EpochRecord, OfflineDataset};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    parse_error(path, line, e.to_string())
}

/// Reads the data rows of a headered numeric CSV. Returns the header and
/// one `Vec<f64>` per row.
fn read_numeric(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field.trim().parse::<f64>().map_err(|_| {
                    parse_error(path, line, format!("column {:?}: cannot parse {field:?} as a number", header[j]))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((line, row));
    }
    for (line, row) in &rows {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(parse_error(path, *line, "non-finite value"));
        }
    }
    Ok((header, rows.into_iter().map(|(_, r)| r).collect()))
}

fn point_header(prefix: &[&str], d: usize) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain((0..d).map(|j| format!("x{j}")))
        .collect()
}

pub fn write_dataset(path: impl AsRef<Path>, dataset: &OfflineDataset) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    let mut header = point_header(&[], dataset.dim());
    header.push("y".into());
    w.write_record(&header)?;
    for (x, y) in dataset.points().iter_rows().zip(dataset.values()) {
        w.write_record(x.iter().chain(std::iter::once(y)).map(|v| fmt_f64(*v)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<OfflineDataset> {
    let path = path.as_ref();
    let (header, rows) = read_numeric(path)?;
    let d = header.len().checked_sub(1).filter(|&d| d > 0);
    let valid = d.is_some_and(|d| header[d] == "y" && (0..d).all(|j| header[j] == format!("x{j}")));
    let Some(d) = d.filter(|_| valid) else {
        return Err(parse_error(path, 1, "expected header x0,...,x{d-1},y"));
    };
    let mut points = Vec::with_capacity(rows.len() * d);
    let mut values = Vec::with_capacity(rows.len());
    for row in rows {
        points.extend_from_slice(&row[..d]);
        values.push(row[d]);
    }
    let n = values.len();
    OfflineDataset::new(Matrix::new(n, d, points)?, values)
}

pub fn write_candidates(path: impl AsRef<Path>, points: &Matrix) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(point_header(&["candidate_index"], points.cols()))?;
    for (i, x) in points.iter_rows().enumerate() {
        w.write_record(std::iter::once(i.to_string()).chain(x.iter().map(|v| fmt_f64(*v))))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads candidate points in file order. The index column is checked but
/// not otherwise used.
pub fn read_candidates(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let (header, rows) = read_numeric(path)?;
    if header.first().map(String::as_str) != Some("candidate_index") || header.len() < 2 {
        return Err(parse_error(path, 1, "expected header candidate_index,x0,...,x{d-1}"));
    }
    let d = header.len() - 1;
    let mut data = Vec::with_capacity(rows.len() * d);
    for row in &rows {
        data.extend_from_slice(&row[1..]);
    }
    Matrix::new(rows.len(), d, data)
}

/// One row per (candidate, step), grouped by candidate.
pub fn write_trajectory(path: impl AsRef<Path>, snapshots: &[Snapshot]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    let d = snapshots.first().map_or(0, |s| s.points.cols());
    w.write_record(point_header(&["candidate_index", "step", "t"], d))?;
    let q = snapshots.first().map_or(0, |s| s.points.rows());
    for i in 0..q {
        for s in snapshots {
            let fields = [i.to_string(), s.step.to_string(), fmt_f64(s.t)];
            w.write_record(fields.into_iter().chain(s.points.row(i).iter().map(|v| fmt_f64(*v))))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Training log. Wall-clock time is written only when `timing` is set, so
/// that logs are reproducible by default.
pub fn write_train_log(path: impl AsRef<Path>, log: &[EpochRecord], timing: bool) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["epoch", "mean_loss", "wall_seconds"])?;
    for r in log {
        w.write_record([
            r.epoch.to_string(),
            fmt_f64(r.mean_loss),
            fmt_opt(timing.then_some(r.wall_seconds)),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Ordered `key=value` pairs, one per line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.set(key, value);
        self
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut meta = Metadata::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_error(path, i as u64 + 1, "expected key=value"))?;
            meta.set(k.trim(), v.trim());
        }
        Ok(meta)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

/// `<path>.meta`, the sidecar next to a data file.
pub fn sidecar_path(path: impl AsRef<Path>) -> PathBuf {
    let mut s = path.as_ref().as_os_str().to_os_string();
    s.push(".meta");
    PathBuf::from(s)
}

/// One evaluated batch of candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub task: String,
    pub seed: u64,
    pub gamma: f64,
    pub steps: usize,
    pub q: usize,
    pub reweight: bool,
    /// Conditioning value on the original objective scale.
    pub conditioning_y: f64,
    pub max_f: f64,
    pub mean_f: f64,
    pub wall_seconds: Option<f64>,
}

pub const RESULT_HEADER: [&str; 10] = [
    "task",
    "seed",
    "gamma",
    "steps",
    "q",
    "reweight",
    "conditioning_y",
    "max_f",
    "mean_f",
    "wall_seconds",
];

impl ExperimentResult {
    fn fields(&self) -> Vec<String> {
        vec![
            self.task.clone(),
            self.seed.to_string(),
            fmt_f64(self.gamma),
            self.steps.to_string(),
            self.q.to_string(),
            self.reweight.to_string(),
            fmt_f64(self.conditioning_y),
            fmt_f64(self.max_f),
            fmt_f64(self.mean_f),
            fmt_opt(self.wall_seconds),
        ]
    }
}

/// Writes `results`, or appends them when `append` is set and the file
/// already exists.
pub fn write_results(path: impl AsRef<Path>, results: &[ExperimentResult], append: bool) -> Result<()> {
    let path = path.as_ref();
    let existing = append && path.exists();
    let file = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(existing)
        .truncate(!existing)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    if !existing {
        w.write_record(RESULT_HEADER)?;
    }
    for r in results {
        w.write_record(r.fields())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ExperimentResult>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |field: &str| parse_error(path, line, format!("bad {field}"));
        let f = |i: usize| -> Result<f64> { record[i].parse().map_err(|_| bad(RESULT_HEADER[i])) };
        let u = |i: usize| -> Result<u64> { record[i].parse().map_err(|_| bad(RESULT_HEADER[i])) };
        if record.len() != RESULT_HEADER.len() {
            return Err(parse_error(path, line, "wrong number of columns"));
        }
        out.push(ExperimentResult {
            task: record[0].to_string(),
            seed: u(1)?,
            gamma: f(2)?,
            steps: u(3)? as usize,
            q: u(4)? as usize,
            reweight: record[5].parse().map_err(|_| bad("reweight"))?,
            conditioning_y: f(6)?,
            max_f: f(7)?,
            mean_f: f(8)?,
            wall_seconds: if record[9].is_empty() { None } else { Some(f(9)?) },
        });
    }
    Ok(out)
}

/// One row of an ablation table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sweep: String,
    pub task: String,
    pub seed: u64,
    pub gamma: f64,
    pub steps: usize,
    pub q: usize,
    pub reweight: bool,
    pub k: Option<f64>,
    pub tau: Option<f64>,
    pub n_bins: Option<usize>,
    pub conditioning_y: f64,
    /// Sampler step for per-step statistics; `None` for final samples.
    pub step: Option<usize>,
    pub max_f: f64,
    pub mean_f: f64,
}

pub const SWEEP_HEADER: [&str; 14] = [
    "sweep",
    "task",
    "seed",
    "gamma",
    "steps",
    "q",
    "reweight",
    "k",
    "tau",
    "n_bins",
    "conditioning_y",
    "step",
    "max_f",
    "mean_f",
];

pub fn write_sweep(path: impl AsRef<Path>, rows: &[SweepRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.sweep.clone(),
            r.task.clone(),
            r.seed.to_string(),
            fmt_f64(r.gamma),
            r.steps.to_string(),
            r.q.to_string(),
            r.reweight.to_string(),
            fmt_opt(r.k),
            fmt_opt(r.tau),
            r.n_bins.map(|n| n.to_string()).unwrap_or_default(),
            fmt_f64(r.conditioning_y),
            r.step.map(|s| s.to_string()).unwrap_or_default(),
            fmt_f64(r.max_f),
            fmt_f64(r.mean_f),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
