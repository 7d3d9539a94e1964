//! On-disk outputs: CSV tables, JSON-lines trial logs and run manifests.
//!
//! CSV files are comma separated with a header row; floats use Rust's shortest
//! round-trip formatting and missing values are empty cells.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{moving_average, ExperimentRecord, Metrics, StudyReport, StudyRow};
use crate::model::Variant;
use crate::task::{Scenario, N_OPTIONS};

/// Window of the training-curve moving average.
pub const CURVE_WINDOW: usize = 50;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::parse(path, e)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::parse(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::parse(path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Columns: trial, success, moving_avg_50, scenario.
pub fn write_training_curve(path: &Path, history: &[ExperimentRecord]) -> Result<()> {
    let success: Vec<f64> = history.iter().map(|r| if r.correct { 1.0 } else { 0.0 }).collect();
    let scenarios: Vec<Scenario> = history.iter().map(|r| r.scenario).collect();
    write_curve(path, &success, Some(&scenarios))
}

/// Training curve from a bare success sequence; the scenario column is left empty
/// when unknown.
pub fn write_curve(path: &Path, success: &[f64], scenarios: Option<&[Scenario]>) -> Result<()> {
    let ma = moving_average(success, CURVE_WINDOW);
    let mut w = csv_writer(path)?;
    let e = csv_err(path);
    w.write_record(["trial", "success", "moving_avg_50", "scenario"]).map_err(&e)?;
    for (i, (s, m)) in success.iter().zip(&ma).enumerate() {
        let scen = scenarios.map(|sc| sc[i].as_str()).unwrap_or("");
        w.write_record([i.to_string(), s.to_string(), m.to_string(), scen.to_string()]).map_err(&e)?;
    }
    w.flush().map_err(|err| Error::io(path, err))
}

const METRIC_COLUMNS: [&str; 7] = ["variant", "seed", "overall", "best_first", "best_last", "simultaneous", "n_trials"];

/// Columns: variant, seed, overall, best_first, best_last, simultaneous, n_trials.
pub fn write_study_metrics(path: &Path, rows: &[StudyRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let e = csv_err(path);
    w.write_record(METRIC_COLUMNS).map_err(&e)?;
    for r in rows {
        let m = &r.metrics;
        w.write_record([
            r.variant.to_string(),
            r.seed.to_string(),
            m.overall.to_string(),
            opt(m.best_first),
            opt(m.best_last),
            opt(m.simultaneous),
            m.n_trials.to_string(),
        ])
        .map_err(&e)?;
    }
    w.flush().map_err(|err| Error::io(path, err))
}

/// Reads a metrics table back. Per-scenario counts are not stored and come back as 0.
pub fn read_study_metrics(path: &Path) -> Result<Vec<StudyRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(String::from).collect();
    if header != METRIC_COLUMNS {
        return Err(Error::parse(path, format!("unexpected columns {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let bad = |what: &str| Error::parse(path, format!("row {}: bad {what}", i + 1));
        let num = |j: usize| -> Result<Option<f64>> {
            match &rec[j] {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad(METRIC_COLUMNS[j])),
            }
        };
        let variant: Variant = rec[0].parse().map_err(|_| bad("variant"))?;
        let seed: u64 = rec[1].parse().map_err(|_| bad("seed"))?;
        let overall = num(2)?.ok_or_else(|| bad("overall"))?;
        let n_trials: usize = rec[6].parse().map_err(|_| bad("n_trials"))?;
        rows.push(StudyRow {
            variant,
            seed,
            metrics: Metrics {
                overall,
                best_first: num(3)?,
                best_last: num(4)?,
                simultaneous: num(5)?,
                n_trials,
                n_best_first: 0,
                n_best_last: 0,
                n_simultaneous: 0,
            },
            train_correct: Vec::new(),
        });
    }
    Ok(rows)
}

/// Columns: variant, t, p. Degenerate comparisons leave t and p empty.
pub fn write_t_tests(path: &Path, report: &StudyReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    let e = csv_err(path);
    w.write_record(["variant", "t", "p"]).map_err(&e)?;
    for (v, t) in &report.t_tests {
        w.write_record([v.to_string(), opt(t.map(|t| t.t)), opt(t.map(|t| t.p))]).map_err(&e)?;
    }
    w.flush().map_err(|err| Error::io(path, err))
}

/// Columns: variant, overall, best_first, best_last (means over seeds).
pub fn write_study_means(path: &Path, report: &StudyReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    let e = csv_err(path);
    w.write_record(["variant", "overall", "best_first", "best_last"]).map_err(&e)?;
    let cell = |x: f64| if x.is_nan() { String::new() } else { x.to_string() };
    for m in &report.means {
        w.write_record([m.variant.to_string(), cell(m.overall), cell(m.best_first), cell(m.best_last)]).map_err(&e)?;
    }
    w.flush().map_err(|err| Error::io(path, err))
}

/// Columns: t, out_1 .. out_4.
pub fn write_trace(path: &Path, outputs: &[[f64; N_OPTIONS]]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let e = csv_err(path);
    let mut header = vec!["t".to_string()];
    header.extend((1..=N_OPTIONS).map(|i| format!("out_{i}")));
    w.write_record(&header).map_err(&e)?;
    for (t, y) in outputs.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(y.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(&e)?;
    }
    w.flush().map_err(|err| Error::io(path, err))
}

/// What is needed to replay a run exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub versions: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: impl Into<String>, config_sha256: impl Into<String>, seeds: Vec<u64>) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert(env!("CARGO_PKG_NAME").to_string(), env!("CARGO_PKG_VERSION").to_string());
        Manifest { command: command.into(), config_sha256: config_sha256.into(), seeds, versions }
    }

    pub fn with_version(mut self, component: &str, version: &str) -> Self {
        self.versions.insert(component.to_string(), version.to_string());
        self
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("manifest.json"), self)
    }
}
