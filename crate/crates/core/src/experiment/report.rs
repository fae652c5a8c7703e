//! CSV and plot-data output for training runs.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::train::{Mode, RunRecord};
use super::ExperimentError;

type Result<T> = std::result::Result<T, ExperimentError>;

/// A named sequence of records, e.g. `logistic-framework`.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedRun {
    pub name: String,
    pub records: Vec<RunRecord>,
}

impl NamedRun {
    pub fn new(name: impl Into<String>, records: Vec<RunRecord>) -> Self {
        NamedRun {
            name: name.into(),
            records,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MergedRow {
    run: String,
    batch: usize,
    elapsed_s: f64,
    val_accuracy: f64,
    loss: f64,
    mode: Mode,
}

pub const MERGED_CSV: &str = "comparison.csv";
pub const CURVES_JSON: &str = "curves.vl.json";

/// Files written by [`emit_report`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub per_run: Vec<PathBuf>,
    pub merged: PathBuf,
    pub curves: PathBuf,
}

const HEADER: [&str; 5] = ["batch", "elapsed_s", "val_accuracy", "loss", "mode"];

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(File::create(path)?);
    w.write_record(HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Writes `<name>.csv` per run, a merged CSV with a leading `run` column and
/// a vega-lite spec plotting validation accuracy against batch.
pub fn emit_report(dir: &Path, runs: &[NamedRun]) -> Result<ReportFiles> {
    std::fs::create_dir_all(dir)?;
    let mut per_run = Vec::new();
    for run in runs {
        let path = dir.join(format!("{}.csv", run.name));
        write_records(&path, &run.records)?;
        per_run.push(path);
    }

    let merged = dir.join(MERGED_CSV);
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(File::create(&merged)?);
    w.write_record(std::iter::once("run").chain(HEADER))?;
    let mut values = Vec::new();
    for run in runs {
        for r in &run.records {
            let row = MergedRow {
                run: run.name.clone(),
                batch: r.batch,
                elapsed_s: r.elapsed_s,
                val_accuracy: r.val_accuracy,
                loss: r.loss,
                mode: r.mode,
            };
            values.push(serde_json::to_value(&row)?);
            w.serialize(row)?;
        }
    }
    w.flush()?;

    let curves = dir.join(CURVES_JSON);
    let spec = json!({
        "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
        "description": "validation accuracy per batch",
        "data": { "values": values },
        "mark": { "type": "line", "point": true },
        "encoding": {
            "x": { "field": "batch", "type": "quantitative", "title": "batch" },
            "y": { "field": "val_accuracy", "type": "quantitative", "title": "validation accuracy" },
            "color": { "field": "run", "type": "nominal" }
        }
    });
    std::fs::write(&curves, serde_json::to_string_pretty(&spec)?)?;
    Ok(ReportFiles { per_run, merged, curves })
}

/// Ratio of total elapsed time between two runs of the same length.
pub fn slowdown(framework: &[RunRecord], local: &[RunRecord]) -> Option<f64> {
    let (f, l) = (framework.last()?, local.last()?);
    (f.batch == l.batch && l.elapsed_s > 0.0).then(|| f.elapsed_s / l.elapsed_s)
}

/// Largest accuracy difference at matching checkpoints.
pub fn max_accuracy_gap(a: &[RunRecord], b: &[RunRecord]) -> Option<f64> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.batch != y.batch) {
        return None;
    }
    Some(a.iter().zip(b).map(|(x, y)| (x.val_accuracy - y.val_accuracy).abs()).fold(0.0, f64::max))
}
