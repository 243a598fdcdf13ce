use std::path::Path;

use serde::Serialize;

use super::metrics::MetricsReport;
use super::train::EpochLog;
use super::{PipelineError, Result};

/// One line of a metrics CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub config: String,
    pub r_comm: Option<f64>,
    pub composition: String,
    pub dist_avg: f64,
    pub dist_50: f64,
    pub dist_90: f64,
    pub n: usize,
}

impl MetricsRow {
    pub fn new(config: impl Into<String>, r_comm: Option<f64>, composition: impl Into<String>, m: &MetricsReport) -> Self {
        Self {
            config: config.into(),
            r_comm,
            composition: composition.into(),
            dist_avg: m.dist_avg,
            dist_50: m.dist_50,
            dist_90: m.dist_90,
            n: m.n,
        }
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => PipelineError::Io { path: path.to_path_buf(), source },
        other => PipelineError::Format { path: path.to_path_buf(), message: format!("{other:?}") },
    })
}

/// Columns: config, r_comm, composition, dist_avg, dist_50, dist_90, n.
pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = writer(path)?;
    if rows.is_empty() {
        w.write_record(["config", "r_comm", "composition", "dist_avg", "dist_50", "dist_90", "n"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })
}

/// Columns: epoch, train_loss, val_dist50.
pub fn write_loss_csv(path: &Path, curve: &[EpochLog]) -> Result<()> {
    let mut w = writer(path)?;
    if curve.is_empty() {
        w.write_record(["epoch", "train_loss", "val_dist50"])?;
    }
    for e in curve {
        w.serialize(e)?;
    }
    w.flush().map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })
}
