//! Per-epoch training metrics and their CSV log.

use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::Path;

pub const METRICS_HEADER: &str = "epoch,reconstruction_error,mean_pooled_activation,wall_seconds";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub reconstruction_error: f64,
    pub mean_pooled_activation: f64,
    pub wall_seconds: f64,
}

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.3}",
            self.epoch, self.reconstruction_error, self.mean_pooled_activation, self.wall_seconds
        )
    }
}

/// Appends rows to a metrics CSV, writing the header only when the file is
/// new or empty.
pub fn append_metrics(path: &Path, rows: &[EpochMetrics]) -> io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if f.metadata()?.len() == 0 {
        writeln!(f, "{METRICS_HEADER}")?;
    }
    for r in rows {
        writeln!(f, "{}", r.csv_row())?;
    }
    Ok(())
}
