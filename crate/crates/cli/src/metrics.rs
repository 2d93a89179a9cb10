//! Metrics CSV: `run_id,epoch,phase,metric,value,gate_mode,seed,wall_ms`.
//!
//! Every column except `wall_ms` is a deterministic function of the run's
//! configuration and seed.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};
use synres::train::EpochReport;
use synres::GateMode;

use crate::error::{CliError, CliResult};

pub const COLUMNS: [&str; 8] = [
    "run_id",
    "epoch",
    "phase",
    "metric",
    "value",
    "gate_mode",
    "seed",
    "wall_ms",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub epoch: usize,
    pub phase: String,
    pub metric: String,
    pub value: f64,
    pub gate_mode: GateMode,
    pub seed: u64,
    pub wall_ms: f64,
}

/// The rows describing one epoch of training.
pub fn epoch_rows(run_id: &str, mode: GateMode, seed: u64, r: &EpochReport) -> Vec<MetricsRow> {
    let row = |phase: &str, metric: &str, value: f64| MetricsRow {
        run_id: run_id.to_string(),
        epoch: r.epoch,
        phase: phase.to_string(),
        metric: metric.to_string(),
        value,
        gate_mode: mode,
        seed,
        wall_ms: r.wall_ms,
    };
    vec![
        row("train", "loss", r.train_loss),
        row("train", "ce", r.train_ce),
        row("train", "reg", r.train_reg),
        row("train", "lr", r.lr),
        row("val", "perplexity", r.val_ppl),
        row("val", "lr_decayed", r.decay_triggered as u8 as f64),
    ]
}

pub struct MetricsWriter {
    inner: csv::Writer<File>,
    path: String,
}

impl MetricsWriter {
    /// Starts a fresh file with the header line.
    pub fn create(path: &Path) -> CliResult<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut inner = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(file);
        inner
            .write_record(COLUMNS)
            .map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            inner,
            path: path.display().to_string(),
        })
    }

    pub fn append(&mut self, rows: &[MetricsRow]) -> CliResult<()> {
        for r in rows {
            self.inner
                .serialize(r)
                .map_err(|e| CliError::Io(format!("{}: {e}", self.path)))?;
        }
        self.inner
            .flush()
            .map_err(|e| CliError::Io(format!("{}: {e}", self.path)))
    }
}

pub fn read(path: &Path) -> CliResult<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::io(path, e))
}
