//! Evaluation records and their JSON Lines serialization.
//!
//! Wallclock timing is deliberately kept out of the records: two runs with
//! the same config and seed must produce byte-identical metrics logs, so
//! timing is reported at the run level (manifest) instead.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact largest singular value of one critic weight, as used in the
/// forward pass (normalized when spectral normalization is on).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaReading {
    pub layer: String,
    pub sigma: f64,
}

/// One evaluation snapshot. Field order is the serialization order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Completed generator iterations.
    pub iteration: usize,
    /// Critic objective at the most recent critic step (adversarial +
    /// weighted conditioning + regularization).
    pub loss_d: f64,
    /// Generator objective at the most recent generator step.
    pub loss_g: f64,
    /// Conditioning term on real samples (0 when the mode has none).
    pub loss_cond_real: f64,
    /// Conditioning term on generated samples (0 when the mode has none).
    pub loss_cond_fake: f64,
    /// Squared-distance between Gaussian fits of all real training points
    /// and all generated points.
    pub frechet_pooled: f64,
    /// Mean of the per-class distances; the headline metric.
    pub frechet_class_mean: f64,
    /// Per-class distances, indexed by class id.
    pub frechet_per_class: Vec<f64>,
    /// Fraction of training reals the critic scores positive.
    pub acc_train: f64,
    /// Fraction of held-out reals the critic scores positive.
    pub acc_val: f64,
    /// Fraction of generated points the critic scores zero or below.
    pub acc_fake: f64,
    /// acc_train - acc_val; the overfitting monitor.
    pub acc_gap: f64,
    /// Per-layer spectral readings of the critic.
    pub sigmas: Vec<SigmaReading>,
    /// Largest of the spectral readings.
    pub sigma_max: f64,
    /// True once acc_gap exceeds the collapse threshold.
    pub collapse_flag: bool,
    /// True when some layer's reading grew by more than the jump ratio
    /// since the previous record.
    pub sigma_jump_flag: bool,
}

impl EvalRecord {
    pub fn to_json_line(&self) -> Result<String> {
        serde_json::to_string(self)
            .map_err(|e| Error::Config(format!("serialize metrics record: {e}")))
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str(line)
            .map_err(|e| Error::Config(format!("parse metrics record: {e}")))
    }
}

/// Scan a completed history for the first overfitting gap and the first
/// per-layer spectral jump.
pub fn stability_scan(records: &[EvalRecord]) -> crate::evaluation::CollapseReport {
    let gaps: Vec<f64> = records.iter().map(|r| r.acc_gap).collect();
    let sigmas: Vec<Vec<f64>> = records
        .iter()
        .map(|r| r.sigmas.iter().map(|s| s.sigma).collect())
        .collect();
    crate::evaluation::collapse_detector(&gaps, &sigmas)
}

/// Receives evaluation records as they are produced, so partial histories
/// survive an aborted run.
pub trait MetricsSink {
    fn record(&mut self, rec: &EvalRecord) -> Result<()>;
}

/// Appends one JSON object per record, flushing after each line.
pub struct JsonlSink<W: Write> {
    writer: W,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(writer: W) -> Self {
        Self { writer }
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}

impl<W: Write> MetricsSink for JsonlSink<W> {
    fn record(&mut self, rec: &EvalRecord) -> Result<()> {
        let line = rec.to_json_line()?;
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }
}

/// Collects records in memory; handy for tests and sweeps.
#[derive(Default)]
pub struct MemorySink {
    pub records: Vec<EvalRecord>,
}

impl MetricsSink for MemorySink {
    fn record(&mut self, rec: &EvalRecord) -> Result<()> {
        self.records.push(rec.clone());
        Ok(())
    }
}
