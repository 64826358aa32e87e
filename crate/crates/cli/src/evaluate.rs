//! `metrics`: APCER/BPCER/ACER and HTER for a CSV of scored samples.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use tempdepth::metrics::{apcer_bpcer_acer, hter, read_records, EvalRecord, Label};

use crate::CliError;

pub const JSON_NAME: &str = "metrics.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub threshold: f64,
    pub living: usize,
    pub attacks: usize,
    pub apcer: f64,
    pub bpcer: f64,
    pub acer: f64,
    pub far: f64,
    pub frr: f64,
    pub hter: f64,
    /// Acceptance rate of each attack instrument.
    pub per_pai: BTreeMap<String, f64>,
}

pub fn evaluate(records: &[EvalRecord], threshold: f64) -> Result<MetricsReport, CliError> {
    let rates = apcer_bpcer_acer(records, threshold)?;
    let half = hter(records, threshold)?;
    let living = records.iter().filter(|r| r.label == Label::Living).count();
    Ok(MetricsReport {
        threshold,
        living,
        attacks: records.len() - living,
        apcer: rates.apcer,
        bpcer: rates.bpcer,
        acer: rates.acer,
        far: half.far,
        frr: half.frr,
        hter: half.hter,
        per_pai: rates.per_pai,
    })
}

pub fn cmd_metrics(path: &Path, threshold: f64) -> Result<MetricsReport, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let records = read_records(file).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    evaluate(&records, threshold)
}
