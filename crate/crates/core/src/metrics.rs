//! Presentation attack detection metrics and the final living score.
//!
//! A sample is accepted as living when `score >= threshold`.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::depthlabel::FaceMask;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// PAI name used for attack records that carry no `attack_kind`.
pub const DEFAULT_PAI: &str = "attack";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Living,
    Attack,
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "living" | "live" | "bona_fide" | "real" | "1" => Ok(Label::Living),
            "attack" | "spoof" | "0" => Ok(Label::Attack),
            other => Err(Error::parse(None, format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub score: f64,
    pub label: Label,
    #[serde(default)]
    pub attack_kind: Option<String>,
}

impl EvalRecord {
    pub fn living(score: f64) -> Self {
        EvalRecord {
            score,
            label: Label::Living,
            attack_kind: None,
        }
    }

    pub fn attack(score: f64, kind: &str) -> Self {
        EvalRecord {
            score,
            label: Label::Attack,
            attack_kind: Some(kind.to_string()),
        }
    }

    fn pai(&self) -> &str {
        self.attack_kind
            .as_deref()
            .filter(|k| !k.is_empty())
            .unwrap_or(DEFAULT_PAI)
    }
}

/// `beta · b̂ + (1 − beta) · mean_t(Σ fused_t·mask_t / |mask_t|)`.
///
/// Each frame's masked depth sum is divided by its mask size, so the depth
/// term is a mean depth over the face and shares `[0, 1]` with `b̂`.
pub fn living_score(b_hat: f64, fused: &[Grid], masks: &[FaceMask], beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::domain(format!("beta must lie in [0, 1], got {beta}")));
    }
    if fused.is_empty() || fused.len() != masks.len() {
        return Err(Error::shape(
            format!("{} masks (at least one)", fused.len()),
            masks.len(),
        ));
    }
    let mut depth = 0.0;
    for (t, (d, m)) in fused.iter().zip(masks).enumerate() {
        d.check_same_shape(m.values())?;
        let count = m.count();
        if count == 0 {
            return Err(Error::domain(format!("face mask of frame {t} is empty")));
        }
        let l1: f64 = d
            .as_slice()
            .iter()
            .zip(m.values().as_slice())
            .map(|(v, w)| (v * w).abs())
            .sum();
        depth += l1 / count as f64;
    }
    Ok(beta * b_hat + (1.0 - beta) * depth / fused.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PadRates {
    pub apcer: f64,
    pub bpcer: f64,
    pub acer: f64,
    /// Acceptance rate of each attack instrument.
    pub per_pai: BTreeMap<String, f64>,
}

fn check_classes(records: &[EvalRecord]) -> Result<()> {
    let living = records.iter().any(|r| r.label == Label::Living);
    let attack = records.iter().any(|r| r.label == Label::Attack);
    if !(living && attack) {
        return Err(Error::domain(
            "metrics need at least one living and one attack record",
        ));
    }
    if let Some(r) = records.iter().find(|r| !r.score.is_finite()) {
        return Err(Error::domain(format!("non-finite score {}", r.score)));
    }
    Ok(())
}

fn bona_fide_rejection(records: &[EvalRecord], threshold: f64) -> f64 {
    let (mut n, mut rejected) = (0usize, 0usize);
    for r in records.iter().filter(|r| r.label == Label::Living) {
        n += 1;
        rejected += usize::from(r.score < threshold);
    }
    rejected as f64 / n as f64
}

/// APCER is the worst per-PAI acceptance rate, BPCER the living rejection rate.
pub fn apcer_bpcer_acer(records: &[EvalRecord], threshold: f64) -> Result<PadRates> {
    check_classes(records)?;
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.label == Label::Attack) {
        let e = counts.entry(r.pai()).or_default();
        e.0 += 1;
        e.1 += usize::from(r.score >= threshold);
    }
    let per_pai: BTreeMap<String, f64> = counts
        .into_iter()
        .map(|(k, (n, accepted))| (k.to_string(), accepted as f64 / n as f64))
        .collect();
    let apcer = per_pai.values().copied().fold(0.0, f64::max);
    let bpcer = bona_fide_rejection(records, threshold);
    Ok(PadRates {
        apcer,
        bpcer,
        acer: (apcer + bpcer) / 2.0,
        per_pai,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfTotalError {
    pub far: f64,
    pub frr: f64,
    pub hter: f64,
}

/// HTER with the acceptance rate pooled over all attacks.
pub fn hter(records: &[EvalRecord], threshold: f64) -> Result<HalfTotalError> {
    check_classes(records)?;
    let attacks: Vec<&EvalRecord> = records.iter().filter(|r| r.label == Label::Attack).collect();
    let accepted = attacks.iter().filter(|r| r.score >= threshold).count();
    let far = accepted as f64 / attacks.len() as f64;
    let frr = bona_fide_rejection(records, threshold);
    Ok(HalfTotalError {
        far,
        frr,
        hter: (far + frr) / 2.0,
    })
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    score: String,
    label: String,
    #[serde(default)]
    attack_kind: Option<String>,
}

/// Reads `score,label,attack_kind` rows (header required).
pub fn read_records(reader: impl Read) -> Result<Vec<EvalRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    for needed in ["score", "label"] {
        if !headers.iter().any(|h| h == needed) {
            return Err(Error::parse(
                Some("header".into()),
                format!("missing column {needed:?}"),
            ));
        }
    }
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let line = Some(format!("line {}", i + 2));
        let row = row.map_err(|e| Error::parse(line.clone(), e.to_string()))?;
        let score: f64 = row
            .score
            .parse()
            .map_err(|e| Error::parse(line.clone(), format!("score {:?}: {e}", row.score)))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::parse(line, format!("score {score} outside [0, 1]")));
        }
        let label = row
            .label
            .parse()
            .map_err(|e: Error| Error::parse(line.clone(), e.to_string()))?;
        out.push(EvalRecord {
            score,
            label,
            attack_kind: row.attack_kind.filter(|k| !k.is_empty()),
        });
    }
    if out.is_empty() {
        return Err(Error::parse(None, "no records"));
    }
    Ok(out)
}

pub fn write_records(records: &[EvalRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["score", "label", "attack_kind"])?;
    for r in records {
        let label = match r.label {
            Label::Living => "living",
            Label::Attack => "attack",
        };
        w.write_record([r.score.to_string().as_str(), label, r.attack_kind.as_deref().unwrap_or("")])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}
