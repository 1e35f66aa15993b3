//! CSV and JSON report output.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::EvaluationReport;
use crate::metrics::RoiReport;

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

#[derive(Serialize)]
struct RoiRow<'a> {
    case: &'a str,
    id: u32,
    name: &'a str,
    volume_mm3: f64,
    dice: Option<f64>,
}

fn roi_rows<'a>(case: &'a str, report: &'a RoiReport) -> impl Iterator<Item = RoiRow<'a>> + 'a {
    report.rois.iter().enumerate().map(move |(i, r)| RoiRow {
        case,
        id: r.id,
        name: &r.name,
        volume_mm3: r.volume_mm3,
        dice: report.dice.as_ref().map(|d| d[i]),
    })
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| Error::invalid(format!("csv flush failed: {e}")))
}

/// One row per label: `case,id,name,volume_mm3,dice`.
pub fn roi_report_csv(case: &str, report: &RoiReport) -> Result<Vec<u8>> {
    csv_bytes(roi_rows(case, report))
}

#[derive(Serialize)]
struct CaseRow<'a> {
    case: &'a str,
    id: u32,
    name: &'a str,
    volume_mm3: f64,
    reference_volume_mm3: f64,
    dice: Option<f64>,
}

#[derive(Serialize)]
struct CorrelationCsvRow<'a> {
    roi: &'a str,
    ids: String,
    pearson: Option<f64>,
    spearman: Option<f64>,
}

/// Per-case, per-label rows with predicted and reference volumes and Dice.
pub fn evaluation_cases_csv(report: &EvaluationReport) -> Result<Vec<u8>> {
    let rows = report.cases.iter().flat_map(|c| {
        roi_rows(&c.case, &c.prediction).map(move |r| CaseRow {
            case: r.case,
            id: r.id,
            name: r.name,
            volume_mm3: r.volume_mm3,
            reference_volume_mm3: c.reference.volume_of(r.id).unwrap_or(0.0),
            dice: r.dice,
        })
    });
    csv_bytes(rows)
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    id: u32,
    name: &'a str,
    mean_dice: f64,
}

/// Mean Dice over cases, one row per label.
pub fn evaluation_summary_csv(report: &EvaluationReport) -> Result<Vec<u8>> {
    csv_bytes(report.summary.mean_dice.iter().map(|m| SummaryRow {
        id: m.id,
        name: &m.name,
        mean_dice: m.dice,
    }))
}

/// Cross-case volume correlations, one row per ROI.
pub fn evaluation_correlations_csv(report: &EvaluationReport) -> Result<Vec<u8>> {
    csv_bytes(report.summary.correlations.iter().map(|c| CorrelationCsvRow {
        roi: &c.roi,
        ids: c.ids.iter().map(u32::to_string).collect::<Vec<_>>().join(" "),
        pearson: c.pearson,
        spearman: c.spearman,
    }))
}
