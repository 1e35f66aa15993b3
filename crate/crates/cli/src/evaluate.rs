//! `evaluate`: Dice and volume correlations over cases paired by file stem.

use std::path::PathBuf;

use brainsynth::inference::{evaluate_dataset, evaluate_segmentations, EvalCase, EvaluationReport};
use brainsynth::nifti;
use brainsynth::report::{
    atomic_write, evaluation_cases_csv, evaluation_correlations_csv, evaluation_summary_csv,
    write_json,
};
use brainsynth::{IntensityVolume, LabelVolume, Result};
use rayon::prelude::*;

use crate::files::{by_case_key, nifti_files};
use crate::segment::{build_predictor, options};
use crate::{Outcome, RunConfig};

/// The first input of a case: a segmentation, or a scan to segment.
enum First {
    Segmentation(LabelVolume),
    Scan(IntensityVolume),
}

fn write_reports(report: &EvaluationReport, cfg: &RunConfig) -> Result<()> {
    let out = &cfg.output;
    atomic_write(&out.join("dice.csv"), &evaluation_cases_csv(report)?)?;
    atomic_write(&out.join("dice_summary.csv"), &evaluation_summary_csv(report)?)?;
    atomic_write(&out.join("correlations.csv"), &evaluation_correlations_csv(report)?)?;
    write_json(report, &out.join("report.json"))
}

/// Matched `(case, first input, reference)` paths plus the unmatched count.
fn match_cases(cfg: &RunConfig) -> Result<(Vec<(String, PathBuf, PathBuf)>, usize)> {
    let first = by_case_key(&nifti_files(&cfg.inputs[..1])?)?;
    let refs = by_case_key(&nifti_files(&cfg.inputs[1..])?)?;
    let mut matched = Vec::new();
    let mut unmatched = 0;
    for (key, path) in &first {
        match refs.get(key) {
            Some(r) => matched.push((key.clone(), path.clone(), r.clone())),
            None => {
                log::warn!("no reference for {}", path.display());
                unmatched += 1;
            }
        }
    }
    for (key, path) in &refs {
        if !first.contains_key(key) {
            log::warn!("no prediction for reference {}", path.display());
            unmatched += 1;
        }
    }
    Ok((matched, unmatched))
}

pub fn run(cfg: &RunConfig) -> Outcome {
    let (matched, unmatched) = match match_cases(cfg) {
        Ok(m) => m,
        Err(e) => {
            log::error!("{e}");
            return Outcome::Failure;
        }
    };
    if matched.is_empty() {
        log::error!("no case stems match between {:?}", cfg.inputs);
        return Outcome::Failure;
    }
    let predictor = match cfg.predictor.as_deref().map(|s| build_predictor(s, &cfg.schema)) {
        Some(Err(e)) => {
            log::error!("{e}");
            return Outcome::Failure;
        }
        Some(Ok(p)) => Some(p),
        None => None,
    };

    // Unreadable cases are reported and left out of the cohort.
    let loaded: Vec<_> = matched
        .par_iter()
        .map(|(key, first, reference)| {
            let reference = nifti::read_labels(reference)?;
            let first = match predictor {
                Some(_) => First::Scan(nifti::read_intensity(first)?),
                None => First::Segmentation(nifti::read_labels(first)?),
            };
            Ok((key.clone(), first, reference))
        })
        .collect::<Vec<Result<_>>>();
    let mut failed = unmatched;
    let mut segs: Vec<(String, LabelVolume, LabelVolume)> = Vec::new();
    let mut scans: Vec<EvalCase> = Vec::new();
    for ((key, ..), r) in matched.iter().zip(loaded) {
        match r {
            Ok((name, First::Segmentation(pred), reference)) => segs.push((name, pred, reference)),
            Ok((name, First::Scan(input), reference)) => scans.push(EvalCase {
                name,
                input,
                reference,
            }),
            Err(e) => {
                log::error!("case '{key}': {e}");
                failed += 1;
            }
        }
    }
    let cases = segs.len() + scans.len();
    if cases == 0 {
        return Outcome::Failure;
    }
    let report = match &predictor {
        Some(p) => evaluate_dataset(&scans, p.as_ref(), &cfg.schema, &options(cfg)),
        None => evaluate_segmentations(&segs, &cfg.schema),
    };
    let report = match report.and_then(|r| write_reports(&r, cfg).map(|_| r)) {
        Ok(r) => r,
        Err(e) => {
            log::error!("{e}");
            return Outcome::Failure;
        }
    };
    let s = &report.summary;
    log::info!(
        "{} cases: mean anatomy Dice {:.4}, mean WMH Dice {:.4}, mean WMH volume {:.1} mm³",
        s.cases,
        s.mean_anatomy_dice,
        s.mean_wmh_dice,
        s.mean_wmh_volume_mm3
    );
    Outcome::from_counts(cases, failed)
}
