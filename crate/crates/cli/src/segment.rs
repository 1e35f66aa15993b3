//! `segment`: per-scan segmentation with ROI volume reports.

use std::path::Path;

use brainsynth::inference::{
    segment, ExternalPredictor, Predictor, SegmentOptions, TissueCodeStub, UniformStub,
};
use brainsynth::nifti::{self, DataType};
use brainsynth::report::{atomic_write, roi_report_csv, write_json};
use brainsynth::{Error, LabelSchema, Result};
use rayon::prelude::*;

use crate::files::{nifti_files, nifti_stem};
use crate::{Outcome, RunConfig};

/// `stub` and `uniform` are the in-process test predictors; anything else
/// is run as an external command.
pub fn build_predictor(spec: &str, schema: &LabelSchema) -> Result<Box<dyn Predictor>> {
    Ok(match spec {
        "stub" => Box::new(TissueCodeStub::new(schema.clone())),
        "uniform" => Box::new(UniformStub::new(schema)),
        command => Box::new(ExternalPredictor::new(command, schema)?),
    })
}

pub fn options(cfg: &RunConfig) -> SegmentOptions {
    SegmentOptions {
        tta: cfg.tta,
        tiling: Some(cfg.tiling),
    }
}

fn segment_one(path: &Path, predictor: &dyn Predictor, cfg: &RunConfig) -> Result<()> {
    let stem = nifti_stem(path)
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a NIfTI file", path.display())))?;
    let scan = nifti::read_intensity(path)?;
    let r = segment(&scan, predictor, &cfg.schema, &options(cfg))?;
    let out = &cfg.output;
    nifti::write_labels(&r.segmentation, out.join(format!("{stem}_seg.nii.gz")), DataType::I32)?;
    atomic_write(&out.join(format!("{stem}_rois.csv")), &roi_report_csv(&stem, &r.report)?)?;
    write_json(&r.report, &out.join(format!("{stem}_rois.json")))?;
    log::info!(
        "{stem}: WMH {:.1} mm³",
        r.report.wmh_volume_mm3
    );
    Ok(())
}

pub fn run(cfg: &RunConfig) -> Outcome {
    let files = match nifti_files(&cfg.inputs) {
        Ok(f) if !f.is_empty() => f,
        Ok(_) => {
            log::error!("no NIfTI scans in {:?}", cfg.inputs);
            return Outcome::Failure;
        }
        Err(e) => {
            log::error!("{e}");
            return Outcome::Failure;
        }
    };
    let spec = cfg.predictor.as_deref().expect("checked when resolving the config");
    let predictor = match build_predictor(spec, &cfg.schema) {
        Ok(p) => p,
        Err(e) => {
            log::error!("{e}");
            return Outcome::Failure;
        }
    };
    log::info!("segmenting {} scans, TTA {}", files.len(), if cfg.tta { "on" } else { "off" });
    let results: Vec<Result<()>> = files
        .par_iter()
        .map(|f| segment_one(f, predictor.as_ref(), cfg))
        .collect();
    let mut ok = 0;
    let mut failed = 0;
    let mut contract = false;
    for (f, r) in files.iter().zip(results) {
        match r {
            Ok(()) => ok += 1,
            Err(e) => {
                contract |= matches!(e, Error::Contract(_));
                log::error!("{}: {e}", f.display());
                failed += 1;
            }
        }
    }
    if contract {
        log::error!("aborting: the predictor broke its contract");
        return Outcome::Failure;
    }
    Outcome::from_counts(ok, failed)
}
