//! `generate`: synthetic samples from `<stem>_image` / `<stem>_labels`
//! training pairs.

use std::collections::BTreeMap;
use std::path::PathBuf;

use brainsynth::nifti::{self, DataType};
use brainsynth::report::{atomic_write, write_json};
use brainsynth::synth::{generate_indexed, Regime, TrainingPair};
use brainsynth::{Error, Result};
use rayon::prelude::*;

use crate::files::{nifti_files, nifti_stem};
use crate::{Outcome, RunConfig};

pub const MANIFEST: &str = "manifest.jsonl";
pub const CONFIG_RECORD: &str = "generator_config.json";
const KINDS: [&str; 4] = ["synth", "labels", "image", "bias"];

#[derive(Default)]
struct Candidate {
    image: Option<PathBuf>,
    labels: Option<PathBuf>,
}

fn find_pairs(inputs: &[PathBuf]) -> Result<BTreeMap<String, Candidate>> {
    let mut pairs: BTreeMap<String, Candidate> = BTreeMap::new();
    for f in nifti_files(inputs)? {
        let Some(stem) = nifti_stem(&f) else {
            log::warn!("skipping {}: not a NIfTI file", f.display());
            continue;
        };
        if let Some(key) = stem.strip_suffix("_labels") {
            pairs.entry(key.to_string()).or_default().labels = Some(f);
        } else if let Some(key) = stem.strip_suffix("_image") {
            pairs.entry(key.to_string()).or_default().image = Some(f);
        } else {
            log::warn!("skipping {}: name ends in neither _image nor _labels", f.display());
        }
    }
    Ok(pairs)
}

fn load_pair(c: &Candidate, cfg: &RunConfig) -> Result<TrainingPair> {
    let (Some(img), Some(lab)) = (&c.image, &c.labels) else {
        let have = c.image.as_ref().or(c.labels.as_ref()).expect("candidate has one file");
        return Err(Error::InvalidArgument(format!("{} has no partner file", have.display())));
    };
    let image = nifti::read_intensity(img)?;
    let labels = nifti::read_labels(lab)?;
    TrainingPair::new(image, labels, &cfg.schema)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", lab.display())))
}

fn file_name(index: u64, kind: &str) -> String {
    format!("sample_{index:04}_{kind}.nii.gz")
}

fn write_sample(
    cfg: &RunConfig,
    pairs: &[TrainingPair],
    stems: &[String],
    index: u64,
) -> Result<(Regime, serde_json::Value)> {
    let (which, sample) = generate_indexed(pairs, &cfg.schema, &cfg.generator, index)?;
    let out = &cfg.output;
    nifti::write_intensity(&sample.synth, out.join(file_name(index, "synth")), DataType::F32)?;
    nifti::write_labels(&sample.labels, out.join(file_name(index, "labels")), DataType::I32)?;
    nifti::write_intensity(&sample.target_image, out.join(file_name(index, "image")), DataType::F32)?;
    nifti::write_intensity(&sample.target_bias, out.join(file_name(index, "bias")), DataType::F32)?;

    let mut entry = serde_json::json!({
        "index": index,
        "seed": cfg.generator.seed,
        "source": stems[which],
        "files": KINDS.iter().map(|k| (k.to_string(), file_name(index, k).into())).collect::<serde_json::Map<_, _>>(),
    });
    if let (Some(obj), serde_json::Value::Object(draws)) = (entry.as_object_mut(), sample.manifest_entry()) {
        obj.extend(draws);
    }
    Ok((sample.resolution.regime, entry))
}

pub fn run(cfg: &RunConfig) -> Outcome {
    let candidates = match find_pairs(&cfg.inputs) {
        Ok(c) => c,
        Err(e) => {
            log::error!("{e}");
            return Outcome::Failure;
        }
    };
    let mut failed = 0;
    let mut stems = Vec::new();
    let mut pairs = Vec::new();
    for (stem, c) in &candidates {
        match load_pair(c, cfg) {
            Ok(p) => {
                stems.push(stem.clone());
                pairs.push(p);
            }
            Err(e) => {
                log::error!("training pair '{stem}': {e}");
                failed += 1;
            }
        }
    }
    if pairs.is_empty() {
        log::error!("no usable training pairs in {:?}", cfg.inputs);
        return Outcome::Failure;
    }
    log::info!(
        "generating {} samples from {} training pairs, seed {}",
        cfg.count,
        pairs.len(),
        cfg.generator.seed
    );
    if let Err(e) = write_json(&cfg.generator, &cfg.output.join(CONFIG_RECORD)) {
        log::error!("{e}");
        return Outcome::Failure;
    }

    let results: Vec<(u64, Result<(Regime, serde_json::Value)>)> = (0..cfg.count as u64)
        .into_par_iter()
        .map(|i| {
            let r = write_sample(cfg, &pairs, &stems, i);
            if r.is_ok() {
                log::debug!("sample {i} written");
            }
            (i, r)
        })
        .collect();

    let mut manifest = Vec::new();
    let mut per_regime: BTreeMap<&str, usize> = Regime::ALL.iter().map(|r| (r.name(), 0)).collect();
    let mut written = 0;
    for (i, r) in results {
        match r {
            Ok((regime, entry)) => {
                *per_regime.entry(regime.name()).or_default() += 1;
                manifest.extend(serde_json::to_vec(&entry).expect("manifest entry serialises"));
                manifest.push(b'\n');
                written += 1;
            }
            Err(e) => {
                log::error!("sample {i}: {e}");
                failed += 1;
            }
        }
    }
    if let Err(e) = atomic_write(&cfg.output.join(MANIFEST), &manifest) {
        log::error!("{e}");
        return Outcome::Failure;
    }
    for (regime, n) in &per_regime {
        log::info!("{regime}: {n} samples");
    }
    log::info!("wrote {written} samples to {}", cfg.output.display());
    if failed == 0 {
        Outcome::Success
    } else if cfg.count > 0 && written == 0 {
        Outcome::Failure
    } else {
        Outcome::Partial
    }
}
