use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use brainsynth::{Error, Result};

/// File name without `.nii` or `.nii.gz`, or `None` for other files.
pub fn nifti_stem(path: &Path) -> Option<String> {
    let name = path.file_name()?.to_str()?;
    name.strip_suffix(".nii.gz")
        .or_else(|| name.strip_suffix(".nii"))
        .map(str::to_string)
}

/// NIfTI files named by `inputs`, directories expanded one level, sorted
/// by path.
pub fn nifti_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let entries = std::fs::read_dir(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            for entry in entries {
                let path = entry
                    .map_err(|e| Error::Io {
                        path: p.clone(),
                        source: e,
                    })?
                    .path();
                if path.is_file() && nifti_stem(&path).is_some() {
                    out.push(path);
                }
            }
        } else {
            out.push(p.clone());
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Pairing key for evaluation: the stem with one trailing `_seg` or
/// `_labels` removed.
pub fn case_key(path: &Path) -> Option<String> {
    let stem = nifti_stem(path)?;
    Some(
        stem.strip_suffix("_seg")
            .or_else(|| stem.strip_suffix("_labels"))
            .unwrap_or(&stem)
            .to_string(),
    )
}

/// Files keyed by [`case_key`]; a key seen twice is an error.
pub fn by_case_key(files: &[PathBuf]) -> Result<BTreeMap<String, PathBuf>> {
    let mut map = BTreeMap::new();
    for f in files {
        let key = case_key(f)
            .ok_or_else(|| Error::InvalidArgument(format!("{} is not a NIfTI file", f.display())))?;
        if let Some(prev) = map.insert(key.clone(), f.clone()) {
            return Err(Error::InvalidArgument(format!(
                "{} and {} both map to case '{key}'",
                prev.display(),
                f.display()
            )));
        }
    }
    Ok(map)
}
