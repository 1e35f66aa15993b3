#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use brainsynth::nifti::{self, DataType};
use brainsynth::{Grid, LabelVolume};

pub fn brainsynth() -> Command {
    Command::new(env!("CARGO_BIN_EXE_brainsynth"))
}

pub fn stub_predictor() -> &'static str {
    env!("CARGO_BIN_EXE_brainsynth-stub-predictor")
}

pub fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    if std::env::var_os("SHOW_CLI_OUTPUT").is_some() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

/// Nested shells: cortex, white matter split by hemisphere, a central
/// column, hippocampus blobs and a small WMH lesion.
pub fn phantom_labels(dims: [usize; 3]) -> LabelVolume {
    let g = Grid::isotropic(dims, 1.0).unwrap();
    let c = dims.map(|d| d as f64 / 2.0);
    let rmax = c.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    LabelVolume::from_fn(g, |i, j, k| {
        let p = [i as f64 + 0.5 - c[0], j as f64 + 0.5 - c[1], k as f64 + 0.5 - c[2]];
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        let left = p[0] < 0.0;
        if r > rmax {
            0
        } else if r > 0.75 * rmax {
            if left { 3 } else { 42 }
        } else if (p[0].abs() - 0.35 * rmax).abs() < 0.15 * rmax && p[1].abs() < 0.2 * rmax && p[2].abs() < 0.2 * rmax {
            if left { 17 } else { 53 }
        } else if p[0].abs() < 0.1 * rmax && p[1].abs() < 0.1 * rmax {
            16
        } else if (p[0] - 0.2 * rmax).abs() < 0.1 * rmax && (p[1] + 0.3 * rmax).abs() < 0.1 * rmax && p[2].abs() < 0.1 * rmax {
            77
        } else if left {
            2
        } else {
            41
        }
    })
    .unwrap()
}

/// Writes `<stem>_image.nii.gz` and `<stem>_labels.nii.gz` into `dir`.
pub fn write_training_pair(dir: &Path, stem: &str, dims: [usize; 3]) {
    let labels = phantom_labels(dims);
    let image = labels
        .with_data(
            labels
                .data()
                .iter()
                .map(|&l| match l {
                    0 => 0.0,
                    2 | 41 => 110.0,
                    3 | 42 => 70.0,
                    77 => 60.0,
                    _ => 85.0,
                })
                .collect(),
        )
        .unwrap();
    nifti::write_intensity(&image, dir.join(format!("{stem}_image.nii.gz")), DataType::F32).unwrap();
    nifti::write_labels(&labels, dir.join(format!("{stem}_labels.nii.gz")), DataType::I16).unwrap();
}

/// Every regular file under `dir` with its bytes, sorted by name.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (PathBuf::from(p.file_name().unwrap()), std::fs::read(&p).unwrap()))
        .collect()
}
