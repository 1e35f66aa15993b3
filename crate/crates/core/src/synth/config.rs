use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Randomisation ranges for one generator.
///
/// Defaults are the low-field settings: the intensity standard deviation
/// range and the bias log-amplitude are twice the high-field baseline
/// returned by [`GeneratorConfig::high_field_baseline`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Uniform range for per-label GMM means.
    pub mean_range: (f64, f64),
    /// Uniform range for per-label GMM standard deviations.
    pub std_range: (f64, f64),
    /// WM mean above which WMH is rendered darker than WM.
    pub wmh_threshold: f64,
    /// Standard deviation of the log bias field at each control point.
    pub bias_log_sigma: f64,
    /// Control points per axis of the bias lattice.
    pub bias_grid: usize,
    /// Rotation about each axis drawn from ±`rotation_deg`.
    pub rotation_deg: f64,
    pub scale_range: (f64, f64),
    /// Shear coefficients drawn from ±`shear`.
    pub shear: f64,
    pub translation_mm: f64,
    /// Control points per axis of the nonlinear displacement lattice.
    pub nonlinear_grid: usize,
    /// Standard deviation (mm) of nonlinear control displacements, which
    /// are truncated at three standard deviations.
    pub nonlinear_sigma_mm: f64,
    /// Probabilities of isotropic 1mm, clinical 2D, portable stock and
    /// low-field isotropic acquisitions.
    pub regime_probabilities: [f64; 4],
    pub seed: u64,
}

pub const DEFAULT_SEED: u64 = 0x5EED_2024;

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            mean_range: (0.0, 255.0),
            std_range: (1.0, 30.0),
            wmh_threshold: 128.0,
            bias_log_sigma: 0.6,
            bias_grid: 4,
            rotation_deg: 15.0,
            scale_range: (0.9, 1.1),
            shear: 0.1,
            translation_mm: 10.0,
            nonlinear_grid: 10,
            nonlinear_sigma_mm: 3.0,
            regime_probabilities: [0.25; 4],
            seed: DEFAULT_SEED,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("{key}: '{value}' is not a number")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("{key}: '{value}' is not a non-negative integer")))
}

impl GeneratorConfig {
    /// Settings before the low-field doubling of noise and bias strength.
    pub fn high_field_baseline() -> Self {
        GeneratorConfig {
            std_range: (1.0, 15.0),
            bias_log_sigma: 0.3,
            ..GeneratorConfig::default()
        }
    }

    /// Every random component switched off: no deformation, no noise, no
    /// bias and 1mm isotropic acquisition.
    pub fn deterministic() -> Self {
        GeneratorConfig {
            std_range: (0.0, 0.0),
            bias_log_sigma: 0.0,
            rotation_deg: 0.0,
            scale_range: (1.0, 1.0),
            shear: 0.0,
            translation_mm: 0.0,
            nonlinear_sigma_mm: 0.0,
            regime_probabilities: [1.0, 0.0, 0.0, 0.0],
            ..GeneratorConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, (lo, hi): (f64, f64)| -> Result<()> {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(format!("{name} range ({lo}, {hi}) is invalid")));
            }
            Ok(())
        };
        range("mean", self.mean_range)?;
        range("std", self.std_range)?;
        range("scale", self.scale_range)?;
        if self.mean_range.0 < 0.0 || self.std_range.0 < 0.0 || self.scale_range.0 <= 0.0 {
            return Err(Error::invalid("means, stds and scales must be non-negative"));
        }
        if !(self.mean_range.0 < self.wmh_threshold && self.wmh_threshold < self.mean_range.1) {
            return Err(Error::invalid(format!(
                "WMH threshold {} must lie inside the mean range {:?}",
                self.wmh_threshold, self.mean_range
            )));
        }
        for (name, v) in [
            ("bias_log_sigma", self.bias_log_sigma),
            ("rotation_deg", self.rotation_deg),
            ("shear", self.shear),
            ("translation_mm", self.translation_mm),
            ("nonlinear_sigma_mm", self.nonlinear_sigma_mm),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.bias_grid == 0 || self.nonlinear_grid == 0 {
            return Err(Error::invalid("control lattices need at least one point per axis"));
        }
        let p = &self.regime_probabilities;
        if p.iter().any(|&x| !(x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("regime probabilities {p:?} must sum to 1")));
        }
        Ok(())
    }

    /// Sets one field from a `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let f = |v: &str| parse_f64(key, v);
        match key {
            "mean_min" => self.mean_range.0 = f(value)?,
            "mean_max" => self.mean_range.1 = f(value)?,
            "std_min" => self.std_range.0 = f(value)?,
            "std_max" => self.std_range.1 = f(value)?,
            "wmh_threshold" => self.wmh_threshold = f(value)?,
            "bias_log_sigma" => self.bias_log_sigma = f(value)?,
            "bias_grid" => self.bias_grid = parse_usize(key, value)?,
            "rotation_deg" => self.rotation_deg = f(value)?,
            "scale_min" => self.scale_range.0 = f(value)?,
            "scale_max" => self.scale_range.1 = f(value)?,
            "shear" => self.shear = f(value)?,
            "translation_mm" => self.translation_mm = f(value)?,
            "nonlinear_grid" => self.nonlinear_grid = parse_usize(key, value)?,
            "nonlinear_sigma_mm" => self.nonlinear_sigma_mm = f(value)?,
            "p_isotropic" => self.regime_probabilities[0] = f(value)?,
            "p_clinical" => self.regime_probabilities[1] = f(value)?,
            "p_portable" => self.regime_probabilities[2] = f(value)?,
            "p_lowfield" => self.regime_probabilities[3] = f(value)?,
            "seed" => {
                self.seed = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("seed: '{value}' is not an integer")))?
            }
            other => return Err(Error::invalid(format!("unknown generator key '{other}'"))),
        }
        Ok(())
    }

    pub fn is_key(key: &str) -> bool {
        GeneratorConfig::default().set(key, "0").is_ok()
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("line {}: expected 'key = value'", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_key_values(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_key_values(&text)
}
