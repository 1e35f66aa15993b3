//! Resolution regimes and the thick-slice acquisition model.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gmm::uniform;
use super::GeneratorConfig;
use crate::error::{Error, Result};
use crate::volume::{resample, resample_to_grid, Boundary, IntensityVolume, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Isotropic1mm,
    Clinical2d,
    PortableStock,
    LowfieldIsotropic,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime::Isotropic1mm,
        Regime::Clinical2d,
        Regime::PortableStock,
        Regime::LowfieldIsotropic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Isotropic1mm => "isotropic-1mm",
            Regime::Clinical2d => "clinical-2d",
            Regime::PortableStock => "portable-stock",
            Regime::LowfieldIsotropic => "lowfield-isotropic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Axial,
    Coronal,
    Sagittal,
}

impl Orientation {
    /// World axis normal to the slices (0 = x, 1 = y, 2 = z).
    pub fn slice_world_axis(self) -> usize {
        match self {
            Orientation::Sagittal => 0,
            Orientation::Coronal => 1,
            Orientation::Axial => 2,
        }
    }
}

pub const SLICE_SPACING_RANGE: (f64, f64) = (2.5, 8.5);
pub const PORTABLE_IN_PLANE_RANGE: (f64, f64) = (1.4, 1.8);
pub const PORTABLE_SLICE_SPACING: f64 = 5.0;
pub const LOWFIELD_VOXEL_RANGE: (f64, f64) = (2.0, 5.0);

/// Simulated acquisition geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionSpec {
    pub regime: Regime,
    /// Slice orientation for 2D acquisitions.
    pub orientation: Option<Orientation>,
    /// Voxel size along world x, y, z (mm).
    pub voxel_size: [f64; 3],
}

impl ResolutionSpec {
    pub fn isotropic_1mm() -> Self {
        ResolutionSpec {
            regime: Regime::Isotropic1mm,
            orientation: None,
            voxel_size: [1.0; 3],
        }
    }

    /// 2D acquisition with the given in-plane size and slice spacing.
    pub fn slices(regime: Regime, orientation: Orientation, in_plane: f64, spacing: f64) -> Self {
        let mut voxel_size = [in_plane; 3];
        voxel_size[orientation.slice_world_axis()] = spacing;
        ResolutionSpec {
            regime,
            orientation: Some(orientation),
            voxel_size,
        }
    }
}

pub fn sample_resolution<R: Rng + ?Sized>(config: &GeneratorConfig, rng: &mut R) -> ResolutionSpec {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut regime = Regime::LowfieldIsotropic;
    for (r, p) in Regime::ALL.iter().zip(config.regime_probabilities.iter()) {
        acc += p;
        if u < acc {
            regime = *r;
            break;
        }
    }
    match regime {
        Regime::Isotropic1mm => ResolutionSpec::isotropic_1mm(),
        Regime::Clinical2d => {
            let orientation = match rng.random_range(0..3) {
                0 => Orientation::Axial,
                1 => Orientation::Coronal,
                _ => Orientation::Sagittal,
            };
            let spacing = uniform(rng, SLICE_SPACING_RANGE);
            ResolutionSpec::slices(regime, orientation, 1.0, spacing)
        }
        Regime::PortableStock => {
            let in_plane = uniform(rng, PORTABLE_IN_PLANE_RANGE);
            ResolutionSpec::slices(regime, Orientation::Axial, in_plane, PORTABLE_SLICE_SPACING)
        }
        Regime::LowfieldIsotropic => ResolutionSpec {
            regime,
            orientation: None,
            voxel_size: [(); 3].map(|_| uniform(rng, LOWFIELD_VOXEL_RANGE)),
        },
    }
}

/// Full width at half maximum of a unit Gaussian, `2·sqrt(2·ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Normalised discrete Gaussian truncated at three standard deviations.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= s);
    k
}

/// Convolves along one voxel axis, replicating edge voxels.
pub fn smooth_axis(vol: &IntensityVolume, axis: usize, kernel: &[f64]) -> IntensityVolume {
    let dims = vol.dims();
    let grid = vol.grid();
    let src = vol.data();
    let n = dims[axis] as i64;
    let r = (kernel.len() / 2) as i64;
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    } as i64;
    let data: Vec<f32> = (0..vol.len())
        .into_par_iter()
        .map(|idx| {
            let pos = grid.coords(idx)[axis] as i64;
            let base = idx as i64 - pos * stride;
            let mut acc = 0.0f64;
            for (t, w) in kernel.iter().enumerate() {
                let q = (pos + t as i64 - r).clamp(0, n - 1);
                acc += w * src[(base + q * stride) as usize] as f64;
            }
            acc as f32
        })
        .collect();
    Volume::from_parts(grid.clone(), data)
}

/// Thick-slice blur, downsampling to the simulated voxel size and
/// upsampling back onto the input 1mm grid.
///
/// Every voxel axis whose simulated spacing exceeds 1mm is blurred with a
/// Gaussian whose FWHM equals that spacing.
pub fn simulate_acquisition(vol: &IntensityVolume, spec: &ResolutionSpec) -> Result<IntensityVolume> {
    if !vol.grid().is_1mm() {
        return Err(Error::invalid(format!(
            "acquisition simulation needs a 1mm grid, got voxel size {:?}",
            vol.grid().voxel_size()
        )));
    }
    if spec.regime == Regime::Isotropic1mm {
        return Ok(vol.clone());
    }
    let mut spacing = [1.0; 3];
    let mut seen = [false; 3];
    for w in 0..3 {
        let j = vol.grid().voxel_axis_along(w)?;
        if seen[j] {
            return Err(Error::Orientation(
                "grid axes do not map one-to-one onto world axes".into(),
            ));
        }
        seen[j] = true;
        spacing[j] = spec.voxel_size[w];
    }
    let mut blurred = vol.clone();
    for (axis, &s) in spacing.iter().enumerate() {
        if s > 1.0 + 1e-9 {
            blurred = smooth_axis(&blurred, axis, &gaussian_kernel(s / FWHM_PER_SIGMA));
        }
    }
    let low = resample(&blurred, spacing)?;
    Ok(resample_to_grid(&low, vol.grid(), Boundary::Clamp))
}
