//! Domain-randomised training sample generator.
//!
//! One draw takes a real 1mm T1w scan with its label map and produces:
//!
//! * a synthetic scan rendered from a label-conditioned Gaussian mixture,
//!   multiplied by a smooth bias field and degraded by a random
//!   acquisition geometry before being brought back to the 1mm grid;
//! * the deformed label map;
//! * the deformed real scan, normalised so that its white matter median is 1;
//! * the bias field itself.
//!
//! The last two are regression targets for multi-task training.

mod acquisition;
mod config;
mod gmm;
mod spatial;

pub use acquisition::{
    gaussian_kernel, sample_resolution, simulate_acquisition, smooth_axis, Orientation, Regime,
    ResolutionSpec, FWHM_PER_SIGMA, LOWFIELD_VOXEL_RANGE, PORTABLE_IN_PLANE_RANGE,
    PORTABLE_SLICE_SPACING, SLICE_SPACING_RANGE,
};
pub use config::{parse_key_values, read_key_values, GeneratorConfig, DEFAULT_SEED};
pub use gmm::{sample_gmm_params, sample_wmh_mean, GmmParams};
pub use spatial::{sample_bias_field, sample_deformation};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::schema::LabelSchema;
use crate::volume::{
    apply_deformation, apply_deformation_labels, IntensityVolume, LabelVolume, Volume,
};

pub type SynthRng = ChaCha8Rng;

/// Independent random stream for sample `index` of a run seeded with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> SynthRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Real 1mm T1w scan and its segmentation on the same grid.
#[derive(Debug, Clone)]
pub struct TrainingPair {
    image: IntensityVolume,
    labels: LabelVolume,
}

impl TrainingPair {
    pub fn new(image: IntensityVolume, labels: LabelVolume, schema: &LabelSchema) -> Result<Self> {
        if !image.grid().same_geometry(labels.grid()) {
            return Err(Error::invalid("image and label map are on different grids"));
        }
        if !image.grid().is_1mm() {
            return Err(Error::invalid(format!(
                "training pairs must be 1mm isotropic, got {:?}",
                image.grid().voxel_size()
            )));
        }
        schema.validate(&labels)?;
        Ok(TrainingPair { image, labels })
    }

    pub fn image(&self) -> &IntensityVolume {
        &self.image
    }

    pub fn labels(&self) -> &LabelVolume {
        &self.labels
    }
}

/// One generator draw; all volumes share the input 1mm grid.
#[derive(Debug, Clone)]
pub struct SynthSample {
    pub synth: IntensityVolume,
    pub labels: LabelVolume,
    pub target_image: IntensityVolume,
    pub target_bias: IntensityVolume,
    pub gmm: GmmParams,
    pub resolution: ResolutionSpec,
}

#[derive(Serialize)]
struct ManifestGmm {
    id: u32,
    mean: f64,
    std: f64,
}

impl SynthSample {
    /// JSON record of the random draws behind this sample.
    pub fn manifest_entry(&self) -> serde_json::Value {
        let gmm: Vec<ManifestGmm> = (0..self.gmm.ids.len())
            .map(|c| ManifestGmm {
                id: self.gmm.ids[c],
                mean: self.gmm.means[c],
                std: self.gmm.stds[c],
            })
            .collect();
        serde_json::json!({
            "regime": self.resolution.regime.name(),
            "orientation": self.resolution.orientation,
            "voxel_size": self.resolution.voxel_size,
            "gmm": gmm,
        })
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Divides the image by its median over white matter voxels.
pub fn normalize_wm_median(
    img: &IntensityVolume,
    labels: &LabelVolume,
    schema: &LabelSchema,
) -> Result<IntensityVolume> {
    if !img.grid().same_geometry(labels.grid()) {
        return Err(Error::invalid("image and labels are on different grids"));
    }
    let mut wm: Vec<f64> = img
        .data()
        .iter()
        .zip(labels.data())
        .filter(|(_, &l)| schema.is_wm(l))
        .map(|(&v, _)| v as f64)
        .collect();
    if wm.is_empty() {
        return Err(Error::DegenerateInput("no white matter voxels".into()));
    }
    let m = median(&mut wm);
    if !(m > 0.0) {
        return Err(Error::DegenerateInput(format!("white matter median is {m}")));
    }
    let data = img.data().iter().map(|&v| (v as f64 / m) as f32).collect();
    Ok(Volume::from_parts(img.grid().clone(), data))
}

/// Voxelwise draw from the label-conditioned mixture, clamped at zero.
pub fn render_gmm<R: Rng + ?Sized>(
    labels: &LabelVolume,
    schema: &LabelSchema,
    gmm: &GmmParams,
    rng: &mut R,
) -> Result<IntensityVolume> {
    let channels = schema.channel_indices(labels)?;
    let data = channels
        .iter()
        .map(|&c| {
            let z: f64 = rng.sample(StandardNormal);
            (gmm.means[c] + gmm.stds[c] * z).max(0.0) as f32
        })
        .collect();
    Ok(Volume::from_parts(labels.grid().clone(), data))
}

/// Runs deformation, mixture rendering, bias corruption and acquisition
/// simulation for one training pair.
pub fn generate_sample<R: Rng + ?Sized>(
    pair: &TrainingPair,
    schema: &LabelSchema,
    config: &GeneratorConfig,
    rng: &mut R,
) -> Result<SynthSample> {
    config.validate()?;
    let grid = pair.image.grid();
    let field = sample_deformation(grid, config, rng);
    let labels = apply_deformation_labels(&pair.labels, &field, schema.background_id())?;
    let image = apply_deformation(&pair.image, &field)?;

    let gmm = sample_gmm_params(schema, config, rng);
    let clean = render_gmm(&labels, schema, &gmm, rng)?;
    let bias = sample_bias_field(grid, config, rng);
    let corrupted: Vec<f32> = clean
        .data()
        .iter()
        .zip(bias.data())
        .map(|(&v, &b)| v * b)
        .collect();
    let corrupted = clean.with_data(corrupted)?;

    let resolution = sample_resolution(config, rng);
    let synth = simulate_acquisition(&corrupted, &resolution)?;
    let target_image = normalize_wm_median(&image, &labels, schema)?;

    Ok(SynthSample {
        synth,
        labels,
        target_image,
        target_bias: bias,
        gmm,
        resolution,
    })
}

/// Draws sample `index` of a run: picks a training pair, then generates.
/// Each index owns an independent random stream, so samples can be produced
/// in any order or in parallel with identical results.
pub fn generate_indexed(
    pairs: &[TrainingPair],
    schema: &LabelSchema,
    config: &GeneratorConfig,
    index: u64,
) -> Result<(usize, SynthSample)> {
    if pairs.is_empty() {
        return Err(Error::invalid("no training pairs"));
    }
    let mut rng = sample_rng(config.seed, index);
    let which = rng.random_range(0..pairs.len());
    generate_sample(&pairs[which], schema, config, &mut rng).map(|s| (which, s))
}
