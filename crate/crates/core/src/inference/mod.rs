//! Test-time pipeline: resampling to 1mm, intensity normalisation, a
//! pluggable predictor, left-right flip augmentation and evaluation.

mod evaluate;
mod external;
mod segment;
mod stub;

pub use evaluate::{
    evaluate_dataset, evaluate_segmentations, CaseEvaluation, CorrelationRow, EvalCase,
    EvaluationReport, EvaluationSummary, LabelMean,
};
pub use external::{ExternalPredictor, Sidecar, EXTRA_CHANNELS};
pub use segment::{predict_tiled, segment, SegmentOptions, SegmentationResult, TileConfig};
pub use stub::{TissueCodeStub, UniformStub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::LabelSchema;
use crate::volume::{ChannelStack, IntensityVolume, Volume};

/// Intensity normalisation a predictor expects on its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Pass intensities through unchanged.
    None,
    /// Map the 1st and 99th percentiles to 0 and 1, clamping outside.
    RobustMinMax,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorMetadata {
    pub schema_hash: String,
    /// Output channels: one per label plus image and bias.
    pub channels: usize,
    pub normalization: Normalization,
}

impl PredictorMetadata {
    pub fn for_schema(schema: &LabelSchema, normalization: Normalization) -> Self {
        PredictorMetadata {
            schema_hash: schema.hash(),
            channels: schema.len() + 2,
            normalization,
        }
    }

    pub fn check(&self, schema: &LabelSchema) -> Result<()> {
        if self.schema_hash != schema.hash() {
            return Err(Error::Contract(format!(
                "predictor schema hash {} does not match {}",
                self.schema_hash,
                schema.hash()
            )));
        }
        if self.channels != schema.len() + 2 {
            return Err(Error::Contract(format!(
                "predictor declares {} channels, schema needs {}",
                self.channels,
                schema.len() + 2
            )));
        }
        Ok(())
    }
}

/// Maps a normalised 1mm volume to an `L + 2` channel stack on the same
/// grid: softmax posteriors in schema channel order, then image, then bias.
pub trait Predictor: Send + Sync {
    fn metadata(&self) -> &PredictorMetadata;
    fn predict(&self, input: &IntensityVolume) -> Result<ChannelStack>;
}

/// Linear-interpolated percentile of sorted data, `q` in [0, 1].
fn percentile(sorted: &[f32], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] as f64 * (1.0 - t) + sorted[hi] as f64 * t
}

/// Robust min-max scaling to [0, 1] between the 1st and 99th percentiles.
pub fn robust_minmax(vol: &IntensityVolume) -> Result<IntensityVolume> {
    let mut sorted = vol.data().to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let lo = percentile(&sorted, 0.01);
    let hi = percentile(&sorted, 0.99);
    if !(hi > lo) {
        return Err(Error::DegenerateInput(format!(
            "intensity percentiles coincide at {lo}"
        )));
    }
    let data = vol
        .data()
        .iter()
        .map(|&v| ((v as f64 - lo) / (hi - lo)).clamp(0.0, 1.0) as f32)
        .collect();
    Ok(Volume::from_parts(vol.grid().clone(), data))
}

pub fn normalize(vol: &IntensityVolume, normalization: Normalization) -> Result<IntensityVolume> {
    match normalization {
        Normalization::None => Ok(vol.clone()),
        Normalization::RobustMinMax => robust_minmax(vol),
    }
}
