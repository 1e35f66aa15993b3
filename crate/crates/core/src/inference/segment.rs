use nalgebra::{Matrix4, Vector3};

use super::{normalize, Predictor};
use crate::error::{Error, Result};
use crate::loss::PredictionBundle;
use crate::metrics::{roi_volumes, RoiReport};
use crate::schema::LabelSchema;
use crate::volume::{resample, ChannelStack, FlipLr, Grid, IntensityVolume, LabelVolume};

/// Patch-wise prediction for volumes too large for one predictor call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileConfig {
    pub patch: usize,
    pub overlap: usize,
    /// Volumes with more voxels than this are tiled.
    pub max_voxels: usize,
}

impl Default for TileConfig {
    fn default() -> Self {
        TileConfig {
            patch: 160,
            overlap: 16,
            max_voxels: 160 * 160 * 160,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentOptions {
    pub tta: bool,
    pub tiling: Option<TileConfig>,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        SegmentOptions {
            tta: true,
            tiling: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub segmentation: LabelVolume,
    /// Softmax posteriors, one channel per schema label.
    pub posteriors: ChannelStack,
    pub pred_image: IntensityVolume,
    pub pred_bias: IntensityVolume,
    pub report: RoiReport,
}

fn tile_starts(n: usize, patch: usize, overlap: usize) -> Vec<usize> {
    if n <= patch {
        return vec![0];
    }
    let step = patch - overlap;
    let mut starts: Vec<usize> = (0..).map(|i| i * step).take_while(|&s| s + patch < n).collect();
    starts.push(n - patch);
    starts
}

/// Linear ramp over the overlap on sides that border another patch.
fn blend_weight(p: usize, size: usize, start: usize, n: usize, overlap: usize) -> f64 {
    let ramp = (overlap + 1) as f64;
    let mut w: f64 = 1.0;
    if start > 0 {
        w = w.min((p + 1) as f64 / ramp);
    }
    if start + size < n {
        w = w.min((size - p) as f64 / ramp);
    }
    w
}

fn sub_grid(grid: &Grid, start: [usize; 3], dims: [usize; 3]) -> Result<Grid> {
    let shift = Matrix4::new_translation(&Vector3::new(start[0] as f64, start[1] as f64, start[2] as f64));
    Grid::new(dims, grid.affine() * shift)
}

/// Runs the predictor on overlapping patches and blends the outputs.
/// Volumes within the budget go through in one call.
pub fn predict_tiled(
    predictor: &dyn Predictor,
    input: &IntensityVolume,
    tile: &TileConfig,
) -> Result<ChannelStack> {
    if input.len() <= tile.max_voxels {
        return predictor.predict(input);
    }
    if tile.overlap >= tile.patch {
        return Err(Error::invalid("tile overlap must be smaller than the patch"));
    }
    let dims = input.dims();
    let grid = input.grid();
    let channels = predictor.metadata().channels;
    let n = input.len();
    let mut acc = vec![0.0f64; n * channels];
    let mut wsum = vec![0.0f64; n];
    let starts = [0, 1, 2].map(|a| tile_starts(dims[a], tile.patch, tile.overlap));
    for &sk in &starts[2] {
        for &sj in &starts[1] {
            for &si in &starts[0] {
                let start = [si, sj, sk];
                let pd = [0, 1, 2].map(|a| tile.patch.min(dims[a]));
                let pg = sub_grid(grid, start, pd)?;
                let patch = IntensityVolume::from_fn(pg.clone(), |i, j, k| {
                    input.get(si + i, sj + j, sk + k)
                })?;
                let out = predictor.predict(&patch)?;
                if out.channels() != channels || !out.grid().same_geometry(&pg) {
                    return Err(Error::Contract(
                        "predictor output does not match the patch".into(),
                    ));
                }
                let pn = pg.len();
                for pidx in 0..pn {
                    let [i, j, k] = pg.coords(pidx);
                    let w = blend_weight(i, pd[0], si, dims[0], tile.overlap)
                        * blend_weight(j, pd[1], sj, dims[1], tile.overlap)
                        * blend_weight(k, pd[2], sk, dims[2], tile.overlap);
                    let v = grid.index(si + i, sj + j, sk + k);
                    wsum[v] += w;
                    for c in 0..channels {
                        acc[c * n + v] += w * out.data()[c * pn + pidx] as f64;
                    }
                }
            }
        }
    }
    let data = acc
        .iter()
        .enumerate()
        .map(|(i, &a)| (a / wsum[i % n]) as f32)
        .collect();
    ChannelStack::new(grid.clone(), channels, data)
}

fn run(predictor: &dyn Predictor, input: &IntensityVolume, options: &SegmentOptions) -> Result<ChannelStack> {
    let out = match &options.tiling {
        Some(t) => predict_tiled(predictor, input, t)?,
        None => predictor.predict(input)?,
    };
    if out.channels() != predictor.metadata().channels {
        return Err(Error::Contract(format!(
            "predictor returned {} channels, declared {}",
            out.channels(),
            predictor.metadata().channels
        )));
    }
    if !out.grid().same_geometry(input.grid()) {
        return Err(Error::Contract("predictor output grid differs from its input".into()));
    }
    Ok(out)
}

/// Segments a scan of any resolution onto a 1mm grid.
///
/// With TTA the posterior is the mean of the prediction for the scan and
/// the flipped-back prediction for its mirror image, lateral channels
/// swapped. Softmax posteriors are averaged, not logits.
pub fn segment(
    input: &IntensityVolume,
    predictor: &dyn Predictor,
    schema: &LabelSchema,
    options: &SegmentOptions,
) -> Result<SegmentationResult> {
    predictor.metadata().check(schema)?;
    // Fail on an ambiguous left-right axis before calling the predictor.
    input.grid().lr_axis()?;
    let mm = resample(input, [1.0; 3])?;
    let x = normalize(&mm, predictor.metadata().normalization)?;
    let mut stack = run(predictor, &x, options)?;
    if options.tta {
        let flipped = run(predictor, &x.flipped_lr()?, options)?.flip_lr(schema)?;
        let data = stack
            .data()
            .iter()
            .zip(flipped.data())
            .map(|(&a, &b)| (0.5 * (a as f64 + b as f64)) as f32)
            .collect();
        stack = ChannelStack::new(stack.grid().clone(), stack.channels(), data)?;
    }
    let bundle = PredictionBundle::from_stack(&stack, schema)
        .map_err(|e| Error::Contract(format!("invalid predictor output: {e}")))?;
    let segmentation = bundle.argmax(schema);
    let report = roi_volumes(&segmentation, schema);
    Ok(SegmentationResult {
        segmentation,
        posteriors: bundle.soft_labels().clone(),
        pred_image: bundle.pred_image().clone(),
        pred_bias: bundle.pred_bias().clone(),
        report,
    })
}
