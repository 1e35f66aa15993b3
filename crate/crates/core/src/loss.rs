//! Four-term multi-task loss: cross-entropy minus average soft Dice plus
//! L1 errors on the normalised image and on the log bias field, all with
//! unit weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::LabelSchema;
use crate::synth::SynthSample;
use crate::volume::{ChannelStack, IntensityVolume, LabelVolume, Volume};

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;
/// Denominator smoothing of the soft Dice.
pub const DICE_EPS: f64 = 1e-6;
/// Allowed deviation of per-voxel softmax sums from 1.
pub const SUM_TOL: f64 = 1e-4;

/// Network output: `L` softmax channels, predicted image, predicted bias.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBundle {
    soft_labels: ChannelStack,
    pred_image: IntensityVolume,
    pred_bias: IntensityVolume,
}

impl PredictionBundle {
    pub fn new(
        soft_labels: ChannelStack,
        pred_image: IntensityVolume,
        pred_bias: IntensityVolume,
    ) -> Result<Self> {
        let grid = soft_labels.grid();
        if !grid.same_geometry(pred_image.grid()) || !grid.same_geometry(pred_bias.grid()) {
            return Err(Error::invalid("prediction fields are on different grids"));
        }
        if soft_labels.data().iter().any(|&p| p < 0.0) {
            return Err(Error::invalid("negative probability in soft labels"));
        }
        let n = soft_labels.voxels();
        let l = soft_labels.channels();
        for v in 0..n {
            let s: f64 = (0..l).map(|c| soft_labels.data()[c * n + v] as f64).sum();
            if (s - 1.0).abs() > SUM_TOL {
                return Err(Error::invalid(format!(
                    "soft labels at voxel {v} sum to {s}, not 1"
                )));
            }
        }
        if let Some(b) = pred_bias.data().iter().find(|&&b| !(b > 0.0)) {
            return Err(Error::Domain(format!("predicted bias {b} is not positive")));
        }
        Ok(PredictionBundle {
            soft_labels,
            pred_image,
            pred_bias,
        })
    }

    /// Splits an `L + 2` channel stack: softmax channels, image, bias.
    pub fn from_stack(stack: &ChannelStack, schema: &LabelSchema) -> Result<Self> {
        let l = schema.len();
        if stack.channels() != l + 2 {
            return Err(Error::Contract(format!(
                "expected {} channels (L = {l} labels + image + bias), got {}",
                l + 2,
                stack.channels()
            )));
        }
        PredictionBundle::new(
            stack.slice_channels(0..l)?,
            stack.channel_volume(l),
            stack.channel_volume(l + 1),
        )
    }

    pub fn to_stack(&self) -> ChannelStack {
        let mut data = self.soft_labels.data().to_vec();
        data.extend_from_slice(self.pred_image.data());
        data.extend_from_slice(self.pred_bias.data());
        ChannelStack::new(self.grid().clone(), self.soft_labels.channels() + 2, data)
            .expect("bundle fields share one grid")
    }

    /// One-hot posterior of `labels` with the given image and bias.
    pub fn one_hot(
        labels: &LabelVolume,
        schema: &LabelSchema,
        pred_image: IntensityVolume,
        pred_bias: IntensityVolume,
    ) -> Result<Self> {
        let ch = schema.channel_indices(labels)?;
        let n = labels.len();
        let mut data = vec![0.0f32; n * schema.len()];
        for (v, &c) in ch.iter().enumerate() {
            data[c * n + v] = 1.0;
        }
        let stack = ChannelStack::new(labels.grid().clone(), schema.len(), data)?;
        PredictionBundle::new(stack, pred_image, pred_bias)
    }

    pub fn soft_labels(&self) -> &ChannelStack {
        &self.soft_labels
    }

    pub fn pred_image(&self) -> &IntensityVolume {
        &self.pred_image
    }

    pub fn pred_bias(&self) -> &IntensityVolume {
        &self.pred_bias
    }

    pub fn grid(&self) -> &crate::volume::Grid {
        self.soft_labels.grid()
    }

    /// Per-voxel argmax of the softmax channels, ties going to the lowest
    /// label id.
    pub fn argmax(&self, schema: &LabelSchema) -> LabelVolume {
        let n = self.soft_labels.voxels();
        let l = self.soft_labels.channels();
        let p = self.soft_labels.data();
        let data = (0..n)
            .map(|v| {
                let mut best = (f32::NEG_INFINITY, u32::MAX);
                for c in 0..l {
                    let (prob, id) = (p[c * n + v], schema.id_of(c));
                    if prob > best.0 || (prob == best.0 && id < best.1) {
                        best = (prob, id);
                    }
                }
                best.1
            })
            .collect();
        Volume::from_parts(self.grid().clone(), data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Whether the background label takes part in the Dice average.
    pub include_background: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            include_background: true,
        }
    }
}

/// Individual terms and their unit-weight combination
/// `total = ce − avg_dice + l1_image + l1_logbias`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub avg_dice: f64,
    pub l1_image: f64,
    pub l1_logbias: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn from_terms(ce: f64, avg_dice: f64, l1_image: f64, l1_logbias: f64) -> Self {
        LossBreakdown {
            ce,
            avg_dice,
            l1_image,
            l1_logbias,
            total: ce - avg_dice + l1_image + l1_logbias,
        }
    }
}

fn check_target(pred: &PredictionBundle, target: &LabelVolume, schema: &LabelSchema) -> Result<Vec<usize>> {
    if !pred.grid().same_geometry(target.grid()) {
        return Err(Error::invalid("prediction and target are on different grids"));
    }
    if pred.soft_labels.channels() != schema.len() {
        return Err(Error::invalid(format!(
            "prediction has {} label channels, schema has {}",
            pred.soft_labels.channels(),
            schema.len()
        )));
    }
    schema.channel_indices(target)
}

/// Mean over voxels of `−ln p_target(v)`.
pub fn cross_entropy(pred: &PredictionBundle, target: &LabelVolume, schema: &LabelSchema) -> Result<f64> {
    let ch = check_target(pred, target, schema)?;
    let n = target.len();
    let p = pred.soft_labels.data();
    let sum: f64 = ch
        .iter()
        .enumerate()
        .map(|(v, &c)| -(p[c * n + v] as f64).max(PROB_FLOOR).ln())
        .sum();
    Ok(sum / n as f64)
}

/// Soft Dice of every channel, `2 Σ p·t / (Σ p + Σ t + ε)`.
pub fn soft_dice_per_label(
    pred: &PredictionBundle,
    target: &LabelVolume,
    schema: &LabelSchema,
) -> Result<Vec<f64>> {
    let ch = check_target(pred, target, schema)?;
    let n = target.len();
    let p = pred.soft_labels.data();
    Ok((0..schema.len())
        .map(|c| {
            let probs = &p[c * n..(c + 1) * n];
            let (mut inter, mut psum, mut tsum) = (0.0f64, 0.0f64, 0.0f64);
            for (v, &pv) in probs.iter().enumerate() {
                let pv = pv as f64;
                psum += pv;
                if ch[v] == c {
                    inter += pv;
                    tsum += 1.0;
                }
            }
            2.0 * inter / (psum + tsum + DICE_EPS)
        })
        .collect())
}

/// Unweighted mean of [`soft_dice_per_label`].
pub fn soft_dice_average(
    pred: &PredictionBundle,
    target: &LabelVolume,
    schema: &LabelSchema,
    config: &LossConfig,
) -> Result<f64> {
    let dice = soft_dice_per_label(pred, target, schema)?;
    let bg = schema.channel_of(schema.background_id());
    let kept: Vec<f64> = dice
        .iter()
        .enumerate()
        .filter(|(c, _)| config.include_background || Some(*c) != bg)
        .map(|(_, &d)| d)
        .collect();
    if kept.is_empty() {
        return Err(Error::invalid("no labels left to average"));
    }
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

fn mean_abs(a: &[f32], b: &[f32], f: impl Fn(f32) -> f64) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(&x, &y)| (f(x) - f(y)).abs()).sum();
    s / a.len() as f64
}

/// Loss against explicit targets.
pub fn composite_loss_with(
    pred: &PredictionBundle,
    labels: &LabelVolume,
    image: &IntensityVolume,
    bias: &IntensityVolume,
    schema: &LabelSchema,
    config: &LossConfig,
) -> Result<LossBreakdown> {
    let grid = pred.grid();
    if !grid.same_geometry(image.grid()) || !grid.same_geometry(bias.grid()) {
        return Err(Error::invalid("prediction and regression targets are on different grids"));
    }
    if let Some(b) = bias.data().iter().find(|&&b| !(b > 0.0)) {
        return Err(Error::Domain(format!("target bias {b} is not positive")));
    }
    let ce = cross_entropy(pred, labels, schema)?;
    let dice = soft_dice_average(pred, labels, schema, config)?;
    let l1_image = mean_abs(pred.pred_image.data(), image.data(), |x| x as f64);
    let l1_logbias = mean_abs(pred.pred_bias.data(), bias.data(), |x| (x as f64).ln());
    Ok(LossBreakdown::from_terms(ce, dice, l1_image, l1_logbias))
}

pub fn composite_loss(
    pred: &PredictionBundle,
    sample: &SynthSample,
    schema: &LabelSchema,
) -> Result<LossBreakdown> {
    composite_loss_with(
        pred,
        &sample.labels,
        &sample.target_image,
        &sample.target_bias,
        schema,
        &LossConfig::default(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::LabelEntry;
    use crate::volume::Grid;

    fn small_schema() -> LabelSchema {
        let labels = [0, 1, 2]
            .iter()
            .map(|&id| LabelEntry {
                id,
                name: format!("l{id}"),
            })
            .collect();
        LabelSchema::new(labels, vec![], vec![1], 2, 0).unwrap()
    }

    fn bundle(grid: &Grid, probs: Vec<f32>) -> PredictionBundle {
        let l = probs.len() / grid.len();
        let stack = ChannelStack::new(grid.clone(), l, probs).unwrap();
        PredictionBundle::new(
            stack,
            IntensityVolume::filled(grid.clone(), 1.0),
            IntensityVolume::filled(grid.clone(), 1.0),
        )
        .unwrap()
    }

    #[test]
    fn ce_two_voxel_hand_value() {
        let s = small_schema();
        let g = Grid::isotropic([2, 1, 1], 1.0).unwrap();
        // target (0, 1); true-class probabilities 0.8 and 0.2
        let pred = bundle(&g, vec![0.8, 0.5, 0.2, 0.2, 0.0, 0.3]);
        let t = LabelVolume::new(g, vec![0, 1]).unwrap();
        let ce = cross_entropy(&pred, &t, &s).unwrap();
        let want = -((0.8f32 as f64).ln() + (0.2f32 as f64).ln()) / 2.0;
        assert!((ce - want).abs() < 1e-12);
    }

    #[test]
    fn uniform_prediction_ce_is_ln_l() {
        let s = small_schema();
        let g = Grid::isotropic([3, 2, 1], 1.0).unwrap();
        let third = 1.0f32 / 3.0;
        let pred = bundle(&g, vec![third; 18]);
        let t = LabelVolume::new(g, vec![0, 1, 2, 2, 1, 0]).unwrap();
        let ce = cross_entropy(&pred, &t, &s).unwrap();
        assert!((ce - 3f64.ln()).abs() < 1e-7);
    }

    #[test]
    fn dice_half_overlap() {
        // Binary: |A| = |B| = 4, |A ∩ B| = 2 on channel 1.
        let s = small_schema();
        let g = Grid::isotropic([8, 1, 1], 1.0).unwrap();
        let p1 = [1.0f32, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let mut probs: Vec<f32> = p1.iter().map(|p| 1.0 - p).collect();
        probs.extend_from_slice(&p1);
        probs.extend_from_slice(&[0.0; 8]);
        let pred = bundle(&g, probs);
        let t = LabelVolume::new(g, vec![0, 0, 1, 1, 1, 1, 0, 0]).unwrap();
        let d = soft_dice_per_label(&pred, &t, &s).unwrap();
        assert!((d[1] - 0.5).abs() < 1e-6);
        // Absent and unpredicted label 2 scores 0.
        assert_eq!(d[2], 0.0);
    }

    #[test]
    fn perfect_prediction_total() {
        let s = small_schema();
        let g = Grid::isotropic([3, 1, 1], 1.0).unwrap();
        let labels = LabelVolume::new(g.clone(), vec![0, 1, 2]).unwrap();
        let img = IntensityVolume::new(g.clone(), vec![0.2, 1.0, 3.0]).unwrap();
        let bias = IntensityVolume::new(g, vec![0.5, 1.0, 2.0]).unwrap();
        let pred = PredictionBundle::one_hot(&labels, &s, img.clone(), bias.clone()).unwrap();
        let b = composite_loss_with(&pred, &labels, &img, &bias, &s, &LossConfig::default()).unwrap();
        assert_eq!(b.ce, 0.0);
        assert_eq!(b.l1_image, 0.0);
        assert_eq!(b.l1_logbias, 0.0);
        assert!((b.avg_dice - 1.0).abs() < 1e-5);
        assert_eq!(b.total, b.ce - b.avg_dice + b.l1_image + b.l1_logbias);
        assert!((b.total + 1.0).abs() < 1e-5);

        let shifted = img.with_data(img.data().iter().map(|v| v + 0.5).collect()).unwrap();
        let pred = PredictionBundle::one_hot(&labels, &s, shifted, bias.clone()).unwrap();
        let b = composite_loss_with(&pred, &labels, &img, &bias, &s, &LossConfig::default()).unwrap();
        assert!((b.total - (-1.0 + 0.5)).abs() < 1e-5);
    }

    #[test]
    fn invalid_bundles() {
        let g = Grid::isotropic([1, 1, 1], 1.0).unwrap();
        let stack = ChannelStack::new(g.clone(), 2, vec![0.7, 0.7]).unwrap();
        let one = IntensityVolume::filled(g.clone(), 1.0);
        assert!(PredictionBundle::new(stack, one.clone(), one.clone()).is_err());
        let stack = ChannelStack::new(g.clone(), 2, vec![0.5, 0.5]).unwrap();
        let zero = IntensityVolume::filled(g, 0.0);
        assert!(matches!(
            PredictionBundle::new(stack, one, zero),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn argmax_ties_go_to_lowest_id() {
        let s = small_schema();
        let g = Grid::isotropic([2, 1, 1], 1.0).unwrap();
        let pred = bundle(&g, vec![0.25, 0.0, 0.375, 0.5, 0.375, 0.5]);
        assert_eq!(pred.argmax(&s).data(), &[1, 1]);
    }
}
