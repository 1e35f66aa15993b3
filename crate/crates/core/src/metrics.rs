//! Evaluation metrics: overlap, ROI volumes and volume correlations.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::LabelSchema;
use crate::volume::LabelVolume;

/// Hard Dice `2|A∩B| / (|A| + |B|)` for each id, in the order given.
/// Both sets empty scores 1, exactly one empty scores 0.
pub fn hard_dice(a: &LabelVolume, b: &LabelVolume, label_ids: &[u32]) -> Result<Vec<f64>> {
    if !a.grid().same_geometry(b.grid()) {
        return Err(Error::invalid("segmentations are on different grids"));
    }
    let slot: HashMap<u32, usize> = label_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut counts = vec![[0u64; 3]; label_ids.len()];
    for (&x, &y) in a.data().iter().zip(b.data()) {
        if let Some(&i) = slot.get(&x) {
            counts[i][0] += 1;
            if x == y {
                counts[i][2] += 1;
            }
        }
        if let Some(&i) = slot.get(&y) {
            counts[i][1] += 1;
        }
    }
    Ok(label_ids
        .iter()
        .map(|id| {
            let [na, nb, inter] = counts[slot[id]];
            if na + nb == 0 {
                1.0
            } else {
                2.0 * inter as f64 / (na + nb) as f64
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiVolume {
    pub id: u32,
    pub name: String,
    pub volume_mm3: f64,
}

/// Left-right average of one lateral pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateralVolume {
    pub name: String,
    pub left_id: u32,
    pub right_id: u32,
    pub volume_mm3: f64,
}

/// Per-label volumes of one segmentation, optionally with Dice against a
/// reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiReport {
    pub rois: Vec<RoiVolume>,
    pub lateral: Vec<LateralVolume>,
    pub wmh_volume_mm3: f64,
    /// Hard Dice against a reference, aligned with `rois`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dice: Option<Vec<f64>>,
}

impl RoiReport {
    pub fn volume_of(&self, id: u32) -> Option<f64> {
        self.rois.iter().find(|r| r.id == id).map(|r| r.volume_mm3)
    }

    pub fn dice_of(&self, id: u32) -> Option<f64> {
        let i = self.rois.iter().position(|r| r.id == id)?;
        self.dice.as_ref().map(|d| d[i])
    }
}

/// Name shared by both sides of a lateral pair ("Left-Hippocampus" gives
/// "Hippocampus").
pub fn pair_name(schema: &LabelSchema, left: u32, right: u32) -> String {
    let l = schema.name_of(left).unwrap_or_default();
    let r = schema.name_of(right).unwrap_or_default();
    match (l.strip_prefix("Left-"), r.strip_prefix("Right-")) {
        (Some(a), Some(b)) if a == b => a.to_string(),
        _ => format!("{l}/{r}"),
    }
}

/// Voxel counts times voxel volume for every schema label except the
/// background. Ids outside the schema are ignored.
pub fn roi_volumes(seg: &LabelVolume, schema: &LabelSchema) -> RoiReport {
    let mut counts: HashMap<u32, u64> = HashMap::new();
    for &l in seg.data() {
        *counts.entry(l).or_default() += 1;
    }
    let vv = seg.grid().voxel_volume();
    let vol = |id: u32| counts.get(&id).copied().unwrap_or(0) as f64 * vv;
    let rois = schema
        .labels()
        .iter()
        .filter(|e| e.id != schema.background_id())
        .map(|e| RoiVolume {
            id: e.id,
            name: e.name.clone(),
            volume_mm3: vol(e.id),
        })
        .collect();
    let lateral = schema
        .lateral_pairs()
        .iter()
        .map(|&(l, r)| LateralVolume {
            name: pair_name(schema, l, r),
            left_id: l,
            right_id: r,
            volume_mm3: 0.5 * (vol(l) + vol(r)),
        })
        .collect();
    RoiReport {
        rois,
        lateral,
        wmh_volume_mm3: vol(schema.wmh_id()),
        dice: None,
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "vectors have different lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::invalid(format!("need at least 3 values, got {}", x.len())));
    }
    Ok(())
}

/// Product-moment correlation.
pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateInput("zero variance in correlation input".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Rank correlation: Pearson on tie-averaged ranks.
pub fn spearman_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson_correlation(&ranks(x), &ranks(y))
}
