use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GeneratorConfig;
use crate::schema::LabelSchema;

/// Per-label Gaussian intensity model, indexed by schema channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub ids: Vec<u32>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl GmmParams {
    pub fn mean_of(&self, id: u32) -> Option<f64> {
        self.ids.iter().position(|&x| x == id).map(|c| self.means[c])
    }

    pub fn std_of(&self, id: u32) -> Option<f64> {
        self.ids.iter().position(|&x| x == id).map(|c| self.stds[c])
    }

    /// Reference white matter mean: the average over the schema's WM ids.
    pub fn wm_mean(&self, schema: &LabelSchema) -> f64 {
        let wm = schema.wm_ids();
        wm.iter().filter_map(|&id| self.mean_of(id)).sum::<f64>() / wm.len() as f64
    }
}

#[inline]
pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// WMH mean conditioned on the WM mean.
///
/// Bright WM (T1-like contrast) gets darker lesions, drawn uniformly below
/// the WM mean; dark WM (T2/FLAIR-like) gets brighter lesions, drawn
/// uniformly above it. Both inequalities are strict.
pub fn sample_wmh_mean<R: Rng + ?Sized>(
    wm_mean: f64,
    mean_range: (f64, f64),
    threshold: f64,
    rng: &mut R,
) -> f64 {
    let (lo, hi) = if wm_mean > threshold {
        (mean_range.0, wm_mean)
    } else {
        (wm_mean, mean_range.1)
    };
    loop {
        let m = uniform(rng, (lo, hi));
        let ok = if wm_mean > threshold { m < wm_mean } else { m > wm_mean };
        if ok {
            return m;
        }
    }
}

pub fn sample_gmm_params<R: Rng + ?Sized>(
    schema: &LabelSchema,
    config: &GeneratorConfig,
    rng: &mut R,
) -> GmmParams {
    let ids: Vec<u32> = schema.ids().collect();
    let wmh = schema.wmh_id();
    let mut means = vec![0.0; ids.len()];
    let mut stds = vec![0.0; ids.len()];
    for (c, &id) in ids.iter().enumerate() {
        if id != wmh {
            means[c] = uniform(rng, config.mean_range);
            stds[c] = uniform(rng, config.std_range);
        }
    }
    let mut params = GmmParams { ids, means, stds };
    let wm = params.wm_mean(schema);
    let c = schema.channel_of(wmh).expect("schema contains its WMH id");
    params.means[c] = sample_wmh_mean(wm, config.mean_range, config.wmh_threshold, rng);
    params.stds[c] = uniform(rng, config.std_range);
    params
}
