use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{segment, Predictor, SegmentOptions};
use crate::error::{Error, Result};
use crate::metrics::{hard_dice, pair_name, pearson_correlation, roi_volumes, spearman_correlation, RoiReport};
use crate::schema::LabelSchema;
use crate::volume::{resample_labels_to_grid, Boundary, IntensityVolume, LabelVolume};

/// A scan with its reference segmentation (on any grid).
#[derive(Debug, Clone)]
pub struct EvalCase {
    pub name: String,
    pub input: IntensityVolume,
    pub reference: LabelVolume,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEvaluation {
    pub case: String,
    /// Volumes of the prediction with Dice against the reference.
    pub prediction: RoiReport,
    /// Volumes of the reference on its own grid.
    pub reference: RoiReport,
    /// Mean Dice over the schema's evaluation ROIs.
    pub mean_dice: f64,
    pub wmh_dice: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMean {
    pub id: u32,
    pub name: String,
    pub dice: f64,
}

/// Correlation across cases between predicted and reference volumes.
/// `None` where undefined (fewer than 3 cases or constant volumes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub roi: String,
    pub ids: Vec<u32>,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub cases: usize,
    pub mean_dice: Vec<LabelMean>,
    pub mean_anatomy_dice: f64,
    pub mean_wmh_dice: f64,
    pub mean_wmh_volume_mm3: f64,
    pub correlations: Vec<CorrelationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub cases: Vec<CaseEvaluation>,
    pub summary: EvaluationSummary,
}

fn evaluate_case(name: &str, pred: &LabelVolume, reference: &LabelVolume, schema: &LabelSchema) -> Result<CaseEvaluation> {
    schema.validate(pred)?;
    schema.validate(reference)?;
    let on_pred = resample_labels_to_grid(reference, pred.grid(), Boundary::Background, schema.background_id());
    let mut prediction = roi_volumes(pred, schema);
    let ids: Vec<u32> = prediction.rois.iter().map(|r| r.id).collect();
    let dice = hard_dice(pred, &on_pred, &ids)?;
    let eval_ids = schema.evaluation_ids();
    let eval_dice: Vec<f64> = ids
        .iter()
        .zip(&dice)
        .filter(|(id, _)| eval_ids.contains(id))
        .map(|(_, &d)| d)
        .collect();
    let mean_dice = eval_dice.iter().sum::<f64>() / eval_dice.len().max(1) as f64;
    let wmh_dice = ids
        .iter()
        .position(|&id| id == schema.wmh_id())
        .map(|i| dice[i])
        .unwrap_or(1.0);
    prediction.dice = Some(dice);
    Ok(CaseEvaluation {
        case: name.to_string(),
        prediction,
        reference: roi_volumes(reference, schema),
        mean_dice,
        wmh_dice,
    })
}

fn correlate(roi: String, ids: Vec<u32>, x: Vec<f64>, y: Vec<f64>) -> CorrelationRow {
    CorrelationRow {
        roi,
        ids,
        pearson: pearson_correlation(&x, &y).ok(),
        spearman: spearman_correlation(&x, &y).ok(),
    }
}

fn summarize(cases: &[CaseEvaluation], schema: &LabelSchema) -> EvaluationSummary {
    let n = cases.len() as f64;
    let mean = |f: &dyn Fn(&CaseEvaluation) -> f64| cases.iter().map(f).sum::<f64>() / n;
    let mean_dice = cases[0]
        .prediction
        .rois
        .iter()
        .enumerate()
        .map(|(i, r)| LabelMean {
            id: r.id,
            name: r.name.clone(),
            dice: mean(&|c| c.prediction.dice.as_ref().map_or(0.0, |d| d[i])),
        })
        .collect();

    let eval_ids = schema.evaluation_ids();
    let volumes = |sel: &dyn Fn(&RoiReport) -> f64| -> (Vec<f64>, Vec<f64>) {
        cases
            .iter()
            .map(|c| (sel(&c.reference), sel(&c.prediction)))
            .unzip()
    };
    let mut correlations = Vec::new();
    for &(l, r) in schema.lateral_pairs() {
        if eval_ids.contains(&l) && eval_ids.contains(&r) {
            let (x, y) = volumes(&|rep| 0.5 * (rep.volume_of(l).unwrap_or(0.0) + rep.volume_of(r).unwrap_or(0.0)));
            correlations.push(correlate(pair_name(schema, l, r), vec![l, r], x, y));
        }
    }
    for &id in &eval_ids {
        let (x, y) = volumes(&|rep| rep.volume_of(id).unwrap_or(0.0));
        let name = schema.name_of(id).unwrap_or_default().to_string();
        correlations.push(correlate(name, vec![id], x, y));
    }
    let wmh = schema.wmh_id();
    let (x, y) = volumes(&|rep| rep.wmh_volume_mm3);
    correlations.push(correlate(
        schema.name_of(wmh).unwrap_or("WMH").to_string(),
        vec![wmh],
        x,
        y,
    ));

    EvaluationSummary {
        cases: cases.len(),
        mean_dice,
        mean_anatomy_dice: mean(&|c| c.mean_dice),
        mean_wmh_dice: mean(&|c| c.wmh_dice),
        mean_wmh_volume_mm3: mean(&|c| c.prediction.wmh_volume_mm3),
        correlations,
    }
}

/// Scores predicted segmentations against references, case by case and
/// across the cohort. References are brought onto the prediction grid by
/// nearest neighbour for Dice; reference volumes use the reference grid.
pub fn evaluate_segmentations(
    pairs: &[(String, LabelVolume, LabelVolume)],
    schema: &LabelSchema,
) -> Result<EvaluationReport> {
    if pairs.is_empty() {
        return Err(Error::invalid("no cases to evaluate"));
    }
    let cases = pairs
        .par_iter()
        .map(|(name, pred, reference)| evaluate_case(name, pred, reference, schema))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&cases, schema);
    Ok(EvaluationReport { cases, summary })
}

/// Segments every case with `predictor`, then evaluates.
pub fn evaluate_dataset(
    cases: &[EvalCase],
    predictor: &dyn Predictor,
    schema: &LabelSchema,
    options: &SegmentOptions,
) -> Result<EvaluationReport> {
    if cases.is_empty() {
        return Err(Error::invalid("no cases to evaluate"));
    }
    let pairs = cases
        .par_iter()
        .map(|c| {
            let seg = segment(&c.input, predictor, schema, options)?;
            Ok((c.name.clone(), seg.segmentation, c.reference.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate_segmentations(&pairs, schema)
}
