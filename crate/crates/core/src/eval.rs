//! Evaluation: per-stream accuracies, the signed relative-degradation
//! metric against single-modality oracles, modality-masking probes, and
//! cross-validation aggregation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::sampling::{features_of, labels_of, SegmentRef};
use crate::data::Dataset;
use crate::error::{Result, TripError};
use crate::model::ModelParams;
use crate::numerics::DenseMatrix;
use crate::train::baseline::BaselineParams;

/// Mean and sample standard deviation over folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

fn stat_of(values: &[f64]) -> Stat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() < 2 {
        0.0
    } else {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    };
    Stat { mean, std: var.sqrt() }
}

/// Percent correct.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(TripError::Contract(format!(
            "{} predictions against {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let correct = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(100.0 * correct as f64 / predictions.len() as f64)
}

/// Mean signed relative change of method metrics against per-modality
/// baselines, in percent. `higher_is_better[i]` flips the sign so that
/// improvement is always negative (lower is better).
pub fn delta_m(p_m: &[f64], p_b: &[f64], higher_is_better: &[bool]) -> Result<f64> {
    if p_m.is_empty() || p_m.len() != p_b.len() || p_m.len() != higher_is_better.len() {
        return Err(TripError::Contract("metric vectors must be nonempty and equal length".into()));
    }
    if let Some(i) = p_b.iter().position(|&b| b == 0.0) {
        return Err(TripError::Contract(format!("baseline metric {i} is zero")));
    }
    let m = p_m.len() as f64;
    let mut total = 0.0;
    for i in 0..p_m.len() {
        let sign = if higher_is_better[i] { -1.0 } else { 1.0 };
        total += sign * (p_m[i] - p_b[i]) / p_b[i];
    }
    Ok(100.0 * total / m)
}

/// Row argmax with ties broken toward the lowest class index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

fn predictions_from_logits(logits: &DenseMatrix) -> Vec<usize> {
    (0..logits.rows()).map(|i| argmax(logits.row(i))).collect()
}

/// Predictions of one TRIP modality stream over a pool.
pub fn predict_stream(
    params: &ModelParams,
    dataset: &Dataset,
    pool: &[SegmentRef],
    modality: usize,
) -> Result<Vec<usize>> {
    let features = features_of(dataset, pool, modality)?;
    let fwd = params.forward(modality, &features)?;
    Ok(predictions_from_logits(fwd.tape.value(fwd.logits)))
}

/// Fused baseline predictions over aligned rows, with masked modalities
/// replaced by zero tensors.
pub fn predict_baseline(
    params: &BaselineParams,
    dataset: &Dataset,
    rows: &[SegmentRef],
    mask: &[bool],
) -> Result<Vec<usize>> {
    let m = params.modality_dims.len();
    let features: Vec<DenseMatrix> =
        (0..m).map(|r| features_of(dataset, rows, r)).collect::<Result<_>>()?;
    let (tape, logits) = params.forward(&features, mask)?;
    Ok(predictions_from_logits(tape.value(logits)))
}

/// Result of evaluating one model under one mask.
#[derive(Debug, Clone)]
pub struct MaskedEval {
    pub mask: Vec<bool>,
    /// Per-stream predictions; None for masked streams (TRIP) or for all but
    /// index 0 (fused baselines, which have a single prediction stream).
    pub predictions: Vec<Option<Vec<usize>>>,
    pub per_modality: Vec<Option<f64>>,
    pub average: f64,
}

/// Evaluate TRIP streams under a mask: each unmasked modality routes its own
/// pool through its own stream; masked streams are simply not run, so
/// remaining streams are untouched by construction.
pub fn masked_eval_trip(
    params: &ModelParams,
    dataset: &Dataset,
    pools: &[Vec<SegmentRef>],
    mask: &[bool],
) -> Result<MaskedEval> {
    let m = pools.len();
    if mask.len() != m {
        return Err(TripError::Contract(format!("{} mask entries for {m} modalities", mask.len())));
    }
    if !mask.iter().any(|&b| b) {
        return Err(TripError::Contract("mask excludes all modalities".into()));
    }
    let mut predictions = vec![None; m];
    let mut per_modality = vec![None; m];
    let mut accs = Vec::new();
    for r in 0..m {
        if !mask[r] {
            continue;
        }
        let preds = predict_stream(params, dataset, &pools[r], r)?;
        let acc = accuracy(&preds, &labels_of(&pools[r]))?;
        predictions[r] = Some(preds);
        per_modality[r] = Some(acc);
        accs.push(acc);
    }
    let average = accs.iter().sum::<f64>() / accs.len() as f64;
    Ok(MaskedEval { mask: mask.to_vec(), predictions, per_modality, average })
}

/// Evaluate a fused baseline under a mask on aligned rows.
pub fn masked_eval_baseline(
    params: &BaselineParams,
    dataset: &Dataset,
    rows: &[SegmentRef],
    mask: &[bool],
) -> Result<MaskedEval> {
    let preds = predict_baseline(params, dataset, rows, mask)?;
    let acc = accuracy(&preds, &labels_of(rows))?;
    let m = params.modality_dims.len();
    let mut predictions = vec![None; m];
    predictions[0] = Some(preds);
    Ok(MaskedEval {
        mask: mask.to_vec(),
        predictions,
        per_modality: vec![Some(acc); m],
        average: acc,
    })
}

/// One fold's numbers: per-modality accuracy, their mean, and the average
/// accuracy under every nonempty mask.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldEval {
    pub per_modality: Vec<f64>,
    pub average: f64,
    pub masks: Vec<(String, f64)>,
}

/// All nonempty modality subsets, with display names joining member names
/// with '+'. Ordered by ascending bit pattern, so "m0" comes before "m1"
/// before "m0+m1".
pub fn all_masks(names: &[String]) -> Vec<(String, Vec<bool>)> {
    let m = names.len();
    let mut out = Vec::new();
    for bits in 1u32..(1 << m) {
        let mask: Vec<bool> = (0..m).map(|r| bits & (1 << r) != 0).collect();
        let name = names
            .iter()
            .zip(&mask)
            .filter(|(_, &keep)| keep)
            .map(|(n, _)| n.as_str())
            .collect::<Vec<_>>()
            .join("+");
        out.push((name, mask));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub modality_names: Vec<String>,
    pub per_modality: Vec<Stat>,
    pub average: Stat,
    /// Signed relative change of per-modality means against the oracle
    /// means, when oracle runs were requested.
    pub delta_m: Option<f64>,
    pub masks: Vec<(String, Stat)>,
    pub folds: usize,
}

/// Aggregate per-fold evaluations into mean and sample std.
pub fn aggregate_cv(fold_evals: &[FoldEval], modality_names: &[String]) -> Result<MetricsReport> {
    if fold_evals.len() < 2 {
        return Err(TripError::Contract(format!(
            "aggregation needs at least 2 folds, got {}",
            fold_evals.len()
        )));
    }
    let m = modality_names.len();
    if fold_evals.iter().any(|f| f.per_modality.len() != m) {
        return Err(TripError::Contract("fold reports disagree on modality count".into()));
    }
    let per_modality: Vec<Stat> = (0..m)
        .map(|r| stat_of(&fold_evals.iter().map(|f| f.per_modality[r]).collect::<Vec<_>>()))
        .collect();
    let average = stat_of(&fold_evals.iter().map(|f| f.average).collect::<Vec<_>>());
    let mask_names: Vec<String> = fold_evals[0].masks.iter().map(|(n, _)| n.clone()).collect();
    let mut masks = Vec::new();
    for (i, name) in mask_names.iter().enumerate() {
        if fold_evals.iter().any(|f| f.masks.len() != mask_names.len() || f.masks[i].0 != *name) {
            return Err(TripError::Contract("fold reports disagree on masks".into()));
        }
        masks.push((
            name.clone(),
            stat_of(&fold_evals.iter().map(|f| f.masks[i].1).collect::<Vec<_>>()),
        ));
    }
    Ok(MetricsReport {
        modality_names: modality_names.to_vec(),
        per_modality,
        average,
        delta_m: None,
        masks,
        folds: fold_evals.len(),
    })
}

/// Flat CSV: `metric,modality,mask,mean,std`. The delta row has no spread
/// (it is computed from aggregated means), so its std field is empty.
pub fn write_report_csv(report: &MetricsReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let werr = |e: csv::Error| TripError::Data(format!("report write failed: {e}"));
    w.write_record(["metric", "modality", "mask", "mean", "std"]).map_err(werr)?;
    for (r, stat) in report.per_modality.iter().enumerate() {
        w.write_record([
            "accuracy",
            &report.modality_names[r],
            "full",
            &format!("{}", stat.mean),
            &format!("{}", stat.std),
        ])
        .map_err(werr)?;
    }
    w.write_record([
        "avg_accuracy",
        "-",
        "full",
        &format!("{}", report.average.mean),
        &format!("{}", report.average.std),
    ])
    .map_err(werr)?;
    if let Some(d) = report.delta_m {
        w.write_record(["delta_m", "-", "full", &format!("{d}"), ""]).map_err(werr)?;
    }
    for (name, stat) in &report.masks {
        w.write_record([
            "mask_accuracy",
            "-",
            name,
            &format!("{}", stat.mean),
            &format!("{}", stat.std),
        ])
        .map_err(werr)?;
    }
    w.flush()?;
    Ok(())
}

/// Human-readable rendering of the same numbers.
pub fn render_report(report: &MetricsReport, title: &str) -> String {
    let mut out = String::new();
    out.push_str(&format!("{title} ({} folds)\n", report.folds));
    for (r, stat) in report.per_modality.iter().enumerate() {
        out.push_str(&format!(
            "  accuracy[{}]: {:.2} +/- {:.2}\n",
            report.modality_names[r], stat.mean, stat.std
        ));
    }
    out.push_str(&format!(
        "  average accuracy: {:.2} +/- {:.2}\n",
        report.average.mean, report.average.std
    ));
    if let Some(d) = report.delta_m {
        out.push_str(&format!("  delta_m vs single-modality oracles: {d:.2}%\n"));
    }
    for (name, stat) in &report.masks {
        out.push_str(&format!("  mask {}: {:.2} +/- {:.2}\n", name, stat.mean, stat.std));
    }
    out
}
