//! Margin-based class rebalancing.
//!
//! Long-tailed label distributions are countered in three stacked moves on
//! the cosine logits: a class-scaled noise term that perturbs rare-class
//! logits hardest, an additive margin subtracted from the target logit, and
//! logarithmic class weights on the cross-entropy. All three derive from the
//! per-class counts seen by the trainer after oversampling.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TripError};
use crate::numerics::{DenseMatrix, NodeId, Rng, Tape};

/// Per-class counts with the derived margins and normalized loss weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    counts: Vec<u64>,
    margins: Vec<f64>,
    weights: Vec<f64>,
}

impl ClassStats {
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// m_j = ln(N_max) - ln(N_j); zero for the largest class.
    pub fn margins(&self) -> &[f64] {
        &self.margins
    }

    /// Normalized weights, summing to the class count.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn max_margin(&self) -> f64 {
        self.margins.iter().cloned().fold(0.0, f64::max)
    }

    /// Stats for a nominally balanced problem: zero margins, unit weights.
    /// Used when rebalancing is disabled so the loss reduces to plain
    /// cross-entropy exactly.
    pub fn balanced(num_classes: usize) -> ClassStats {
        ClassStats {
            counts: vec![1; num_classes],
            margins: vec![0.0; num_classes],
            weights: vec![1.0; num_classes],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebalanceConfig {
    /// Noise magnitude applied to the margin-scaled perturbation.
    pub eta: f64,
    /// Standard deviation of the clamped normal noise draws.
    pub sigma: f64,
    /// Additive margin subtracted from the target logit.
    pub margin_m: f64,
    /// Guard inside the weight logarithm so the largest class keeps a
    /// positive raw weight.
    pub epsilon: f64,
    /// Divisor on raw weights. Normalization cancels it; kept so configs can
    /// state it explicitly.
    pub div: f64,
}

impl Default for RebalanceConfig {
    fn default() -> RebalanceConfig {
        RebalanceConfig { eta: 0.1, sigma: 1.0, margin_m: 0.4, epsilon: 1e-6, div: 1.0 }
    }
}

impl RebalanceConfig {
    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.eta, self.sigma, self.margin_m, self.epsilon, self.div]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(TripError::Config("rebalance fields must be finite".into()));
        }
        if self.eta < 0.0 || self.sigma < 0.0 || self.margin_m < 0.0 {
            return Err(TripError::Config(
                "eta, sigma, margin_m must be nonnegative".into(),
            ));
        }
        if self.epsilon <= 0.0 || self.div <= 0.0 {
            return Err(TripError::Config("epsilon and div must be positive".into()));
        }
        Ok(())
    }

    /// Copy with noise and margin turned off; weights stay untouched.
    pub fn without_adjustments(&self) -> RebalanceConfig {
        RebalanceConfig { eta: 0.0, margin_m: 0.0, ..self.clone() }
    }
}

/// Derive margins and weights from per-class counts.
///
/// margins: m_j = ln(N_max) - ln(N_j)
/// weights: w_j proportional to ln(N_max / N_j + epsilon) / div, rescaled so
/// they sum to the class count.
pub fn compute_class_stats(counts: &[u64], cfg: &RebalanceConfig) -> Result<ClassStats> {
    cfg.validate()?;
    if counts.is_empty() {
        return Err(TripError::Contract("need at least one class".into()));
    }
    if counts.iter().any(|&n| n == 0) {
        return Err(TripError::Contract(
            "every class needs at least one sample; oversample before computing stats".into(),
        ));
    }
    let n_max = *counts.iter().max().expect("nonempty") as f64;
    let ln_max = n_max.ln();
    let margins: Vec<f64> = counts.iter().map(|&n| ln_max - (n as f64).ln()).collect();
    let raw: Vec<f64> =
        counts.iter().map(|&n| (n_max / n as f64 + cfg.epsilon).ln() / cfg.div).collect();
    let sum: f64 = raw.iter().sum();
    let k = counts.len() as f64;
    let weights = raw.into_iter().map(|w| w * k / sum).collect();
    Ok(ClassStats { counts: counts.to_vec(), margins, weights })
}

/// Build the frozen logit shift for one batch: class-scaled noise on every
/// entry plus the additive margin on each row's target entry.
///
/// Noise draws happen per sample, then per class, in row-major order, one
/// clamped normal each, only when the margin vector is not identically zero.
pub fn build_logit_shift(
    batch: usize,
    labels: &[usize],
    stats: &ClassStats,
    cfg: &RebalanceConfig,
    rng: &mut Rng,
) -> Result<DenseMatrix> {
    let k = stats.num_classes();
    if batch == 0 {
        return Err(TripError::Contract("batch must be nonempty".into()));
    }
    if labels.len() != batch {
        return Err(TripError::Contract(format!("{} labels for batch {batch}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(TripError::Contract(format!("label {bad} out of range for {k} classes")));
    }
    let mut shift = DenseMatrix::zeros(batch, k);
    let max_m = stats.max_margin();
    if max_m > 0.0 {
        for i in 0..batch {
            for j in 0..k {
                let delta = rng.sample_clamped_normal(cfg.sigma);
                let v = -cfg.eta * delta.abs() * stats.margins()[j] / max_m;
                shift.set(i, j, v);
            }
        }
    }
    for (i, &y) in labels.iter().enumerate() {
        shift.set(i, y, shift.get(i, y) - cfg.margin_m);
    }
    Ok(shift)
}

/// Append the rebalanced loss to the tape and return its scalar node.
///
/// The shift (noise + margin) is recorded as a constant, so backward treats
/// the draws as frozen and the loss stays differentiable in the logits.
pub fn rebalanced_loss(
    tape: &mut Tape,
    logits: NodeId,
    labels: &[usize],
    stats: &ClassStats,
    cfg: &RebalanceConfig,
    rng: &mut Rng,
) -> Result<NodeId> {
    cfg.validate()?;
    let z = tape.value(logits);
    if z.cols() != stats.num_classes() {
        return Err(TripError::Shape(format!(
            "{} logit columns against {} classes",
            z.cols(),
            stats.num_classes()
        )));
    }
    let batch = z.rows();
    let shift = build_logit_shift(batch, labels, stats, cfg, rng)?;
    tape.weighted_softmax_ce(logits, labels, stats.weights(), shift)
}
