//! Oversampling pools for training and evaluation.
//!
//! Pools hold references into the dataset (subject index, segment index),
//! never copies; oversampling duplicates references. Top-up draws come from
//! the original pool with replacement, so existing entries are always kept
//! and counts only grow.

use crate::data::Dataset;
use crate::error::{Result, TripError};
use crate::numerics::{DenseMatrix, Rng};

/// Reference to one segment of one subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentRef {
    pub subject: usize,
    pub segment: usize,
    pub label: usize,
}

fn subject_indices(dataset: &Dataset, ids: &[String]) -> Result<Vec<usize>> {
    ids.iter()
        .map(|id| {
            dataset
                .subject_index(id)
                .ok_or_else(|| TripError::Data(format!("unknown subject {id}")))
        })
        .collect()
}

/// All segments of the given subjects for one modality, in subject order.
fn modality_pool(dataset: &Dataset, subjects: &[usize], r: usize) -> Vec<SegmentRef> {
    let mut pool = Vec::new();
    for &si in subjects {
        let s = &dataset.subjects[si];
        if let Some(rows) = &s.segments[r] {
            for seg in 0..rows.len() {
                pool.push(SegmentRef { subject: si, segment: seg, label: s.label });
            }
        }
    }
    pool
}

fn top_up(pool: &mut Vec<SegmentRef>, target: usize, rng: &mut Rng) {
    let original = pool.len();
    while pool.len() < target {
        let pick = pool[rng.below(original)];
        pool.push(pick);
    }
}

/// Modality-balanced training pools for asynchronous training: every
/// modality's pool is topped up with replacement to the largest pool's size.
pub fn oversample_modality_balanced(
    dataset: &Dataset,
    train_ids: &[String],
    rng: &mut Rng,
) -> Result<Vec<Vec<SegmentRef>>> {
    let subjects = subject_indices(dataset, train_ids)?;
    let mut pools: Vec<Vec<SegmentRef>> =
        (0..dataset.num_modalities()).map(|r| modality_pool(dataset, &subjects, r)).collect();
    if let Some(r) = pools.iter().position(|p| p.is_empty()) {
        return Err(TripError::Config(format!(
            "training pool for modality {} is empty",
            dataset.modality_names[r]
        )));
    }
    let target = pools.iter().map(Vec::len).max().expect("nonempty");
    for pool in &mut pools {
        top_up(pool, target, rng);
    }
    Ok(pools)
}

/// Class- and modality-balanced evaluation pools: every (modality, class)
/// cell is topped up to the globally largest cell, giving uniform class
/// histograms per modality and equal totals across modalities.
pub fn oversample_eval_balanced(
    dataset: &Dataset,
    eval_ids: &[String],
    rng: &mut Rng,
) -> Result<Vec<Vec<SegmentRef>>> {
    let subjects = subject_indices(dataset, eval_ids)?;
    let m = dataset.num_modalities();
    let k = dataset.num_classes;
    let mut cells: Vec<Vec<Vec<SegmentRef>>> = vec![vec![Vec::new(); k]; m];
    for r in 0..m {
        for sref in modality_pool(dataset, &subjects, r) {
            cells[r][sref.label].push(sref);
        }
    }
    for r in 0..m {
        for j in 0..k {
            if cells[r][j].is_empty() {
                return Err(TripError::Split(format!(
                    "class {j} absent from evaluation pool of modality {}",
                    dataset.modality_names[r]
                )));
            }
        }
    }
    let target = cells.iter().flatten().map(Vec::len).max().expect("nonempty");
    let mut pools = Vec::with_capacity(m);
    for row in &mut cells {
        let mut pool = Vec::with_capacity(k * target);
        for cell in row.iter_mut() {
            top_up(cell, target, rng);
            pool.extend_from_slice(cell);
        }
        pools.push(pool);
    }
    Ok(pools)
}

/// Aligned multimodal rows (same subject, same segment index across all
/// modalities) for the given subjects; only complete subjects contribute.
pub fn aligned_pool(dataset: &Dataset, ids: &[String]) -> Result<Vec<SegmentRef>> {
    let subjects = subject_indices(dataset, ids)?;
    let mut pool = Vec::new();
    for &si in subjects.iter() {
        let s = &dataset.subjects[si];
        if !s.is_complete() {
            continue;
        }
        let n = s.segments.iter().flatten().map(Vec::len).min().unwrap_or(0);
        for seg in 0..n {
            pool.push(SegmentRef { subject: si, segment: seg, label: s.label });
        }
    }
    Ok(pool)
}

/// Class-balanced aligned evaluation pool for fused baselines: aligned rows
/// topped up per class to the largest class.
pub fn aligned_eval_balanced(
    dataset: &Dataset,
    eval_ids: &[String],
    rng: &mut Rng,
) -> Result<Vec<SegmentRef>> {
    let base = aligned_pool(dataset, eval_ids)?;
    let k = dataset.num_classes;
    let mut cells: Vec<Vec<SegmentRef>> = vec![Vec::new(); k];
    for sref in base {
        cells[sref.label].push(sref);
    }
    if let Some(j) = cells.iter().position(|c| c.is_empty()) {
        return Err(TripError::Split(format!("class {j} absent from aligned evaluation pool")));
    }
    let target = cells.iter().map(Vec::len).max().expect("nonempty");
    let mut pool = Vec::with_capacity(k * target);
    for cell in &mut cells {
        top_up(cell, target, rng);
        pool.extend_from_slice(cell);
    }
    Ok(pool)
}

/// Per-class counts of a pool, for rebalancing stats.
pub fn class_counts(pool: &[SegmentRef], num_classes: usize) -> Vec<u64> {
    let mut counts = vec![0u64; num_classes];
    for sref in pool {
        counts[sref.label] += 1;
    }
    counts
}

/// Materialize one modality's features for the referenced segments.
pub fn features_of(dataset: &Dataset, refs: &[SegmentRef], r: usize) -> Result<DenseMatrix> {
    if refs.is_empty() {
        return Err(TripError::Contract("cannot build an empty batch".into()));
    }
    let rows: Vec<Vec<f64>> = refs
        .iter()
        .map(|sref| {
            dataset.subjects[sref.subject].segments[r]
                .as_ref()
                .ok_or_else(|| {
                    TripError::Routing(format!(
                        "subject {} lacks modality {}",
                        dataset.subjects[sref.subject].subject_id, dataset.modality_names[r]
                    ))
                })
                .map(|rows| rows[sref.segment].clone())
        })
        .collect::<Result<_>>()?;
    DenseMatrix::from_rows(&rows)
}

pub fn labels_of(refs: &[SegmentRef]) -> Vec<usize> {
    refs.iter().map(|sref| sref.label).collect()
}
