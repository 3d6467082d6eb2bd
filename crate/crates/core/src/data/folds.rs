//! Subject-wise stratified k-fold splitting.
//!
//! Evaluation sets take exactly one complete subject per class per fold;
//! remaining subjects form the training side. Assignment is deterministic
//! in the seed and independent of dataset ordering: eligible subjects are
//! canonically sorted by id before the seeded shuffle.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Result, TripError};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Sync,
    Async,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Sync => write!(f, "sync"),
            Mode::Async => write!(f, "async"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub eval_subjects: Vec<String>,
    pub train_subjects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub mode: Mode,
    pub folds: Vec<Fold>,
}

/// Build the fold plan.
///
/// Eligibility for evaluation requires all modalities present. Training
/// sets keep incomplete subjects in async mode (any modality trains its own
/// stream) but drop them in sync mode, where every row needs all modalities.
pub fn make_folds(dataset: &Dataset, k: usize, mode: Mode, seed: u64) -> Result<FoldPlan> {
    if k == 0 {
        return Err(TripError::Split("k must be at least 1".into()));
    }
    let mut eligible_per_class: Vec<Vec<&str>> = vec![Vec::new(); dataset.num_classes];
    for s in &dataset.subjects {
        if s.is_complete() {
            eligible_per_class[s.label].push(&s.subject_id);
        }
    }
    for (j, pool) in eligible_per_class.iter_mut().enumerate() {
        if pool.len() < k {
            return Err(TripError::Split(format!(
                "class {j} has {} complete subjects, cannot build {k} folds",
                pool.len()
            )));
        }
        pool.sort_unstable();
    }

    let mut rng = Rng::stream(seed, "folds");
    let mut eval_sets: Vec<Vec<String>> = vec![Vec::new(); k];
    for pool in &mut eligible_per_class {
        rng.shuffle(pool);
        for (f, eval) in eval_sets.iter_mut().enumerate() {
            eval.push(pool[f].to_string());
        }
    }

    let mut folds = Vec::with_capacity(k);
    for mut eval_subjects in eval_sets {
        eval_subjects.sort_unstable();
        let mut train_subjects: Vec<String> = dataset
            .subjects
            .iter()
            .filter(|s| match mode {
                Mode::Sync => s.is_complete(),
                Mode::Async => s.segments.iter().any(|m| m.is_some()),
            })
            .map(|s| s.subject_id.clone())
            .filter(|id| !eval_subjects.contains(id))
            .collect();
        train_subjects.sort_unstable();
        if train_subjects.is_empty() {
            return Err(TripError::Split("a fold has no training subjects".into()));
        }
        folds.push(Fold { eval_subjects, train_subjects });
    }
    Ok(FoldPlan { k, mode, folds })
}
