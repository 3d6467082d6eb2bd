//! Datasets: synthetic generation, CSV ingestion and export, oversampling
//! pools, and subject-wise stratified folds.

pub mod csvio;
pub mod folds;
pub mod sampling;
pub mod synth;

use crate::error::{Result, TripError};

/// One subject's data across modalities. A modality is either present with
/// all its segments, or absent entirely; `segments[r]` is `None` when the
/// availability mask excludes modality r.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub label: usize,
    pub segments: Vec<Option<Vec<Vec<f64>>>>,
}

impl SubjectRecord {
    pub fn has_modality(&self, r: usize) -> bool {
        self.segments.get(r).map(|s| s.is_some()).unwrap_or(false)
    }

    pub fn is_complete(&self) -> bool {
        self.segments.iter().all(|s| s.is_some())
    }

    /// Availability mask over modalities.
    pub fn mask(&self) -> Vec<bool> {
        self.segments.iter().map(|s| s.is_some()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub modality_names: Vec<String>,
    pub modality_dims: Vec<usize>,
    pub num_classes: usize,
    pub subjects: Vec<SubjectRecord>,
}

impl Dataset {
    pub fn num_modalities(&self) -> usize {
        self.modality_names.len()
    }

    pub fn subject_index(&self, id: &str) -> Option<usize> {
        self.subjects.iter().position(|s| s.subject_id == id)
    }

    /// Check the structural invariants: unique ids, labels in range, every
    /// present segment row at its modality's declared width.
    pub fn validate(&self) -> Result<()> {
        if self.modality_names.len() != self.modality_dims.len() {
            return Err(TripError::Data("modality names and dims disagree".into()));
        }
        if self.num_classes < 2 {
            return Err(TripError::Data("dataset needs at least two classes".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.subjects {
            if !seen.insert(&s.subject_id) {
                return Err(TripError::Data(format!("duplicate subject id {}", s.subject_id)));
            }
            if s.label >= self.num_classes {
                return Err(TripError::Data(format!(
                    "subject {} label {} out of range",
                    s.subject_id, s.label
                )));
            }
            if s.segments.len() != self.modality_dims.len() {
                return Err(TripError::Data(format!(
                    "subject {} has {} modality slots, dataset has {}",
                    s.subject_id,
                    s.segments.len(),
                    self.modality_dims.len()
                )));
            }
            for (r, seg) in s.segments.iter().enumerate() {
                if let Some(rows) = seg {
                    if rows.is_empty() {
                        return Err(TripError::Data(format!(
                            "subject {} modality {} present but empty",
                            s.subject_id, r
                        )));
                    }
                    if let Some(bad) = rows.iter().find(|row| row.len() != self.modality_dims[r]) {
                        return Err(TripError::Data(format!(
                            "subject {} modality {} row width {} != {}",
                            s.subject_id,
                            r,
                            bad.len(),
                            self.modality_dims[r]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Subjects (by index) that have every modality present.
    pub fn complete_subjects(&self) -> Vec<usize> {
        (0..self.subjects.len()).filter(|&i| self.subjects[i].is_complete()).collect()
    }

    /// Single-modality view for training per-stream oracles. Keeps only
    /// subjects that carry modality `r`, in original order. Returns the view
    /// and a map from old subject index to new index (`None` when dropped).
    pub fn restrict_to_modality(&self, r: usize) -> Result<(Dataset, Vec<Option<usize>>)> {
        if r >= self.num_modalities() {
            return Err(TripError::Routing(format!(
                "modality {r} out of range for {} streams",
                self.num_modalities()
            )));
        }
        let mut map = vec![None; self.subjects.len()];
        let mut subjects = Vec::new();
        for (i, s) in self.subjects.iter().enumerate() {
            if s.has_modality(r) {
                map[i] = Some(subjects.len());
                subjects.push(SubjectRecord {
                    subject_id: s.subject_id.clone(),
                    label: s.label,
                    segments: vec![s.segments[r].clone()],
                });
            }
        }
        let view = Dataset {
            modality_names: vec![self.modality_names[r].clone()],
            modality_dims: vec![self.modality_dims[r]],
            num_classes: self.num_classes,
            subjects,
        };
        Ok((view, map))
    }
}
