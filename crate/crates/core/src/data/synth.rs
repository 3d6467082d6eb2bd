//! Synthetic multimodal generator with controllable class imbalance,
//! per-modality dominance, and cross-modality conflict.
//!
//! Every subject of class j carries a latent class vector c_j. Modality r
//! sees `dominance[r] * P_r c_j` (its projection of the class signal), plus
//! a conflict term `conflict * a_j * s_r * P_r v` built from one shared
//! latent nuisance direction v: class alignment a_j flips with the class,
//! modality alignment s_r flips with the modality, so the two modalities
//! push a shared representation in opposite directions along v. Subject
//! offsets and segment noise sit on top.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SubjectRecord};
use crate::error::{Result, TripError};
use crate::numerics::Rng;

const LATENT_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub modality_dims: Vec<usize>,
    /// Long-tail knob: subject count per class, descending for a tail.
    pub subjects_per_class: Vec<usize>,
    pub segments_per_subject: usize,
    /// Scale of the latent class vectors.
    pub shared_signal: f64,
    /// Per-modality SNR multiplier on the class signal.
    pub dominance: Vec<f64>,
    /// Strength of the oppositely-aligned nuisance component.
    pub conflict: f64,
    /// Probability a subject's label is replaced by a uniform other class.
    pub label_noise: f64,
    /// Std of iid noise added to every segment coordinate.
    pub segment_noise: f64,
    /// Std of the per-subject, per-modality offset.
    pub subject_offset: f64,
    /// Probability a modality is absent for a subject.
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> SyntheticSpec {
        SyntheticSpec {
            num_classes: 2,
            modality_dims: vec![6, 6],
            subjects_per_class: vec![8, 8],
            segments_per_subject: 12,
            shared_signal: 1.0,
            dominance: vec![1.0, 1.0],
            conflict: 0.0,
            label_noise: 0.0,
            segment_noise: 0.2,
            subject_offset: 0.1,
            missing_rate: 0.0,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(TripError::Config("need at least two classes".into()));
        }
        if self.modality_dims.is_empty() || self.modality_dims.len() > 3 {
            return Err(TripError::Config(format!(
                "1 to 3 modalities supported, got {}",
                self.modality_dims.len()
            )));
        }
        if self.modality_dims.iter().any(|&d| d == 0) {
            return Err(TripError::Config("modality dims must be at least 1".into()));
        }
        if self.subjects_per_class.len() != self.num_classes {
            return Err(TripError::Config(format!(
                "{} subject counts for {} classes",
                self.subjects_per_class.len(),
                self.num_classes
            )));
        }
        if self.subjects_per_class.iter().any(|&n| n == 0) {
            return Err(TripError::Config("every class needs at least one subject".into()));
        }
        if self.dominance.len() != self.modality_dims.len() {
            return Err(TripError::Config(format!(
                "{} dominance entries for {} modalities",
                self.dominance.len(),
                self.modality_dims.len()
            )));
        }
        if self.segments_per_subject == 0 {
            return Err(TripError::Config("segments_per_subject must be positive".into()));
        }
        let strengths_ok = self.shared_signal >= 0.0
            && self.conflict >= 0.0
            && self.segment_noise >= 0.0
            && self.subject_offset >= 0.0
            && self.dominance.iter().all(|&d| d >= 0.0);
        if !strengths_ok {
            return Err(TripError::Config("signal strengths must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.label_noise) || !(0.0..1.0).contains(&self.missing_rate) {
            return Err(TripError::Config(
                "label_noise must be in [0,1] and missing_rate in [0,1)".into(),
            ));
        }
        Ok(())
    }
}

fn normal_vec(n: usize, scale: f64, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| scale * rng.normal()).collect()
}

/// Class alignment of the nuisance direction: flips sign between classes.
fn class_sign(j: usize) -> f64 {
    if j % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Modality alignment: flips sign between modalities, creating the
/// opposite-push scenario on a shared representation.
fn modality_sign(r: usize) -> f64 {
    if r % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Generate a dataset from the spec. All randomness flows from spec.seed
/// through named streams, so the same spec always yields the same dataset,
/// down to CSV bytes on export.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let m = spec.modality_dims.len();
    let k = spec.num_classes;
    let mut latent_rng = Rng::stream(spec.seed, "synth-latent");
    let mut subject_rng = Rng::stream(spec.seed, "synth-subject");

    let class_latents: Vec<Vec<f64>> =
        (0..k).map(|_| normal_vec(LATENT_DIM, spec.shared_signal, &mut latent_rng)).collect();
    // Shared nuisance direction, unit length in latent space.
    let mut nuisance = normal_vec(LATENT_DIM, 1.0, &mut latent_rng);
    let nn = nuisance.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut nuisance {
        *v /= nn.max(1e-12);
    }
    // Per-modality projections, variance 1/L so projected signals keep the
    // latent scale.
    let projections: Vec<Vec<Vec<f64>>> = (0..m)
        .map(|r| {
            (0..spec.modality_dims[r])
                .map(|_| normal_vec(LATENT_DIM, (1.0 / LATENT_DIM as f64).sqrt(), &mut latent_rng))
                .collect()
        })
        .collect();

    let project = |r: usize, latent: &[f64]| -> Vec<f64> {
        projections[r]
            .iter()
            .map(|row| row.iter().zip(latent).map(|(a, b)| a * b).sum())
            .collect()
    };
    let class_features: Vec<Vec<Vec<f64>>> =
        (0..m).map(|r| (0..k).map(|j| project(r, &class_latents[j])).collect()).collect();
    let nuisance_features: Vec<Vec<f64>> = (0..m).map(|r| project(r, &nuisance)).collect();

    let mut subjects = Vec::new();
    for j in 0..k {
        for s in 0..spec.subjects_per_class[j] {
            let subject_id = format!("c{j}s{s:03}");
            let label = if spec.label_noise > 0.0 && subject_rng.next_f64() < spec.label_noise {
                // Uniform over the other classes.
                let shift = 1 + subject_rng.below(k - 1);
                (j + shift) % k
            } else {
                j
            };
            let mut present: Vec<bool> = (0..m)
                .map(|_| spec.missing_rate == 0.0 || subject_rng.next_f64() >= spec.missing_rate)
                .collect();
            if present.iter().all(|p| !p) {
                // A subject with no data is useless; keep one modality.
                present[subjects.len() % m] = true;
            }
            let mut segments: Vec<Option<Vec<Vec<f64>>>> = Vec::with_capacity(m);
            for r in 0..m {
                if !present[r] {
                    segments.push(None);
                    continue;
                }
                let d = spec.modality_dims[r];
                let offset = normal_vec(d, spec.subject_offset, &mut subject_rng);
                let base: Vec<f64> = (0..d)
                    .map(|c| {
                        spec.dominance[r] * class_features[r][j][c]
                            + spec.conflict
                                * class_sign(j)
                                * modality_sign(r)
                                * nuisance_features[r][c]
                            + offset[c]
                    })
                    .collect();
                let rows: Vec<Vec<f64>> = (0..spec.segments_per_subject)
                    .map(|_| {
                        base.iter()
                            .map(|&b| b + spec.segment_noise * subject_rng.normal())
                            .collect()
                    })
                    .collect();
                segments.push(Some(rows));
            }
            subjects.push(SubjectRecord { subject_id, label, segments });
        }
    }

    let dataset = Dataset {
        modality_names: (0..m).map(|r| format!("m{r}")).collect(),
        modality_dims: spec.modality_dims.clone(),
        num_classes: k,
        subjects,
    };
    dataset.validate()?;
    Ok(dataset)
}
