//! Data pipeline tests: generator structure and algebra, CSV round trips,
//! loader rejection paths, fold construction, and sampling pools.

use std::path::{Path, PathBuf};

use trip_core::data::csvio::{export_csv, load_csv};
use trip_core::data::folds::{make_folds, Mode};
use trip_core::data::sampling::{
    aligned_eval_balanced, aligned_pool, class_counts, features_of, labels_of,
    oversample_eval_balanced, oversample_modality_balanced, SegmentRef,
};
use trip_core::data::synth::{generate, SyntheticSpec};
use trip_core::data::{Dataset, SubjectRecord};
use trip_core::numerics::Rng;
use trip_core::{Result, TripError};

fn block_class(subject_id: &str) -> usize {
    let digits: String = subject_id[1..].chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().expect("subject id starts with c<class>")
}

#[test]
fn generated_shape_matches_the_spec() {
    let spec = SyntheticSpec {
        num_classes: 3,
        modality_dims: vec![5, 4],
        subjects_per_class: vec![4, 3, 2],
        segments_per_subject: 6,
        dominance: vec![1.0, 1.0],
        ..SyntheticSpec::default()
    };
    let dataset = generate(&spec).unwrap();
    assert_eq!(dataset.modality_names, vec!["m0", "m1"]);
    assert_eq!(dataset.modality_dims, vec![5, 4]);
    assert_eq!(dataset.num_classes, 3);
    assert_eq!(dataset.subjects.len(), 9);
    assert_eq!(dataset.subjects[0].subject_id, "c0s000");
    assert_eq!(dataset.subjects[4].subject_id, "c1s000");
    assert_eq!(dataset.subjects[8].subject_id, "c2s001");
    for s in &dataset.subjects {
        assert_eq!(s.label, block_class(&s.subject_id));
        assert!(s.is_complete());
        for (r, rows) in s.segments.iter().enumerate() {
            let rows = rows.as_ref().unwrap();
            assert_eq!(rows.len(), 6);
            assert!(rows.iter().all(|row| row.len() == spec.modality_dims[r]));
        }
    }
}

#[test]
fn generation_is_deterministic_and_seed_sensitive() {
    let spec = SyntheticSpec { missing_rate: 0.3, label_noise: 0.2, ..SyntheticSpec::default() };
    let a = generate(&spec).unwrap();
    let b = generate(&spec).unwrap();
    assert_eq!(a, b);
    let c = generate(&SyntheticSpec { seed: spec.seed + 1, ..spec }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn every_subject_keeps_one_modality_under_heavy_missingness() {
    let spec = SyntheticSpec {
        modality_dims: vec![3, 3],
        subjects_per_class: vec![20, 20],
        missing_rate: 0.9,
        dominance: vec![1.0, 1.0],
        ..SyntheticSpec::default()
    };
    let dataset = generate(&spec).unwrap();
    assert!(dataset.subjects.iter().all(|s| s.segments.iter().any(|m| m.is_some())));
    assert!(dataset.subjects.iter().any(|s| !s.is_complete()));
    for r in 0..2 {
        assert!(dataset.subjects.iter().any(|s| !s.has_modality(r)));
        assert!(dataset.subjects.iter().any(|s| s.has_modality(r)));
    }
}

#[test]
fn full_label_noise_always_flips_the_block_class() {
    let spec = SyntheticSpec {
        num_classes: 3,
        subjects_per_class: vec![5, 5, 5],
        label_noise: 1.0,
        ..SyntheticSpec::default()
    };
    let dataset = generate(&spec).unwrap();
    for s in &dataset.subjects {
        assert_ne!(s.label, block_class(&s.subject_id), "subject {}", s.subject_id);
        assert!(s.label < 3);
    }
}

#[test]
fn zero_noise_zero_offset_collapses_each_class_to_a_prototype() {
    let spec = SyntheticSpec {
        subjects_per_class: vec![3, 3],
        segment_noise: 0.0,
        subject_offset: 0.0,
        ..SyntheticSpec::default()
    };
    let dataset = generate(&spec).unwrap();
    let mut prototypes: Vec<Vec<Vec<f64>>> = vec![Vec::new(); 2];
    for s in &dataset.subjects {
        for (r, rows) in s.segments.iter().enumerate() {
            let rows = rows.as_ref().unwrap();
            let first = &rows[0];
            assert!(rows.iter().all(|row| row == first), "segments vary within a subject");
            if let Some(proto) = prototypes[s.label].get(r) {
                assert_eq!(proto, first, "subjects vary within class {}", s.label);
            } else {
                prototypes[s.label].push(first.clone());
            }
        }
    }
    assert_ne!(prototypes[0], prototypes[1]);
}

#[test]
fn conflict_term_is_antisymmetric_across_classes() {
    let spec = SyntheticSpec {
        modality_dims: vec![4, 4],
        subjects_per_class: vec![2, 2],
        dominance: vec![0.0, 0.0],
        conflict: 0.7,
        segment_noise: 0.0,
        subject_offset: 0.0,
        ..SyntheticSpec::default()
    };
    let dataset = generate(&spec).unwrap();
    let row = |j: usize, r: usize| -> Vec<f64> {
        let s = dataset.subjects.iter().find(|s| s.label == j).unwrap();
        s.segments[r].as_ref().unwrap()[0].clone()
    };
    for r in 0..2 {
        let pos = row(0, r);
        let neg = row(1, r);
        assert!(pos.iter().any(|&v| v != 0.0));
        for (a, b) in pos.iter().zip(&neg) {
            assert_eq!(*a, -b, "conflict rows must mirror exactly in modality {r}");
        }
    }
}

fn centroid_probe_accuracy(dataset: &Dataset, r: usize) -> f64 {
    let k = dataset.num_classes;
    let d = dataset.modality_dims[r];
    let mut sums = vec![vec![0.0f64; d]; k];
    let mut counts = vec![0usize; k];
    for s in &dataset.subjects {
        if let Some(rows) = &s.segments[r] {
            for row in rows {
                for (acc, v) in sums[s.label].iter_mut().zip(row) {
                    *acc += v;
                }
                counts[s.label] += 1;
            }
        }
    }
    let centroids: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(sum, &n)| sum.iter().map(|v| v / n as f64).collect())
        .collect();
    let dist2 = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };
    let mut hits = 0usize;
    let mut total = 0usize;
    for s in &dataset.subjects {
        if let Some(rows) = &s.segments[r] {
            for row in rows {
                let best = (0..k)
                    .min_by(|&a, &b| {
                        dist2(row, &centroids[a]).partial_cmp(&dist2(row, &centroids[b])).unwrap()
                    })
                    .unwrap();
                hits += usize::from(best == s.label);
                total += 1;
            }
        }
    }
    hits as f64 / total as f64
}

#[test]
fn dominance_controls_which_modality_carries_the_signal() {
    let spec = SyntheticSpec {
        subjects_per_class: vec![12, 12],
        segments_per_subject: 10,
        dominance: vec![2.0, 0.0],
        segment_noise: 0.3,
        subject_offset: 0.15,
        seed: 3,
        ..SyntheticSpec::default()
    };
    let dataset = generate(&spec).unwrap();
    let strong = centroid_probe_accuracy(&dataset, 0);
    let blind = centroid_probe_accuracy(&dataset, 1);
    assert!(strong >= 0.95, "dominant modality probe at {strong}");
    assert!(blind <= 0.65, "signal-free modality probe at {blind}, near chance expected");
}

#[test]
fn generator_rejects_invalid_specs() {
    let base = SyntheticSpec::default();
    let bad = [
        SyntheticSpec { num_classes: 1, subjects_per_class: vec![4], ..base.clone() },
        SyntheticSpec { modality_dims: vec![], dominance: vec![], ..base.clone() },
        SyntheticSpec {
            modality_dims: vec![2; 4],
            dominance: vec![1.0; 4],
            ..base.clone()
        },
        SyntheticSpec { modality_dims: vec![6, 0], ..base.clone() },
        SyntheticSpec { subjects_per_class: vec![8], ..base.clone() },
        SyntheticSpec { subjects_per_class: vec![8, 0], ..base.clone() },
        SyntheticSpec { dominance: vec![1.0], ..base.clone() },
        SyntheticSpec { segments_per_subject: 0, ..base.clone() },
        SyntheticSpec { segment_noise: -0.1, ..base.clone() },
        SyntheticSpec { label_noise: 1.5, ..base.clone() },
        SyntheticSpec { missing_rate: 1.0, ..base.clone() },
    ];
    for spec in bad {
        assert!(
            matches!(generate(&spec), Err(TripError::Config(_))),
            "spec accepted: {spec:?}"
        );
    }
}

fn modality_files(dataset: &Dataset, dir: &Path) -> Vec<(String, PathBuf)> {
    dataset
        .modality_names
        .iter()
        .map(|n| (n.clone(), dir.join(format!("{n}.csv"))))
        .collect()
}

#[test]
fn csv_round_trip_reproduces_the_dataset_exactly() {
    let spec = SyntheticSpec {
        num_classes: 3,
        modality_dims: vec![4, 3],
        subjects_per_class: vec![5, 4, 3],
        missing_rate: 0.35,
        label_noise: 0.25,
        dominance: vec![1.0, 1.0],
        seed: 11,
        ..SyntheticSpec::default()
    };
    let dataset = generate(&spec).unwrap();
    let mut seen_labels: Vec<usize> = dataset.subjects.iter().map(|s| s.label).collect();
    seen_labels.sort_unstable();
    seen_labels.dedup();
    assert_eq!(seen_labels, vec![0, 1, 2], "every class must appear for a faithful reload");

    let dir = tempfile::tempdir().unwrap();
    let written = export_csv(&dataset, dir.path()).unwrap();
    assert_eq!(written.len(), 3);
    assert!(written[0].ends_with("manifest.csv"));

    let loaded = load_csv(&modality_files(&dataset, dir.path()), &written[0]).unwrap();
    assert_eq!(loaded, dataset);
}

#[test]
fn csv_export_is_byte_deterministic() {
    let spec = SyntheticSpec { missing_rate: 0.2, ..SyntheticSpec::default() };
    let dataset = generate(&spec).unwrap();
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let wa = export_csv(&dataset, da.path()).unwrap();
    let wb = export_csv(&dataset, db.path()).unwrap();
    assert_eq!(wa.len(), wb.len());
    for (pa, pb) in wa.iter().zip(&wb) {
        assert_eq!(pa.file_name(), pb.file_name());
        assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
    }
}

#[test]
fn absent_modality_file_drops_the_modality_on_load() {
    let dataset = generate(&SyntheticSpec::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = export_csv(&dataset, dir.path()).unwrap();
    std::fs::remove_file(dir.path().join("m1.csv")).unwrap();

    let loaded = load_csv(&modality_files(&dataset, dir.path()), &written[0]).unwrap();
    let (view, _) = dataset.restrict_to_modality(0).unwrap();
    assert_eq!(loaded, view);
}

fn write_files(dir: &Path, files: &[(&str, &str)]) {
    for (name, contents) in files {
        std::fs::write(dir.join(name), contents).unwrap();
    }
}

fn try_load(dir: &Path, names: &[&str]) -> Result<Dataset> {
    let files: Vec<(String, PathBuf)> =
        names.iter().map(|n| (n.to_string(), dir.join(format!("{n}.csv")))).collect();
    load_csv(&files, &dir.join("manifest.csv"))
}

fn assert_data_err(result: Result<Dataset>, needle: &str) {
    match result {
        Err(TripError::Data(msg)) => {
            assert!(msg.contains(needle), "message {msg:?} lacks {needle:?}")
        }
        other => panic!("expected data error containing {needle:?}, got {other:?}"),
    }
}

const MANIFEST_OK: &str = "subject_id,label,modalities_present\na,0,m0\nb,1,m0\n";
const M0_OK: &str = "subject_id,segment_id,label,f0\na,0,0,1.5\nb,0,1,-2\n";

#[test]
fn loader_rejects_manifest_problems() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    write_files(d, &[("manifest.csv", "id,label,modalities_present\na,0,m0\n"), ("m0.csv", M0_OK)]);
    assert_data_err(try_load(d, &["m0"]), "manifest header must be");

    write_files(d, &[("manifest.csv", "subject_id,label,modalities_present\na,0,m0\na,1,m0\n")]);
    assert_data_err(try_load(d, &["m0"]), "line 3: duplicate subject a");

    write_files(d, &[("manifest.csv", "subject_id,label,modalities_present\na,x,m0\n")]);
    assert_data_err(try_load(d, &["m0"]), "bad label for subject a");

    write_files(d, &[("manifest.csv", "subject_id,label,modalities_present\n")]);
    assert_data_err(try_load(d, &["m0"]), "manifest has no subjects");

    write_files(d, &[("manifest.csv", MANIFEST_OK)]);
    assert_data_err(try_load(d, &["missing"]), "no modality file exists");
    assert_data_err(load_csv(&[], &d.join("manifest.csv")), "at least one modality file");
}

#[test]
fn loader_rejects_modality_file_problems() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_files(d, &[("manifest.csv", MANIFEST_OK), ("m0.csv", M0_OK)]);
    let ok = try_load(d, &["m0"]).unwrap();
    assert_eq!(ok.subjects.len(), 2);

    write_files(d, &[("m0.csv", "subject_id,segment_id,label,f0\na,0,1,1.5\nb,0,1,-2\n")]);
    assert_data_err(try_load(d, &["m0"]), "conflicts with manifest label 0 for subject a");

    write_files(d, &[("m0.csv", "subject_id,segment_id,label,f0\na,0,0,1.5\na,0,0,2.5\nb,0,1,-2\n")]);
    assert_data_err(try_load(d, &["m0"]), "duplicate segment 0 for subject a");

    write_files(d, &[("m0.csv", "subject_id,segment_id,label,f0\na,0,0,oops\nb,0,1,-2\n")]);
    assert_data_err(try_load(d, &["m0"]), "bad float 'oops' in column f0");

    write_files(d, &[("m0.csv", "subject_id,segment_id,label,f0\nghost,0,0,1.5\n")]);
    assert_data_err(try_load(d, &["m0"]), "subject ghost not in manifest");

    write_files(d, &[("m0.csv", "subject_id,segment_id,label,feat0\na,0,0,1.5\n")]);
    assert_data_err(try_load(d, &["m0"]), "expected f0");

    // Rows exist for a modality the manifest never declared for that subject.
    write_files(
        d,
        &[
            ("manifest.csv", "subject_id,label,modalities_present\na,0,m0\nb,1,\n"),
            ("m0.csv", M0_OK),
        ],
    );
    assert_data_err(try_load(d, &["m0"]), "manifest does not declare");
}

#[test]
fn restrict_to_modality_builds_a_consistent_view() {
    let spec = SyntheticSpec {
        modality_dims: vec![6, 4],
        subjects_per_class: vec![10, 10],
        missing_rate: 0.4,
        dominance: vec![1.0, 1.0],
        ..SyntheticSpec::default()
    };
    let dataset = generate(&spec).unwrap();
    let (view, map) = dataset.restrict_to_modality(1).unwrap();
    assert_eq!(view.modality_names, vec!["m1"]);
    assert_eq!(view.modality_dims, vec![4]);
    assert_eq!(view.num_classes, dataset.num_classes);
    view.validate().unwrap();

    let mut expected_new = 0usize;
    for (i, s) in dataset.subjects.iter().enumerate() {
        if s.has_modality(1) {
            let new = map[i].expect("kept subject must map");
            assert_eq!(new, expected_new);
            let v = &view.subjects[new];
            assert_eq!(v.subject_id, s.subject_id);
            assert_eq!(v.label, s.label);
            assert_eq!(v.segments, vec![s.segments[1].clone()]);
            expected_new += 1;
        } else {
            assert_eq!(map[i], None);
        }
    }
    assert_eq!(view.subjects.len(), expected_new);
    assert!(expected_new < dataset.subjects.len(), "missingness should drop someone");

    assert!(matches!(dataset.restrict_to_modality(5), Err(TripError::Routing(_))));
}

#[test]
fn folds_partition_eligible_subjects_without_leaks() {
    let spec = SyntheticSpec {
        subjects_per_class: vec![12, 12],
        missing_rate: 0.25,
        seed: 21,
        ..SyntheticSpec::default()
    };
    let dataset = generate(&spec).unwrap();
    let complete: Vec<String> = dataset
        .subjects
        .iter()
        .filter(|s| s.is_complete())
        .map(|s| s.subject_id.clone())
        .collect();

    let plan = make_folds(&dataset, 3, Mode::Sync, 5).unwrap();
    assert_eq!(plan.k, 3);
    assert_eq!(plan.folds.len(), 3);
    let mut all_eval: Vec<&String> = Vec::new();
    for fold in &plan.folds {
        assert_eq!(fold.eval_subjects.len(), 2, "one complete subject per class");
        let labels: Vec<usize> = fold
            .eval_subjects
            .iter()
            .map(|id| dataset.subjects[dataset.subject_index(id).unwrap()].label)
            .collect();
        assert!(labels.contains(&0) && labels.contains(&1));
        for id in &fold.eval_subjects {
            assert!(complete.contains(id), "eval subject {id} must be complete");
            assert!(!fold.train_subjects.contains(id), "{id} leaks into training");
        }
        let mut expected: Vec<String> =
            complete.iter().filter(|id| !fold.eval_subjects.contains(id)).cloned().collect();
        expected.sort_unstable();
        assert_eq!(fold.train_subjects, expected);
        all_eval.extend(&fold.eval_subjects);
    }
    let total = all_eval.len();
    all_eval.sort_unstable();
    all_eval.dedup();
    assert_eq!(all_eval.len(), total, "folds reuse an evaluation subject");

    // Async training keeps incomplete subjects; every generated subject has
    // at least one modality, so the train side is everyone minus eval.
    let plan = make_folds(&dataset, 3, Mode::Async, 5).unwrap();
    for fold in &plan.folds {
        assert_eq!(fold.train_subjects.len(), dataset.subjects.len() - 2);
    }
}

#[test]
fn fold_plans_are_deterministic_and_ignore_subject_order() {
    let spec = SyntheticSpec {
        subjects_per_class: vec![10, 10],
        missing_rate: 0.2,
        ..SyntheticSpec::default()
    };
    let dataset = generate(&spec).unwrap();
    let a = make_folds(&dataset, 4, Mode::Sync, 9).unwrap();
    let b = make_folds(&dataset, 4, Mode::Sync, 9).unwrap();
    assert_eq!(a, b);

    let mut reversed = dataset.clone();
    reversed.subjects.reverse();
    let c = make_folds(&reversed, 4, Mode::Sync, 9).unwrap();
    assert_eq!(a, c, "assignment must not depend on subject order");

    let d = make_folds(&dataset, 4, Mode::Sync, 10).unwrap();
    assert_ne!(a, d, "a different seed should shuffle differently");
}

#[test]
fn fold_construction_rejects_impossible_requests() {
    let dataset = generate(&SyntheticSpec {
        subjects_per_class: vec![3, 5],
        ..SyntheticSpec::default()
    })
    .unwrap();
    assert!(matches!(make_folds(&dataset, 0, Mode::Sync, 1), Err(TripError::Split(_))));
    match make_folds(&dataset, 4, Mode::Sync, 1) {
        Err(TripError::Split(msg)) => assert!(msg.contains("class 0"), "got {msg:?}"),
        other => panic!("expected split error, got {other:?}"),
    }
}

#[test]
fn modality_balanced_pools_top_up_to_the_largest() {
    let spec = SyntheticSpec {
        subjects_per_class: vec![10, 10],
        missing_rate: 0.4,
        ..SyntheticSpec::default()
    };
    let dataset = generate(&spec).unwrap();
    let ids: Vec<String> = dataset.subjects.iter().map(|s| s.subject_id.clone()).collect();

    // The untouched pools, in id order, for prefix comparison.
    let original: Vec<Vec<SegmentRef>> = (0..2)
        .map(|r| {
            let mut pool = Vec::new();
            for id in &ids {
                let si = dataset.subject_index(id).unwrap();
                let s = &dataset.subjects[si];
                if let Some(rows) = &s.segments[r] {
                    for seg in 0..rows.len() {
                        pool.push(SegmentRef { subject: si, segment: seg, label: s.label });
                    }
                }
            }
            pool
        })
        .collect();
    let target = original.iter().map(Vec::len).max().unwrap();
    assert_ne!(original[0].len(), original[1].len(), "missingness should skew pool sizes");

    let mut rng = Rng::stream(0, "test-pools");
    let pools = oversample_modality_balanced(&dataset, &ids, &mut rng).unwrap();
    for (r, pool) in pools.iter().enumerate() {
        assert_eq!(pool.len(), target);
        assert_eq!(&pool[..original[r].len()], &original[r][..], "originals must be kept");
        for sref in pool {
            assert!(original[r].contains(sref), "top-up invented a reference");
        }
    }

    let only_m0: Vec<String> = dataset
        .subjects
        .iter()
        .filter(|s| !s.has_modality(1))
        .map(|s| s.subject_id.clone())
        .collect();
    assert!(!only_m0.is_empty());
    match oversample_modality_balanced(&dataset, &only_m0, &mut rng) {
        Err(TripError::Config(msg)) => assert!(msg.contains("m1"), "got {msg:?}"),
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn eval_pools_balance_every_class_and_modality_cell() {
    let spec = SyntheticSpec {
        num_classes: 3,
        subjects_per_class: vec![4, 2, 1],
        segments_per_subject: 5,
        dominance: vec![1.0, 1.0],
        ..SyntheticSpec::default()
    };
    let dataset = generate(&spec).unwrap();
    let ids: Vec<String> = dataset.subjects.iter().map(|s| s.subject_id.clone()).collect();

    let mut rng = Rng::stream(1, "test-pools");
    let pools = oversample_eval_balanced(&dataset, &ids, &mut rng).unwrap();
    // Largest cell is class 0 with 4 subjects of 5 segments each.
    for pool in &pools {
        assert_eq!(class_counts(pool, 3), vec![20, 20, 20]);
    }

    let class0_only: Vec<String> = ids.iter().filter(|id| id.starts_with("c0")).cloned().collect();
    match oversample_eval_balanced(&dataset, &class0_only, &mut rng) {
        Err(TripError::Split(msg)) => assert!(msg.contains("class 1"), "got {msg:?}"),
        other => panic!("expected split error, got {other:?}"),
    }
}

/// Two modalities with unequal segment counts: subject a has 3 and 2, so only
/// the first two indices align; subject b lacks m1 entirely.
fn tiny_dataset() -> Dataset {
    let dataset = Dataset {
        modality_names: vec!["m0".into(), "m1".into()],
        modality_dims: vec![2, 1],
        num_classes: 2,
        subjects: vec![
            SubjectRecord {
                subject_id: "a".into(),
                label: 0,
                segments: vec![
                    Some(vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]),
                    Some(vec![vec![10.0], vec![20.0]]),
                ],
            },
            SubjectRecord {
                subject_id: "b".into(),
                label: 1,
                segments: vec![Some(vec![vec![7.0, 8.0]]), None],
            },
            SubjectRecord {
                subject_id: "c".into(),
                label: 1,
                segments: vec![Some(vec![vec![9.0, 9.5]]), Some(vec![vec![30.0]])],
            },
        ],
    };
    dataset.validate().unwrap();
    dataset
}

#[test]
fn aligned_pools_use_common_segments_of_complete_subjects() {
    let dataset = tiny_dataset();
    let ids = vec!["a".to_string(), "b".to_string(), "c".to_string()];
    let pool = aligned_pool(&dataset, &ids).unwrap();
    assert_eq!(
        pool,
        vec![
            SegmentRef { subject: 0, segment: 0, label: 0 },
            SegmentRef { subject: 0, segment: 1, label: 0 },
            SegmentRef { subject: 2, segment: 0, label: 1 },
        ]
    );
    assert_eq!(labels_of(&pool), vec![0, 0, 1]);
    assert_eq!(class_counts(&pool, 2), vec![2, 1]);

    let mut rng = Rng::stream(2, "test-pools");
    let balanced = aligned_eval_balanced(&dataset, &ids, &mut rng).unwrap();
    assert_eq!(class_counts(&balanced, 2), vec![2, 2]);
    assert_eq!(&balanced[..2], &pool[..2]);
    assert_eq!(balanced[2], pool[2]);
    assert_eq!(balanced[3], pool[2], "the only class 1 row is the only possible top-up");

    let class0_only = vec!["a".to_string()];
    assert!(matches!(
        aligned_eval_balanced(&dataset, &class0_only, &mut rng),
        Err(TripError::Split(_))
    ));
}

#[test]
fn features_of_materializes_rows_and_rejects_misrouted_refs() {
    let dataset = tiny_dataset();
    let refs = vec![
        SegmentRef { subject: 0, segment: 2, label: 0 },
        SegmentRef { subject: 1, segment: 0, label: 1 },
    ];
    let m0 = features_of(&dataset, &refs, 0).unwrap();
    assert_eq!(m0.rows(), 2);
    assert_eq!(m0.cols(), 2);
    assert_eq!(m0.get(0, 0), 5.0);
    assert_eq!(m0.get(0, 1), 6.0);
    assert_eq!(m0.get(1, 0), 7.0);
    assert_eq!(m0.get(1, 1), 8.0);

    // Subject b has no m1 rows, so routing a ref for it to m1 must fail.
    let misrouted = vec![SegmentRef { subject: 1, segment: 0, label: 1 }];
    assert!(matches!(features_of(&dataset, &misrouted, 1), Err(TripError::Routing(_))));
    assert!(matches!(features_of(&dataset, &[], 0), Err(TripError::Contract(_))));
}

#[test]
fn pool_builders_reject_unknown_subjects() {
    let dataset = tiny_dataset();
    let mut rng = Rng::stream(3, "test-pools");
    let ghost = vec!["ghost".to_string()];
    match oversample_modality_balanced(&dataset, &ghost, &mut rng) {
        Err(TripError::Data(msg)) => assert!(msg.contains("unknown subject ghost"), "got {msg:?}"),
        other => panic!("expected data error, got {other:?}"),
    }
    assert!(matches!(aligned_pool(&dataset, &ghost), Err(TripError::Data(_))));
}
