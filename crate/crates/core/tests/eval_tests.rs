//! Evaluation metric tests: the signed relative-degradation metric against
//! published reference values, accuracy, masking probes, cross-validation
//! aggregation, and the report CSV layout.

use trip_core::data::sampling::{labels_of, SegmentRef};
use trip_core::data::synth::{generate, SyntheticSpec};
use trip_core::eval::{
    accuracy, aggregate_cv, all_masks, argmax, delta_m, masked_eval_baseline, masked_eval_trip,
    predict_stream, write_report_csv, FoldEval, MetricsReport, Stat,
};
use trip_core::model::{ModelParams, ModelSpec};
use trip_core::numerics::Rng;
use trip_core::train::baseline::{BaselineKind, BaselineParams};
use trip_core::TripError;

#[test]
fn delta_matches_published_two_modality_values() {
    let higher = vec![true, true];
    let strong = delta_m(&[63.61, 49.76], &[47.73, 33.47], &higher).unwrap();
    assert!((strong - -40.97).abs() < 0.01, "got {strong}");

    let weak = delta_m(&[63.61, 49.76], &[58.74, 50.50], &higher).unwrap();
    assert!((weak - -3.41).abs() < 0.01, "got {weak}");
}

#[test]
fn delta_matches_published_three_modality_value() {
    let d = delta_m(
        &[71.08, 63.03, 80.07],
        &[66.22, 59.55, 77.56],
        &[true, true, true],
    )
    .unwrap();
    assert!((d - -5.47).abs() < 0.01, "got {d}");
}

#[test]
fn delta_sign_follows_the_metric_direction() {
    // Higher-is-better metric, method above baseline: improvement, negative.
    assert!(delta_m(&[80.0], &[60.0], &[true]).unwrap() < 0.0);
    assert!(delta_m(&[40.0], &[60.0], &[true]).unwrap() > 0.0);
    // Lower-is-better metric, method below baseline: improvement, negative.
    assert!(delta_m(&[0.4], &[0.6], &[false]).unwrap() < 0.0);
    assert!(delta_m(&[0.9], &[0.6], &[false]).unwrap() > 0.0);
    // Exact value: single metric, +10% relative increase, higher is better.
    let d = delta_m(&[66.0], &[60.0], &[true]).unwrap();
    assert!((d - -10.0).abs() < 1e-12);
}

#[test]
fn delta_rejects_degenerate_inputs() {
    match delta_m(&[50.0, 60.0], &[40.0, 0.0], &[true, true]) {
        Err(TripError::Contract(msg)) => assert!(msg.contains("baseline metric 1"), "{msg:?}"),
        other => panic!("expected contract error, got {other:?}"),
    }
    assert!(delta_m(&[], &[], &[]).is_err());
    assert!(delta_m(&[1.0], &[1.0, 2.0], &[true, true]).is_err());
    assert!(delta_m(&[1.0, 2.0], &[1.0, 2.0], &[true]).is_err());
}

#[test]
fn accuracy_counts_exact_matches() {
    assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 100.0);
    assert_eq!(accuracy(&[0, 1, 1, 0], &[0, 1, 0, 1]).unwrap(), 50.0);
    assert_eq!(accuracy(&[1], &[0]).unwrap(), 0.0);
    assert!(accuracy(&[], &[]).is_err());
    assert!(accuracy(&[0], &[0, 1]).is_err());
}

#[test]
fn argmax_breaks_ties_toward_the_lowest_index() {
    assert_eq!(argmax(&[1.0, 3.0, 2.0]), 1);
    assert_eq!(argmax(&[2.0, 2.0, 2.0]), 0);
    assert_eq!(argmax(&[1.0, 5.0, 5.0]), 1);
    assert_eq!(argmax(&[-2.0, -1.0]), 1);
    assert_eq!(argmax(&[7.0]), 0);
}

#[test]
fn masks_enumerate_every_nonempty_subset_in_bit_order() {
    let names = vec!["m0".to_string(), "m1".to_string(), "m2".to_string()];
    let masks = all_masks(&names);
    assert_eq!(masks.len(), 7);
    assert_eq!(masks[0], ("m0".to_string(), vec![true, false, false]));
    assert_eq!(masks[1], ("m1".to_string(), vec![false, true, false]));
    assert_eq!(masks[2], ("m0+m1".to_string(), vec![true, true, false]));
    assert_eq!(masks[6], ("m0+m1+m2".to_string(), vec![true, true, true]));
}

fn eval_pools(dataset: &trip_core::data::Dataset) -> Vec<Vec<SegmentRef>> {
    (0..dataset.num_modalities())
        .map(|r| {
            let mut pool = Vec::new();
            for (si, s) in dataset.subjects.iter().enumerate() {
                if let Some(rows) = &s.segments[r] {
                    for seg in 0..rows.len() {
                        pool.push(SegmentRef { subject: si, segment: seg, label: s.label });
                    }
                }
            }
            pool
        })
        .collect()
}

#[test]
fn masking_a_trip_stream_leaves_the_other_stream_untouched() {
    let dataset = generate(&SyntheticSpec::default()).unwrap();
    let spec = ModelSpec::new(vec![6, 6], 2);
    let params = ModelParams::init(spec, &mut Rng::stream(11, "init")).unwrap();
    let pools = eval_pools(&dataset);

    let full = masked_eval_trip(&params, &dataset, &pools, &[true, true]).unwrap();
    let only_m0 = masked_eval_trip(&params, &dataset, &pools, &[true, false]).unwrap();
    let alone = predict_stream(&params, &dataset, &pools[0], 0).unwrap();

    assert_eq!(only_m0.predictions[0].as_ref().unwrap(), &alone);
    assert_eq!(full.predictions[0].as_ref().unwrap(), &alone);
    assert_eq!(only_m0.predictions[1], None);
    assert_eq!(only_m0.per_modality[1], None);
    let acc0 = accuracy(&alone, &labels_of(&pools[0])).unwrap();
    assert_eq!(only_m0.average, acc0);
    assert_eq!(full.per_modality[0], Some(acc0));

    assert!(matches!(
        masked_eval_trip(&params, &dataset, &pools, &[false, false]),
        Err(TripError::Contract(_))
    ));
    assert!(matches!(
        masked_eval_trip(&params, &dataset, &pools, &[true]),
        Err(TripError::Contract(_))
    ));
}

#[test]
fn baseline_masked_eval_reports_one_fused_stream() {
    let dataset = generate(&SyntheticSpec::default()).unwrap();
    let spec = ModelSpec::new(vec![6, 6], 2);
    let params =
        BaselineParams::init(BaselineKind::Early, &spec, &mut Rng::stream(12, "init")).unwrap();
    let rows = eval_pools(&dataset).remove(0);

    let eval = masked_eval_baseline(&params, &dataset, &rows, &[true, false]).unwrap();
    assert!(eval.predictions[0].is_some());
    assert_eq!(eval.predictions[1], None);
    assert_eq!(eval.per_modality, vec![Some(eval.average); 2]);

    assert!(matches!(
        masked_eval_baseline(&params, &dataset, &rows, &[false, false]),
        Err(TripError::Contract(_))
    ));
}

fn fold(per_modality: Vec<f64>, masks: Vec<(&str, f64)>) -> FoldEval {
    let average = per_modality.iter().sum::<f64>() / per_modality.len() as f64;
    FoldEval {
        per_modality,
        average,
        masks: masks.into_iter().map(|(n, v)| (n.to_string(), v)).collect(),
    }
}

#[test]
fn aggregation_reports_mean_and_sample_std() {
    let names = vec!["m0".to_string(), "m1".to_string()];
    let folds = vec![
        fold(vec![60.0, 80.0], vec![("m0", 58.0), ("m0+m1", 72.0)]),
        fold(vec![70.0, 90.0], vec![("m0", 62.0), ("m0+m1", 78.0)]),
    ];
    let report = aggregate_cv(&folds, &names).unwrap();
    assert_eq!(report.folds, 2);
    assert_eq!(report.per_modality[0].mean, 65.0);
    assert!((report.per_modality[0].std - 50f64.sqrt()).abs() < 1e-12);
    assert_eq!(report.per_modality[1].mean, 85.0);
    assert_eq!(report.average.mean, 75.0);
    assert_eq!(report.masks[0].0, "m0");
    assert_eq!(report.masks[0].1.mean, 60.0);
    assert_eq!(report.masks[1].1.mean, 75.0);
    assert_eq!(report.delta_m, None);

    // Identical folds collapse the spread to zero.
    let same = vec![
        fold(vec![64.0, 66.0], vec![("m0", 60.0)]),
        fold(vec![64.0, 66.0], vec![("m0", 60.0)]),
        fold(vec![64.0, 66.0], vec![("m0", 60.0)]),
    ];
    let report = aggregate_cv(&same, &names).unwrap();
    assert_eq!(report.per_modality[0].std, 0.0);
    assert_eq!(report.average.std, 0.0);
}

#[test]
fn aggregation_is_invariant_to_fold_order() {
    let names = vec!["m0".to_string(), "m1".to_string()];
    let folds = vec![
        fold(vec![60.0, 80.0], vec![("m0", 58.0)]),
        fold(vec![70.0, 90.0], vec![("m0", 62.0)]),
        fold(vec![65.0, 85.0], vec![("m0", 60.0)]),
        fold(vec![55.0, 75.0], vec![("m0", 54.0)]),
    ];
    let forward = aggregate_cv(&folds, &names).unwrap();
    let mut reversed = folds.clone();
    reversed.reverse();
    let backward = aggregate_cv(&reversed, &names).unwrap();
    assert_eq!(forward.per_modality, backward.per_modality);
    assert_eq!(forward.average, backward.average);
    assert_eq!(forward.masks, backward.masks);
}

#[test]
fn aggregation_rejects_inconsistent_folds() {
    let names = vec!["m0".to_string(), "m1".to_string()];
    assert!(matches!(
        aggregate_cv(&[fold(vec![60.0, 80.0], vec![])], &names),
        Err(TripError::Contract(_))
    ));
    let mismatched = vec![
        fold(vec![60.0, 80.0], vec![]),
        fold(vec![70.0], vec![]),
    ];
    assert!(matches!(aggregate_cv(&mismatched, &names), Err(TripError::Contract(_))));
    let mask_names_differ = vec![
        fold(vec![60.0, 80.0], vec![("m0", 58.0)]),
        fold(vec![70.0, 90.0], vec![("m1", 62.0)]),
    ];
    assert!(matches!(aggregate_cv(&mask_names_differ, &names), Err(TripError::Contract(_))));
}

#[test]
fn report_csv_layout_is_stable() {
    let report = MetricsReport {
        modality_names: vec!["m0".to_string(), "m1".to_string()],
        per_modality: vec![
            Stat { mean: 65.5, std: 0.5 },
            Stat { mean: 85.25, std: 1.25 },
        ],
        average: Stat { mean: 75.375, std: 0.875 },
        delta_m: Some(-40.97),
        masks: vec![
            ("m0".to_string(), Stat { mean: 60.0, std: 2.0 }),
            ("m0+m1".to_string(), Stat { mean: 75.0, std: 0.0 }),
        ],
        folds: 2,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.csv");
    write_report_csv(&report, &path).unwrap();
    let got = std::fs::read_to_string(&path).unwrap();
    let expected = "\
metric,modality,mask,mean,std
accuracy,m0,full,65.5,0.5
accuracy,m1,full,85.25,1.25
avg_accuracy,-,full,75.375,0.875
delta_m,-,full,-40.97,
mask_accuracy,-,m0,60,2
mask_accuracy,-,m0+m1,75,0
";
    assert_eq!(got, expected);
}
