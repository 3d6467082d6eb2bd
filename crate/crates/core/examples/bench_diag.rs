//! Scratch diagnostics: where does the beta tilt act during training?

use trip_core::data::folds::{make_folds, Mode};
use trip_core::data::synth::{generate, SyntheticSpec};
use trip_core::model::{ModelParams, ModelSpec};
use trip_core::moo::MooConfig;
use trip_core::train::{train, SeedStreams, TrainConfig};

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn main() {
    let spec = SyntheticSpec {
        num_classes: 2,
        modality_dims: vec![6, 6],
        subjects_per_class: vec![8, 8],
        segments_per_subject: 12,
        shared_signal: 0.8,
        dominance: vec![3.0, 0.6],
        conflict: 0.5,
        segment_noise: 0.35,
        subject_offset: 0.1,
        ..SyntheticSpec::default()
    };
    let seed = 104;
    let dataset = generate(&SyntheticSpec { seed, ..spec.clone() }).unwrap();
    let plan = make_folds(&dataset, 2, Mode::Async, seed).unwrap();
    let model = ModelSpec {
        modality_dims: vec![6, 6],
        hidden_width: 8,
        backbone_depth: 2,
        ..ModelSpec::new(vec![6, 6], 2)
    };

    let mut traces = Vec::new();
    let mut drifts = Vec::new();
    for beta in [0.8, 0.0] {
        let cfg = TrainConfig {
            epochs: 15,
            batch_size: 16,
            learning_rate: 0.01,
            moo: MooConfig { beta, ..MooConfig::default() },
            seed,
            ..TrainConfig::default()
        };
        let outcome = train(&dataset, &plan.folds[0], &cfg, &model, 0).unwrap();

        let mut streams = SeedStreams::for_fold(seed, 0);
        let init = ModelParams::init(model.clone(), &mut streams.init).unwrap();
        let bb_drift = l2(&outcome.params.backbone_values(), &init.backbone_values());
        drifts.push(bb_drift);
        traces.push(outcome.trace);
    }

    println!("backbone drift: beta0.8 {:.4}  beta0 {:.4}", drifts[0], drifts[1]);
    println!("epoch   m0(b.8)  m0(b0)   m1(b.8)  m1(b0)");
    let per_epoch = |trace: &[trip_core::train::TraceRow], stream: &str| -> Vec<f64> {
        trace.iter().filter(|t| t.stream == stream).map(|t| t.loss).collect()
    };
    let m0a = per_epoch(&traces[0], "m0");
    let m0b = per_epoch(&traces[1], "m0");
    let m1a = per_epoch(&traces[0], "m1");
    let m1b = per_epoch(&traces[1], "m1");
    for e in 0..m0a.len() {
        println!(
            "{e:>5}   {:7.4}  {:7.4}  {:7.4}  {:7.4}",
            m0a[e], m0b[e], m1a[e], m1b[e]
        );
    }
}
