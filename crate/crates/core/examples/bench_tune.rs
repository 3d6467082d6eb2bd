//! Scratch harness for sizing the synthetic benchmarks. Not a test.

use trip_core::config::{
    Arch, DataSection, DataSource, EvalSection, ModelSection, MooSection, RebalanceSection,
    RunConfig, TrainSection,
};
use trip_core::data::folds::Mode;
use trip_core::numerics::Rng;
use trip_core::run::run_experiment;
use trip_core::train::optimizer::OptimizerKind;

#[derive(Clone)]
struct Gen {
    name: &'static str,
    classes: usize,
    dims: Vec<usize>,
    subjects: usize,
    segments: usize,
    shared: f64,
    dominance: Vec<f64>,
    conflict: f64,
    segment_noise: f64,
    label_noise: f64,
    missing: f64,
    folds: usize,
    hidden: usize,
    depth: usize,
    epochs: usize,
    lr: f64,
    batch: usize,
    private_opt: OptimizerKind,
}

impl Default for Gen {
    fn default() -> Gen {
        Gen {
            name: "gen",
            classes: 2,
            dims: vec![6, 6, 6],
            subjects: 8,
            segments: 12,
            shared: 0.7,
            dominance: vec![3.0, 0.5, 0.5],
            conflict: 0.6,
            segment_noise: 0.35,
            label_noise: 0.0,
            missing: 0.0,
            folds: 2,
            hidden: 8,
            depth: 2,
            epochs: 15,
            lr: 0.01,
            batch: 16,
            private_opt: OptimizerKind::Adam,
        }
    }
}

fn conflict_config(gen: &Gen, seed: u64, beta: f64) -> RunConfig {
    RunConfig {
        seed,
        folds: gen.folds,
        out_dir: None,
        data: DataSection {
            source: DataSource::Synthetic,
            num_classes: gen.classes,
            modality_dims: gen.dims.clone(),
            subjects_per_class: vec![gen.subjects; gen.classes],
            segments_per_subject: gen.segments,
            shared_signal: gen.shared,
            dominance: gen.dominance.clone(),
            conflict: gen.conflict,
            label_noise: gen.label_noise,
            segment_noise: gen.segment_noise,
            subject_offset: 0.1,
            missing_rate: gen.missing,
            seed: None,
            dir: None,
            modalities: None,
        },
        model: ModelSection {
            arch: Arch::Trip,
            hidden_width: gen.hidden,
            backbone_depth: gen.depth,
            ..Default::default()
        },
        train: TrainSection {
            mode: Mode::Async,
            epochs: gen.epochs,
            batch_size: gen.batch,
            optimizer: gen.private_opt,
            learning_rate: gen.lr,
            ..Default::default()
        },
        moo: MooSection { beta, ..Default::default() },
        rebalance: RebalanceSection::default(),
        eval: EvalSection { oracles: false, masks: false },
    }
}

fn average_acc(cfg: &RunConfig) -> f64 {
    let dir = tempfile::tempdir().expect("tempdir");
    let result = run_experiment(cfg, dir.path(), false).expect("run");
    result.report.average.mean
}

/// 2.5th percentile of the bootstrapped mean difference.
fn bootstrap_lb(diffs: &[f64]) -> f64 {
    let mut rng = Rng::stream(99, "bootstrap");
    let mut means: Vec<f64> = (0..10_000)
        .map(|_| {
            (0..diffs.len()).map(|_| diffs[rng.below(diffs.len())]).sum::<f64>()
                / diffs.len() as f64
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    means[249]
}

fn main() {
    let base = Gen {
        dims: vec![6, 6],
        dominance: vec![3.0, 0.6],
        shared: 0.8,
        conflict: 0.5,
        segment_noise: 0.35,
        subjects: 12,
        segments: 24,
        folds: 2,
        epochs: 30,
        batch: 32,
        lr: 0.08,
        private_opt: OptimizerKind::Sgd,
        ..Gen::default()
    };
    let gens = [
        Gen { name: "sgd30-lr9", lr: 0.09, ..base.clone() },
        Gen { name: "sgd30-lr10", lr: 0.10, ..base.clone() },
        Gen { name: "sgd28-lr8", epochs: 28, ..base.clone() },
        Gen { name: "sgd30-lr8-n30", segment_noise: 0.30, ..base.clone() },
    ];
    for gen in &gens {
        let t0 = std::time::Instant::now();
        let mut diffs = Vec::new();
        let (mut trip_sum, mut avg_sum) = (0.0, 0.0);
        print!("{:>10}:", gen.name);
        for seed in 101..=110u64 {
            let trip = average_acc(&conflict_config(gen, seed, 0.8));
            let avg = average_acc(&conflict_config(gen, seed, 0.0));
            print!(" {:+5.1}", trip - avg);
            diffs.push(trip - avg);
            trip_sum += trip;
            avg_sum += avg;
        }
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        println!(
            "  trip {:5.1} avg {:5.1}  mean {mean:+.2}  boot-lb {:+.2}  ({:.1?})",
            trip_sum / 10.0,
            avg_sum / 10.0,
            bootstrap_lb(&diffs),
            t0.elapsed()
        );
    }
}
