//! Experiment orchestration: dataset resolution, fold-parallel training,
//! masked evaluation, single-modality oracle runs, aggregation, and the
//! artifact layout on disk.
//!
//! Layout under the output directory:
//!   run_manifest.json          command, seed, config snapshot, outputs
//!   fold{f}/checkpoint.json    trained parameters
//!   fold{f}/loss_trace.csv     per-epoch stream losses
//!   fold{f}/oracle-{name}.json single-modality reference models
//!   metrics.json               aggregated report (serialized)
//!   metrics.csv                flat metric rows
//!   report.txt                 human-readable table
//!
//! Everything except the manifest's wall clock is a pure function of
//! (config, seed), so reruns are byte-identical and safe to diff.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::config::{DataSource, RunConfig};
use crate::data::folds::{make_folds, Fold};
use crate::data::sampling::{aligned_eval_balanced, oversample_eval_balanced, SegmentRef};
use crate::data::{csvio, synth, Dataset};
use crate::error::{Result, TripError};
use crate::eval::{
    accuracy, aggregate_cv, all_masks, delta_m, masked_eval_baseline, masked_eval_trip,
    predict_stream, write_report_csv, FoldEval, MetricsReport,
};
use crate::model::{load_checkpoint, save_checkpoint, ModelParams};
use crate::numerics::Rng;
use crate::train::baseline::{
    load_baseline_checkpoint, save_baseline_checkpoint, train_baseline, BaselineParams,
};
use crate::train::{train, write_loss_trace, TrainConfig};

pub const MANIFEST_VERSION: u32 = 1;

/// Workers for fold-parallel training, from TRIP_WORKERS. Results are merged
/// by fold index, so the worker count never changes any output byte.
pub fn worker_count(folds: usize) -> usize {
    let available =
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let requested = std::env::var("TRIP_WORKERS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(available);
    requested.min(folds).max(1)
}

/// Resolve the dataset named by the config: generate synthetic data or load
/// CSV files from the configured directory.
pub fn resolve_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let dataset = match cfg.data.source {
        DataSource::Synthetic => synth::generate(&cfg.synthetic_spec()?)?,
        DataSource::Csv => {
            let dir = cfg
                .data
                .dir
                .as_ref()
                .ok_or_else(|| TripError::Config("csv source requires data.dir".into()))?;
            let names = match &cfg.data.modalities {
                Some(names) => names.clone(),
                None => scan_modality_names(dir)?,
            };
            let files: Vec<(String, PathBuf)> =
                names.iter().map(|n| (n.clone(), dir.join(format!("{n}.csv")))).collect();
            csvio::load_csv(&files, &dir.join("manifest.csv"))?
        }
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Modality names from a data directory: every `*.csv` except the manifest,
/// sorted by name.
fn scan_modality_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let stem = match path.file_stem().and_then(|s| s.to_str()) {
            Some(s) => s.to_string(),
            None => continue,
        };
        if stem != "manifest" {
            names.push(stem);
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(TripError::Data(format!("no modality CSV files in {}", dir.display())));
    }
    Ok(names)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub artifact_version: String,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Paths relative to the manifest's directory.
    pub outputs: Vec<String>,
    /// Unix seconds; informational only, excluded from reproducibility
    /// guarantees.
    pub wall_clock_unix: u64,
}

pub fn write_manifest(
    cfg: &RunConfig,
    command: &str,
    out_dir: &Path,
    outputs: &[PathBuf],
) -> Result<PathBuf> {
    let rel: Vec<String> = outputs
        .iter()
        .map(|p| {
            p.strip_prefix(out_dir)
                .unwrap_or(p)
                .to_string_lossy()
                .replace(std::path::MAIN_SEPARATOR, "/")
        })
        .collect();
    let manifest = RunManifest {
        format_version: MANIFEST_VERSION,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        outputs: rel,
        wall_clock_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let path = out_dir.join("run_manifest.json");
    let file = std::fs::File::create(&path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &manifest)
        .map_err(|e| TripError::Io(std::io::Error::other(e)))?;
    Ok(path)
}

/// Generate the configured synthetic dataset and export it as CSV.
pub fn cmd_gen_data(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let spec = cfg.synthetic_spec()?;
    let dataset = synth::generate(&spec)?;
    let mut written = csvio::export_csv(&dataset, out_dir)?;
    let manifest = write_manifest(cfg, "gen-data", out_dir, &written)?;
    written.push(manifest);
    Ok(written)
}

/// Evaluation pools for one fold, drawn from a stream independent of the
/// training streams so eval balancing never perturbs training.
struct EvalPools {
    per_modality: Vec<Vec<SegmentRef>>,
    aligned: Vec<SegmentRef>,
}

fn eval_pools(dataset: &Dataset, fold: &Fold, seed: u64, fold_idx: u64) -> Result<EvalPools> {
    let mut rng = Rng::stream(seed, "eval").substream(fold_idx);
    let per_modality = oversample_eval_balanced(dataset, &fold.eval_subjects, &mut rng)?;
    let aligned = aligned_eval_balanced(dataset, &fold.eval_subjects, &mut rng)?;
    Ok(EvalPools { per_modality, aligned })
}

fn mask_list(dataset: &Dataset, full_only: bool) -> Vec<(String, Vec<bool>)> {
    let masks = all_masks(&dataset.modality_names);
    if full_only {
        let m = dataset.num_modalities();
        masks.into_iter().filter(|(_, mask)| mask.iter().filter(|&&b| b).count() == m).collect()
    } else {
        masks
    }
}

/// Train and evaluate the per-modality oracle for one fold: a single-stream
/// model on the restricted dataset, scored on exactly the segments the main
/// model sees for that modality.
fn oracle_accuracy(
    dataset: &Dataset,
    fold: &Fold,
    cfg: &RunConfig,
    tc: &TrainConfig,
    pools: &[Vec<SegmentRef>],
    r: usize,
    fold_idx: u64,
) -> Result<(ModelParams, f64)> {
    let (view, map) = dataset.restrict_to_modality(r)?;
    let spec = cfg.model_spec(&view.modality_dims, dataset.num_classes);
    let oracle_fold = Fold {
        eval_subjects: fold.eval_subjects.clone(),
        train_subjects: fold
            .train_subjects
            .iter()
            .filter(|id| view.subject_index(id).is_some())
            .cloned()
            .collect(),
    };
    let outcome = train(&view, &oracle_fold, tc, &spec, fold_idx)?;
    let remapped: Vec<SegmentRef> = pools[r]
        .iter()
        .map(|sref| {
            map[sref.subject]
                .map(|subject| SegmentRef { subject, ..*sref })
                .ok_or_else(|| {
                    TripError::Split(format!(
                        "eval subject {} lacks modality {r}",
                        dataset.subjects[sref.subject].subject_id
                    ))
                })
        })
        .collect::<Result<_>>()?;
    let preds = predict_stream(&outcome.params, &view, &remapped, 0)?;
    let labels: Vec<usize> = remapped.iter().map(|s| s.label).collect();
    let acc = accuracy(&preds, &labels)?;
    Ok((outcome.params, acc))
}

struct FoldArtifacts {
    eval: FoldEval,
    oracle_accs: Option<Vec<f64>>,
    outputs: Vec<PathBuf>,
}

fn fold_eval_from_masks(
    dataset: &Dataset,
    masks: &[(String, Vec<bool>)],
    mut eval_one: impl FnMut(&[bool]) -> Result<crate::eval::MaskedEval>,
) -> Result<FoldEval> {
    let m = dataset.num_modalities();
    let full_mask = vec![true; m];
    let full = eval_one(&full_mask)?;
    let per_modality: Vec<f64> = full
        .per_modality
        .iter()
        .map(|a| a.ok_or_else(|| TripError::Contract("full mask left a stream unevaluated".into())))
        .collect::<Result<Vec<_>>>()?;
    let mut mask_rows = Vec::new();
    for (name, mask) in masks {
        let me = if mask == &full_mask { full.average } else { eval_one(mask)?.average };
        mask_rows.push((name.clone(), me));
    }
    Ok(FoldEval { per_modality, average: full.average, masks: mask_rows })
}

/// Train and evaluate one fold, writing its artifacts under `fold_dir`.
fn run_fold(
    cfg: &RunConfig,
    dataset: &Dataset,
    fold: &Fold,
    fold_idx: u64,
    fold_dir: &Path,
    allow_ill_posed: bool,
) -> Result<FoldArtifacts> {
    std::fs::create_dir_all(fold_dir)?;
    let tc = cfg.train_config();
    let spec = cfg.model_spec(&dataset.modality_dims, dataset.num_classes);
    let pools = eval_pools(dataset, fold, cfg.seed, fold_idx)?;
    let masks = mask_list(dataset, !cfg.eval.masks);
    let mut outputs = Vec::new();

    let (eval, trace) = match cfg.model.arch.baseline_kind() {
        None => {
            let outcome = train(dataset, fold, &tc, &spec, fold_idx)?;
            let eval = fold_eval_from_masks(dataset, &masks, |mask| {
                masked_eval_trip(&outcome.params, dataset, &pools.per_modality, mask)
            })?;
            let ckpt = fold_dir.join("checkpoint.json");
            save_checkpoint(&outcome.params, &ckpt)?;
            outputs.push(ckpt);
            (eval, outcome.trace)
        }
        Some(kind) => {
            let outcome =
                train_baseline(kind, dataset, fold, &tc, &spec, fold_idx, allow_ill_posed)?;
            let eval = fold_eval_from_masks(dataset, &masks, |mask| {
                masked_eval_baseline(&outcome.params, dataset, &pools.aligned, mask)
            })?;
            let ckpt = fold_dir.join("checkpoint.json");
            save_baseline_checkpoint(&outcome.params, &ckpt)?;
            outputs.push(ckpt);
            (eval, outcome.trace)
        }
    };

    let trace_path = fold_dir.join("loss_trace.csv");
    write_loss_trace(&trace, &trace_path)?;
    outputs.push(trace_path);

    let oracle_accs = if cfg.eval.oracles {
        let mut accs = Vec::new();
        for r in 0..dataset.num_modalities() {
            let (params, acc) =
                oracle_accuracy(dataset, fold, cfg, &tc, &pools.per_modality, r, fold_idx)?;
            let path = fold_dir.join(format!("oracle-{}.json", dataset.modality_names[r]));
            save_checkpoint(&params, &path)?;
            outputs.push(path);
            accs.push(acc);
        }
        Some(accs)
    } else {
        None
    };

    Ok(FoldArtifacts { eval, oracle_accs, outputs })
}

/// Run every fold, in parallel up to `worker_count`, merging results by fold
/// index so output bytes do not depend on scheduling.
fn run_folds(
    cfg: &RunConfig,
    dataset: &Dataset,
    folds: &[Fold],
    out_dir: &Path,
    allow_ill_posed: bool,
) -> Result<Vec<FoldArtifacts>> {
    let workers = worker_count(folds.len());
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<FoldArtifacts>>>> =
        Mutex::new((0..folds.len()).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let f = next.fetch_add(1, Ordering::SeqCst);
                if f >= folds.len() {
                    break;
                }
                let result = run_fold(
                    cfg,
                    dataset,
                    &folds[f],
                    f as u64,
                    &out_dir.join(format!("fold{f}")),
                    allow_ill_posed,
                );
                slots.lock().expect("worker poisoned the result store").as_mut_slice()[f] =
                    Some(result);
            });
        }
    });

    let collected = slots.into_inner().expect("worker poisoned the result store");
    let mut artifacts = Vec::with_capacity(folds.len());
    for (f, slot) in collected.into_iter().enumerate() {
        match slot {
            Some(Ok(a)) => artifacts.push(a),
            Some(Err(e)) => return Err(e),
            None => return Err(TripError::Contract(format!("fold {f} worker never finished"))),
        }
    }
    Ok(artifacts)
}

pub struct ExperimentResult {
    pub report: MetricsReport,
    pub outputs: Vec<PathBuf>,
}

/// The full train+eval pipeline for one config into one directory.
pub fn run_experiment(
    cfg: &RunConfig,
    out_dir: &Path,
    allow_ill_posed: bool,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let dataset = resolve_dataset(cfg)?;
    let plan = make_folds(&dataset, cfg.folds, cfg.train.mode, cfg.seed)?;

    let artifacts = run_folds(cfg, &dataset, &plan.folds, out_dir, allow_ill_posed)?;
    let fold_evals: Vec<FoldEval> = artifacts.iter().map(|a| a.eval.clone()).collect();
    let mut report = aggregate_cv(&fold_evals, &dataset.modality_names)?;
    report.delta_m = oracle_delta(&report, &artifacts)?;

    let mut outputs: Vec<PathBuf> = artifacts.into_iter().flat_map(|a| a.outputs).collect();
    outputs.extend(write_report_artifacts(&report, out_dir, &format!("{}", cfg.model.arch))?);
    let manifest = write_manifest(cfg, "train", out_dir, &outputs)?;
    outputs.push(manifest);
    Ok(ExperimentResult { report, outputs })
}

/// Delta of aggregated per-modality means against aggregated oracle means.
/// Accuracy is higher-is-better in every slot.
fn oracle_delta(report: &MetricsReport, artifacts: &[FoldArtifacts]) -> Result<Option<f64>> {
    let per_fold: Vec<&Vec<f64>> =
        artifacts.iter().filter_map(|a| a.oracle_accs.as_ref()).collect();
    if per_fold.len() != artifacts.len() {
        return Ok(None);
    }
    let m = report.per_modality.len();
    let oracle_means: Vec<f64> = (0..m)
        .map(|r| per_fold.iter().map(|accs| accs[r]).sum::<f64>() / per_fold.len() as f64)
        .collect();
    let model_means: Vec<f64> = report.per_modality.iter().map(|s| s.mean).collect();
    Ok(Some(delta_m(&model_means, &oracle_means, &vec![true; m])?))
}

fn write_report_artifacts(
    report: &MetricsReport,
    out_dir: &Path,
    title: &str,
) -> Result<Vec<PathBuf>> {
    let json_path = out_dir.join("metrics.json");
    let file = std::fs::File::create(&json_path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), report)
        .map_err(|e| TripError::Io(std::io::Error::other(e)))?;
    let csv_path = out_dir.join("metrics.csv");
    write_report_csv(report, &csv_path)?;
    let txt_path = out_dir.join("report.txt");
    std::fs::write(&txt_path, crate::eval::render_report(report, title))?;
    Ok(vec![json_path, csv_path, txt_path])
}

/// Re-evaluate saved checkpoints without retraining. The dataset and fold
/// plan are rebuilt from the config; checkpoints come from `run_dir`.
pub fn cmd_eval(cfg: &RunConfig, run_dir: &Path, out_dir: &Path) -> Result<MetricsReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let dataset = resolve_dataset(cfg)?;
    let plan = make_folds(&dataset, cfg.folds, cfg.train.mode, cfg.seed)?;
    let masks = mask_list(&dataset, !cfg.eval.masks);

    let mut fold_evals = Vec::new();
    let mut oracle_accs: Vec<Vec<f64>> = Vec::new();
    let mut have_oracles = cfg.eval.oracles;
    for (f, fold) in plan.folds.iter().enumerate() {
        let fold_dir = run_dir.join(format!("fold{f}"));
        let pools = eval_pools(&dataset, fold, cfg.seed, f as u64)?;
        let ckpt = fold_dir.join("checkpoint.json");
        let eval = match cfg.model.arch.baseline_kind() {
            None => {
                let params = load_checkpoint(&ckpt)?;
                fold_eval_from_masks(&dataset, &masks, |mask| {
                    masked_eval_trip(&params, &dataset, &pools.per_modality, mask)
                })?
            }
            Some(_) => {
                let params: BaselineParams = load_baseline_checkpoint(&ckpt)?;
                fold_eval_from_masks(&dataset, &masks, |mask| {
                    masked_eval_baseline(&params, &dataset, &pools.aligned, mask)
                })?
            }
        };
        fold_evals.push(eval);

        if have_oracles {
            let mut accs = Vec::new();
            for r in 0..dataset.num_modalities() {
                let path = fold_dir.join(format!("oracle-{}.json", dataset.modality_names[r]));
                if !path.exists() {
                    have_oracles = false;
                    break;
                }
                let oracle = load_checkpoint(&path)?;
                let (view, map) = dataset.restrict_to_modality(r)?;
                let remapped: Vec<SegmentRef> = pools.per_modality[r]
                    .iter()
                    .map(|sref| SegmentRef {
                        subject: map[sref.subject].expect("eval subjects are complete"),
                        ..*sref
                    })
                    .collect();
                let preds = predict_stream(&oracle, &view, &remapped, 0)?;
                let labels: Vec<usize> = remapped.iter().map(|s| s.label).collect();
                accs.push(accuracy(&preds, &labels)?);
            }
            if have_oracles {
                oracle_accs.push(accs);
            }
        }
    }

    let mut report = aggregate_cv(&fold_evals, &dataset.modality_names)?;
    if have_oracles && oracle_accs.len() == fold_evals.len() {
        let m = dataset.num_modalities();
        let oracle_means: Vec<f64> = (0..m)
            .map(|r| oracle_accs.iter().map(|a| a[r]).sum::<f64>() / oracle_accs.len() as f64)
            .collect();
        let model_means: Vec<f64> = report.per_modality.iter().map(|s| s.mean).collect();
        report.delta_m = Some(delta_m(&model_means, &oracle_means, &vec![true; m])?);
    }
    let mut outputs = write_report_artifacts(&report, out_dir, &format!("{}", cfg.model.arch))?;
    let manifest = write_manifest(cfg, "eval", out_dir, &outputs)?;
    outputs.push(manifest);
    Ok(report)
}

/// Re-render report.txt and metrics.csv from a run's metrics.json.
pub fn cmd_report(run_dir: &Path) -> Result<String> {
    let json_path = run_dir.join("metrics.json");
    let file = std::fs::File::open(&json_path).map_err(|e| {
        TripError::Data(format!("cannot open {}: {e}", json_path.display()))
    })?;
    let report: MetricsReport = serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| TripError::Data(format!("metrics parse failed: {e}")))?;
    let text = crate::eval::render_report(&report, "stored run");
    write_report_csv(&report, &run_dir.join("metrics.csv"))?;
    std::fs::write(run_dir.join("report.txt"), &text)?;
    Ok(text)
}

/// The four-variant ablation over conflict-averse updates and rebalancing.
/// All variants share the seed, so they see identical data, folds, and
/// initializations; rows land in ablate.csv in fixed order.
pub fn cmd_ablate(cfg: &RunConfig, out_dir: &Path, allow_ill_posed: bool) -> Result<PathBuf> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let variants =
        [(false, false), (false, true), (true, false), (true, true)];

    let mut rows = Vec::new();
    let mut names: Option<Vec<String>> = None;
    for (moo, reb) in variants {
        let mut vcfg = cfg.clone();
        vcfg.train.moo_enabled = moo;
        vcfg.train.rebalance_enabled = reb;
        let dir =
            out_dir.join(format!("moo-{}_reb-{}", onoff(moo), onoff(reb)));
        let result = run_experiment(&vcfg, &dir, allow_ill_posed)?;
        names.get_or_insert_with(|| result.report.modality_names.clone());
        rows.push((moo, reb, result.report));
    }

    let names = names.expect("at least one variant ran");
    let path = out_dir.join("ablate.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let werr = |e: csv::Error| TripError::Data(format!("ablate write failed: {e}"));
    let mut header = vec!["moo".to_string(), "rebalance".to_string()];
    header.extend(names.iter().map(|n| format!("acc_{n}")));
    header.push("average".to_string());
    header.push("delta_m".to_string());
    w.write_record(&header).map_err(werr)?;
    for (moo, reb, report) in &rows {
        let mut record = vec![onoff(*moo).to_string(), onoff(*reb).to_string()];
        record.extend(report.per_modality.iter().map(|s| format!("{}", s.mean)));
        record.push(format!("{}", report.average.mean));
        record.push(report.delta_m.map(|d| format!("{d}")).unwrap_or_default());
        w.write_record(&record).map_err(werr)?;
    }
    w.flush()?;
    write_manifest(cfg, "ablate", out_dir, &[path.clone()])?;
    Ok(path)
}

fn onoff(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Beta,
    MarginM,
}

impl std::str::FromStr for SweepParam {
    type Err = TripError;
    fn from_str(s: &str) -> Result<SweepParam> {
        match s {
            "beta" => Ok(SweepParam::Beta),
            "margin_m" => Ok(SweepParam::MarginM),
            other => Err(TripError::Config(format!(
                "unknown sweep parameter {other}; expected beta or margin_m"
            ))),
        }
    }
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepParam::Beta => write!(f, "beta"),
            SweepParam::MarginM => write!(f, "margin_m"),
        }
    }
}

/// Validate a sweep grid against the parameter's domain before any training
/// starts, so a bad grid fails fast.
pub fn validate_grid(param: SweepParam, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(TripError::Config("sweep grid is empty".into()));
    }
    for &v in grid {
        if !v.is_finite() {
            return Err(TripError::Config(format!("sweep value {v} is not finite")));
        }
        match param {
            SweepParam::Beta => {
                if !(0.0..1.0).contains(&v) {
                    return Err(TripError::Config(format!(
                        "beta must lie in [0, 1), got {v}"
                    )));
                }
            }
            SweepParam::MarginM => {
                if v < 0.0 {
                    return Err(TripError::Config(format!(
                        "margin_m must be nonnegative, got {v}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// One full run per grid value; one aggregated, plot-ready row per value.
pub fn cmd_sweep(
    cfg: &RunConfig,
    param: SweepParam,
    grid: &[f64],
    out_dir: &Path,
    allow_ill_posed: bool,
) -> Result<PathBuf> {
    cfg.validate()?;
    validate_grid(param, grid)?;
    std::fs::create_dir_all(out_dir)?;

    let mut rows = Vec::new();
    let mut names: Option<Vec<String>> = None;
    for &value in grid {
        let mut vcfg = cfg.clone();
        match param {
            SweepParam::Beta => vcfg.moo.beta = value,
            SweepParam::MarginM => vcfg.rebalance.margin_m = value,
        }
        let dir = out_dir.join(format!("{param}-{value}"));
        let result = run_experiment(&vcfg, &dir, allow_ill_posed)?;
        names.get_or_insert_with(|| result.report.modality_names.clone());
        rows.push((value, result.report));
    }

    let names = names.expect("grid is nonempty");
    let path = out_dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let werr = |e: csv::Error| TripError::Data(format!("sweep write failed: {e}"));
    let mut header = vec!["param".to_string(), "value".to_string()];
    header.extend(names.iter().map(|n| format!("acc_{n}")));
    header.push("average_mean".to_string());
    header.push("average_std".to_string());
    header.push("delta_m".to_string());
    w.write_record(&header).map_err(werr)?;
    for (value, report) in &rows {
        let mut record = vec![param.to_string(), format!("{value}")];
        record.extend(report.per_modality.iter().map(|s| format!("{}", s.mean)));
        record.push(format!("{}", report.average.mean));
        record.push(format!("{}", report.average.std));
        record.push(report.delta_m.map(|d| format!("{d}")).unwrap_or_default());
        w.write_record(&record).map_err(werr)?;
    }
    w.flush()?;
    write_manifest(cfg, "sweep", out_dir, &[path.clone()])?;
    Ok(path)
}
