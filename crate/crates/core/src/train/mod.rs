//! The training loop: per-modality losses, conflict-averse backbone update,
//! private-group updates, in synchronous or asynchronous mode.

pub mod baseline;
pub mod optimizer;

use serde::{Deserialize, Serialize};

use crate::data::folds::{Fold, Mode};
use crate::data::sampling::{
    self, aligned_pool, class_counts, features_of, labels_of, oversample_modality_balanced,
    SegmentRef,
};
use crate::data::Dataset;
use crate::error::{Result, TripError};
use crate::model::{ModelParams, ModelSpec};
use crate::moo::{self, FlatGradient, MooConfig};
use crate::numerics::{DenseMatrix, Rng};
use crate::rebalance::{self, ClassStats, RebalanceConfig};
use optimizer::{FlatOptimizer, OptimizerKind, ParamOptimizer};

pub(crate) const EARLY_STOP_PATIENCE: usize = 10;
pub(crate) const EARLY_STOP_MIN_DELTA: f64 = 1e-4;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Update rule for private groups (encoders, heads).
    pub optimizer: OptimizerKind,
    /// Update rule applied to the combined backbone direction. The plain
    /// step is the stated update; Adam is available for comparison.
    pub backbone_optimizer: OptimizerKind,
    pub moo: MooConfig,
    pub rebalance: RebalanceConfig,
    pub rebalance_enabled: bool,
    /// When false the backbone follows the plain mean gradient and the
    /// simplex solver never runs.
    pub moo_enabled: bool,
    pub early_stop: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            mode: Mode::Async,
            epochs: 30,
            batch_size: 16,
            learning_rate: 0.01,
            optimizer: OptimizerKind::Adam,
            backbone_optimizer: OptimizerKind::Sgd,
            moo: MooConfig::default(),
            rebalance: RebalanceConfig::default(),
            rebalance_enabled: true,
            moo_enabled: true,
            early_stop: false,
            seed: 7,
        }
    }
}

impl TrainConfig {
    /// Collect every value violation, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.epochs > 100 {
            problems.push(format!("epochs capped at 100, got {}", self.epochs));
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be positive".to_string());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            problems.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if let Err(e) = self.moo.validate() {
            problems.push(format!("{e}"));
        }
        if let Err(e) = self.rebalance.validate() {
            problems.push(format!("{e}"));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(TripError::Config(problems.join("; ")))
        }
    }

    /// Rebalance settings actually applied: disabled runs use zero noise,
    /// zero margin, and (via balanced stats) unit weights.
    pub fn effective_rebalance(&self) -> RebalanceConfig {
        if self.rebalance_enabled {
            self.rebalance.clone()
        } else {
            self.rebalance.without_adjustments()
        }
    }
}

/// One modality's slice of a training step.
#[derive(Debug, Clone)]
pub struct ModalityBatch {
    pub modality: usize,
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub subject_ids: Vec<String>,
}

impl ModalityBatch {
    pub fn from_refs(dataset: &Dataset, refs: &[SegmentRef], modality: usize) -> Result<ModalityBatch> {
        Ok(ModalityBatch {
            modality,
            features: features_of(dataset, refs, modality)?,
            labels: labels_of(refs),
            subject_ids: refs
                .iter()
                .map(|r| dataset.subjects[r.subject].subject_id.clone())
                .collect(),
        })
    }

    fn validate(&self) -> Result<()> {
        let rows = self.features.rows();
        if self.labels.len() != rows || self.subject_ids.len() != rows {
            return Err(TripError::Contract(format!(
                "batch rows {rows}, labels {}, subjects {}",
                self.labels.len(),
                self.subject_ids.len()
            )));
        }
        Ok(())
    }
}

/// Mutable training state: parameters plus optimizer moments and the noise
/// stream. Rebalancing stats are fixed per fold (pools are built once).
pub struct Trainer {
    pub params: ModelParams,
    cfg: TrainConfig,
    stats: Vec<ClassStats>,
    reb: RebalanceConfig,
    noise_rng: Rng,
    private_opt: ParamOptimizer,
    backbone_opt: FlatOptimizer,
}

impl Trainer {
    pub fn new(
        params: ModelParams,
        cfg: TrainConfig,
        stats: Vec<ClassStats>,
        noise_rng: Rng,
    ) -> Result<Trainer> {
        cfg.validate()?;
        if stats.len() != params.spec().num_modalities() {
            return Err(TripError::Contract(format!(
                "{} stat sets for {} modalities",
                stats.len(),
                params.spec().num_modalities()
            )));
        }
        let reb = cfg.effective_rebalance();
        Ok(Trainer {
            private_opt: ParamOptimizer::new(cfg.optimizer),
            backbone_opt: FlatOptimizer::new(cfg.backbone_optimizer),
            params,
            cfg,
            stats,
            reb,
            noise_rng,
        })
    }

    /// One training step over the available modality batches.
    ///
    /// Per modality: forward, rebalanced loss, backward, partition. The
    /// backbone then moves along the conflict-averse combination of the
    /// per-modality backbone gradients (or their mean when the solver is
    /// off, or the single gradient when only one modality arrived); private
    /// groups follow their own gradients. Batches are processed in
    /// ascending modality order whatever order the caller supplies.
    pub fn trip_step(&mut self, batches: &[ModalityBatch]) -> Result<Vec<(usize, f64)>> {
        if batches.is_empty() {
            return Err(TripError::Contract("trip_step needs at least one batch".into()));
        }
        let mut order: Vec<usize> = (0..batches.len()).collect();
        order.sort_by_key(|&i| batches[i].modality);
        for pair in order.windows(2) {
            if batches[pair[0]].modality == batches[pair[1]].modality {
                return Err(TripError::Contract(format!(
                    "two batches for modality {}",
                    batches[pair[0]].modality
                )));
            }
        }

        let mut losses = Vec::with_capacity(batches.len());
        let mut backbone_grads: Vec<FlatGradient> = Vec::with_capacity(batches.len());
        let mut private_updates = Vec::new();
        for &i in &order {
            let batch = &batches[i];
            batch.validate()?;
            let r = batch.modality;
            if r >= self.stats.len() {
                return Err(TripError::Routing(format!("modality {r} out of range")));
            }
            let fwd = self.params.forward(r, &batch.features)?;
            let mut tape = fwd.tape;
            let loss_node = rebalance::rebalanced_loss(
                &mut tape,
                fwd.logits,
                &batch.labels,
                &self.stats[r],
                &self.reb,
                &mut self.noise_rng,
            )?;
            let loss = tape.scalar(loss_node)?;
            if !loss.is_finite() {
                return Err(TripError::Numeric(format!("loss for modality {r} is {loss}")));
            }
            let grads = tape.backward(loss_node)?;
            let parts = self.params.partition_gradients(&grads, r)?;
            losses.push((r, loss));
            backbone_grads.push(parts.backbone);
            private_updates.push((parts.encoder, parts.head));
        }

        let direction = if self.cfg.moo_enabled {
            moo::update_direction(&backbone_grads, &self.cfg.moo)?
        } else {
            moo::average_gradient(&backbone_grads)?
        };
        let deltas = self.backbone_opt.deltas(direction.coords(), self.cfg.learning_rate);
        self.params.apply_backbone_step(&FlatGradient::from_coords(deltas)?, 1.0)?;

        for (encoder, head) in private_updates {
            for (id, grad) in encoder.iter().chain(head.iter()) {
                let value = self
                    .params
                    .param_mut(*id)
                    .ok_or_else(|| TripError::Partition(format!("unknown parameter {id:?}")))?;
                self.private_opt.step(*id, value, grad, self.cfg.learning_rate);
            }
        }
        Ok(losses)
    }
}

/// One averaged loss value. `stream` is "m{r}" for a TRIP modality stream
/// and "fused" for single-loss baselines; it fills the trace CSV's modality
/// column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub stream: String,
    pub loss: f64,
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub trace: Vec<TraceRow>,
    pub stats: Vec<ClassStats>,
}

/// Per-fold seed streams. Ablation variants with one root seed share
/// initializations and data order; the noise stream is separate so
/// rebalancing toggles do not shift batching.
pub struct SeedStreams {
    pub init: Rng,
    pub sampling: Rng,
    pub data: Rng,
    pub noise: Rng,
}

impl SeedStreams {
    pub fn for_fold(seed: u64, fold_idx: u64) -> SeedStreams {
        SeedStreams {
            init: Rng::stream(seed, "init").substream(fold_idx),
            sampling: Rng::stream(seed, "sampling").substream(fold_idx),
            data: Rng::stream(seed, "data").substream(fold_idx),
            noise: Rng::stream(seed, "noise").substream(fold_idx),
        }
    }
}

fn chunk_count(n: usize, batch: usize) -> usize {
    n.div_ceil(batch)
}

/// Class stats per modality from pool label counts. Zero-count classes are
/// a data problem the caller must fix upstream (oversampling cannot invent
/// a missing class).
fn stats_from_pools(
    pools: &[Vec<SegmentRef>],
    num_classes: usize,
    cfg: &TrainConfig,
) -> Result<Vec<ClassStats>> {
    if !cfg.rebalance_enabled {
        return Ok(vec![ClassStats::balanced(num_classes); pools.len()]);
    }
    pools
        .iter()
        .enumerate()
        .map(|(r, pool)| {
            let counts = class_counts(pool, num_classes);
            if let Some(j) = counts.iter().position(|&c| c == 0) {
                return Err(TripError::Data(format!(
                    "class {j} has no training segments in modality {r}"
                )));
            }
            rebalance::compute_class_stats(&counts, &cfg.rebalance)
        })
        .collect()
}

/// Train one fold of the TRIP model.
///
/// Async mode trains each modality from its own modality-balanced pool
/// (independent draws); sync mode trains aligned multimodal batches from
/// complete subjects. Everything is a pure function of (dataset, fold
/// contents, cfg, spec, fold_idx).
pub fn train(
    dataset: &Dataset,
    fold: &Fold,
    cfg: &TrainConfig,
    spec: &ModelSpec,
    fold_idx: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    if spec.modality_dims != dataset.modality_dims {
        return Err(TripError::Config(format!(
            "model dims {:?} do not match dataset dims {:?}",
            spec.modality_dims, dataset.modality_dims
        )));
    }
    if spec.head_mode == crate::model::HeadMode::Shared && cfg.mode != Mode::Sync {
        return Err(TripError::Config("shared head requires synchronous mode".into()));
    }
    let mut streams = SeedStreams::for_fold(cfg.seed, fold_idx);
    let params = ModelParams::init(spec.clone(), &mut streams.init)?;

    let m = dataset.num_modalities();
    let (pools, aligned): (Vec<Vec<SegmentRef>>, Vec<SegmentRef>) = match cfg.mode {
        Mode::Async => {
            let pools =
                oversample_modality_balanced(dataset, &fold.train_subjects, &mut streams.sampling)?;
            (pools, Vec::new())
        }
        Mode::Sync => {
            let aligned = aligned_pool(dataset, &fold.train_subjects)?;
            if aligned.is_empty() {
                return Err(TripError::Split(
                    "sync training needs complete subjects in the training set".into(),
                ));
            }
            (vec![aligned.clone(); m], aligned)
        }
    };
    let stats = stats_from_pools(&pools, dataset.num_classes, cfg)?;
    let mut trainer = Trainer::new(params, cfg.clone(), stats, streams.noise)?;

    let mut trace = Vec::new();
    let mut best_mean = f64::INFINITY;
    let mut stale_epochs = 0;
    for epoch in 0..cfg.epochs {
        let mut epoch_pools;
        let steps;
        match cfg.mode {
            Mode::Async => {
                epoch_pools = pools.clone();
                for pool in &mut epoch_pools {
                    streams.data.shuffle(pool);
                }
                steps = epoch_pools.iter().map(|p| chunk_count(p.len(), cfg.batch_size)).max().unwrap_or(0);
            }
            Mode::Sync => {
                let mut shuffled = aligned.clone();
                streams.data.shuffle(&mut shuffled);
                epoch_pools = vec![shuffled; m];
                steps = chunk_count(epoch_pools[0].len(), cfg.batch_size);
            }
        }

        let mut sums = vec![0.0; m];
        let mut counts = vec![0usize; m];
        for step in 0..steps {
            let mut batches = Vec::with_capacity(m);
            for (r, pool) in epoch_pools.iter().enumerate() {
                let lo = step * cfg.batch_size;
                if lo >= pool.len() {
                    continue;
                }
                let hi = (lo + cfg.batch_size).min(pool.len());
                batches.push(ModalityBatch::from_refs(dataset, &pool[lo..hi], r)?);
            }
            let losses = trainer.trip_step(&batches).map_err(|e| match e {
                TripError::Numeric(msg) => {
                    TripError::Numeric(format!("epoch {epoch} step {step}: {msg}"))
                }
                other => other,
            })?;
            for (r, loss) in losses {
                sums[r] += loss;
                counts[r] += 1;
            }
        }
        for r in 0..m {
            if counts[r] > 0 {
                trace.push(TraceRow {
                    epoch,
                    stream: format!("m{r}"),
                    loss: sums[r] / counts[r] as f64,
                });
            }
        }

        if cfg.early_stop {
            let total: f64 = sums.iter().sum();
            let n: usize = counts.iter().sum();
            let mean = if n > 0 { total / n as f64 } else { f64::INFINITY };
            if best_mean - mean > EARLY_STOP_MIN_DELTA {
                best_mean = mean;
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if stale_epochs >= EARLY_STOP_PATIENCE {
                    break;
                }
            }
        }
    }

    if !trainer.params.all_finite() {
        return Err(TripError::Numeric("non-finite parameters after training".into()));
    }
    Ok(TrainOutcome { params: trainer.params, trace, stats: trainer.stats })
}

/// Write the loss trace as `epoch,modality,loss`.
pub fn write_loss_trace(trace: &[TraceRow], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "modality", "loss"])
        .map_err(|e| TripError::Data(format!("trace write failed: {e}")))?;
    for row in trace {
        w.write_record([row.epoch.to_string(), row.stream.clone(), format!("{}", row.loss)])
            .map_err(|e| TripError::Data(format!("trace write failed: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Segment pools used by the sampling-balance property tests.
pub fn async_train_pools(
    dataset: &Dataset,
    fold: &Fold,
    seed: u64,
    fold_idx: u64,
) -> Result<Vec<Vec<SegmentRef>>> {
    let mut streams = SeedStreams::for_fold(seed, fold_idx);
    sampling::oversample_modality_balanced(dataset, &fold.train_subjects, &mut streams.sampling)
}
