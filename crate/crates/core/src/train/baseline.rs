//! Conventional fusion baselines: early fusion (concatenate raw features),
//! late fusion (independent per-modality streams, concatenated before the
//! head), and shared-latent fusion (linear projections summed elementwise
//! before a common trunk). All use the cosine head and the same loss
//! machinery as the main model, and are capacity-matched to it by hidden
//! width.

use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::folds::{Fold, Mode};
use crate::data::sampling::{aligned_pool, class_counts, oversample_modality_balanced, SegmentRef};
use crate::data::Dataset;
use crate::error::{Result, TripError};
use crate::model::{ModelSpec, ParamTensor};
use crate::numerics::{DenseMatrix, NodeId, ParamId, Rng, Tape};
use crate::rebalance::{self, ClassStats};
use crate::train::optimizer::ParamOptimizer;
use crate::train::{SeedStreams, TraceRow, TrainConfig, EARLY_STOP_MIN_DELTA, EARLY_STOP_PATIENCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Early,
    Late,
    SharedLatent,
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BaselineKind::Early => write!(f, "early"),
            BaselineKind::Late => write!(f, "late"),
            BaselineKind::SharedLatent => write!(f, "shared-latent"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineParams {
    pub kind: BaselineKind,
    pub modality_dims: Vec<usize>,
    pub hidden_width: usize,
    pub backbone_depth: usize,
    pub num_classes: usize,
    pub cosine_scale: f64,
    /// Early: one group over the concatenated input. Late: one full stream
    /// (encoder + trunk layers) per modality. Shared-latent: one linear
    /// projection per modality.
    groups: Vec<Vec<ParamTensor>>,
    /// Early and shared-latent: the common trunk. Late: empty.
    trunk: Vec<ParamTensor>,
    head: ParamTensor,
}

/// Scalar parameter count of a baseline at hidden width `h`.
pub fn baseline_param_count(
    kind: BaselineKind,
    dims: &[usize],
    depth: usize,
    num_classes: usize,
    h: usize,
) -> usize {
    let m = dims.len();
    let total_d: usize = dims.iter().sum();
    let trunk = depth * (h * h + h);
    match kind {
        BaselineKind::Early => total_d * h + h + trunk + num_classes * h,
        BaselineKind::Late => {
            dims.iter().map(|d| d * h + h).sum::<usize>() + m * trunk + num_classes * m * h
        }
        BaselineKind::SharedLatent => {
            dims.iter().map(|d| d * h + h).sum::<usize>() + trunk + num_classes * h
        }
    }
}

/// Hidden width whose parameter count lands closest to `target`, required
/// within ten percent.
pub fn capacity_matched_width(
    kind: BaselineKind,
    dims: &[usize],
    depth: usize,
    num_classes: usize,
    target: usize,
) -> Result<usize> {
    let mut best = (usize::MAX, 0usize);
    for h in 1..=1024 {
        let count = baseline_param_count(kind, dims, depth, num_classes, h);
        let gap = count.abs_diff(target);
        if gap < best.0 {
            best = (gap, h);
        }
        if count > target * 2 {
            break;
        }
    }
    let (gap, h) = best;
    if gap * 10 > target {
        return Err(TripError::Config(format!(
            "no {kind} width lands within 10% of {target} parameters"
        )));
    }
    Ok(h)
}

fn xavier(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut Rng) -> DenseMatrix {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut m = DenseMatrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng.uniform(-a, a);
    }
    m
}

impl BaselineParams {
    /// Initialize at a capacity-matched width. Draw order: groups by
    /// modality, then trunk, then head.
    pub fn init(kind: BaselineKind, spec: &ModelSpec, rng: &mut Rng) -> Result<BaselineParams> {
        spec.validate()?;
        let dims = &spec.modality_dims;
        let depth = spec.backbone_depth;
        let k = spec.num_classes;
        let h = capacity_matched_width(kind, dims, depth, k, spec.param_count())?;

        let mut next_id = 0u32;
        let mut fresh = |value: DenseMatrix| {
            let t = ParamTensor { id: ParamId(next_id), value };
            next_id += 1;
            t
        };
        let linear = |d_in: usize, d_out: usize, rng: &mut Rng| {
            let w = xavier(d_in, d_out, d_in, d_out, rng);
            let b = DenseMatrix::zeros(1, d_out);
            (w, b)
        };

        let mut groups = Vec::new();
        let mut trunk = Vec::new();
        let head_in;
        match kind {
            BaselineKind::Early => {
                let total_d: usize = dims.iter().sum();
                let (w, b) = linear(total_d, h, rng);
                groups.push(vec![fresh(w), fresh(b)]);
                for _ in 0..depth {
                    let (w, b) = linear(h, h, rng);
                    trunk.push(fresh(w));
                    trunk.push(fresh(b));
                }
                head_in = h;
            }
            BaselineKind::Late => {
                for &d in dims {
                    let mut stream = Vec::new();
                    let (w, b) = linear(d, h, rng);
                    stream.push(fresh(w));
                    stream.push(fresh(b));
                    for _ in 0..depth {
                        let (w, b) = linear(h, h, rng);
                        stream.push(fresh(w));
                        stream.push(fresh(b));
                    }
                    groups.push(stream);
                }
                head_in = h * dims.len();
            }
            BaselineKind::SharedLatent => {
                for &d in dims {
                    let (w, b) = linear(d, h, rng);
                    groups.push(vec![fresh(w), fresh(b)]);
                }
                for _ in 0..depth {
                    let (w, b) = linear(h, h, rng);
                    trunk.push(fresh(w));
                    trunk.push(fresh(b));
                }
                head_in = h;
            }
        }
        let head = fresh(xavier(k, head_in, head_in, k, rng));
        Ok(BaselineParams {
            kind,
            modality_dims: dims.clone(),
            hidden_width: h,
            backbone_depth: depth,
            num_classes: k,
            cosine_scale: spec.cosine_scale,
            groups,
            trunk,
            head,
        })
    }

    pub fn param_mut(&mut self, id: ParamId) -> Option<&mut DenseMatrix> {
        self.groups
            .iter_mut()
            .flatten()
            .chain(self.trunk.iter_mut())
            .chain(std::iter::once(&mut self.head))
            .find(|t| t.id == id)
            .map(|t| &mut t.value)
    }

    pub fn all_finite(&self) -> bool {
        self.groups
            .iter()
            .flatten()
            .chain(self.trunk.iter())
            .chain(std::iter::once(&self.head))
            .all(|t| t.value.is_finite())
    }

    /// Fused forward pass over aligned per-modality features. Masked
    /// modalities contribute zero tensors of their shape, which is exactly
    /// the test-time collapse probe.
    pub fn forward(&self, features: &[DenseMatrix], mask: &[bool]) -> Result<(Tape, NodeId)> {
        let m = self.modality_dims.len();
        if features.len() != m || mask.len() != m {
            return Err(TripError::Contract(format!(
                "{} feature blocks and {} mask entries for {m} modalities",
                features.len(),
                mask.len()
            )));
        }
        if !mask.iter().any(|&b| b) {
            return Err(TripError::Contract("mask excludes all modalities".into()));
        }
        let rows = features[0].rows();
        for (r, f) in features.iter().enumerate() {
            if f.rows() != rows {
                return Err(TripError::Shape("feature blocks must share the row count".into()));
            }
            if f.cols() != self.modality_dims[r] {
                return Err(TripError::Shape(format!(
                    "modality {r} expects {} features, got {}",
                    self.modality_dims[r],
                    f.cols()
                )));
            }
        }
        let masked: Vec<DenseMatrix> = features
            .iter()
            .zip(mask)
            .map(|(f, &keep)| if keep { f.clone() } else { DenseMatrix::zeros(f.rows(), f.cols()) })
            .collect();

        let mut tape = Tape::new();
        let apply_linear = |tape: &mut Tape, x: NodeId, w: &ParamTensor, b: &ParamTensor| -> Result<NodeId> {
            let wn = tape.param(w.id, w.value.clone());
            let bn = tape.param(b.id, b.value.clone());
            let lin = tape.matmul(x, wn)?;
            tape.add_bias(lin, bn)
        };

        let pre_head = match self.kind {
            BaselineKind::Early => {
                let concat_rows: Vec<Vec<f64>> = (0..rows)
                    .map(|i| masked.iter().flat_map(|f| f.row(i).to_vec()).collect())
                    .collect();
                let mut h = tape.constant(DenseMatrix::from_rows(&concat_rows)?);
                let group = &self.groups[0];
                let lin = apply_linear(&mut tape, h, &group[0], &group[1])?;
                h = tape.relu(lin);
                for layer in self.trunk.chunks(2) {
                    let lin = apply_linear(&mut tape, h, &layer[0], &layer[1])?;
                    h = tape.relu(lin);
                }
                h
            }
            BaselineKind::Late => {
                let mut streams = Vec::with_capacity(m);
                for (r, f) in masked.iter().enumerate() {
                    let mut h = tape.constant(f.clone());
                    for layer in self.groups[r].chunks(2) {
                        let lin = apply_linear(&mut tape, h, &layer[0], &layer[1])?;
                        h = tape.relu(lin);
                    }
                    streams.push(h);
                }
                tape.concat_cols(&streams)?
            }
            BaselineKind::SharedLatent => {
                let mut fused = None;
                for (r, f) in masked.iter().enumerate() {
                    let x = tape.constant(f.clone());
                    let group = &self.groups[r];
                    let projected = apply_linear(&mut tape, x, &group[0], &group[1])?;
                    fused = Some(match fused {
                        None => projected,
                        Some(acc) => tape.add(acc, projected)?,
                    });
                }
                let mut h = fused.expect("at least one modality");
                for layer in self.trunk.chunks(2) {
                    let lin = apply_linear(&mut tape, h, &layer[0], &layer[1])?;
                    h = tape.relu(lin);
                }
                h
            }
        };
        let head = tape.param(self.head.id, self.head.value.clone());
        let logits = tape.cosine_head(pre_head, head, self.cosine_scale)?;
        Ok((tape, logits))
    }
}

pub struct BaselineOutcome {
    pub params: BaselineParams,
    pub trace: Vec<TraceRow>,
    pub stats: ClassStats,
}

/// Train one fold of a fusion baseline with a single fused loss.
///
/// Baselines need aligned rows, so asynchronous mode is refused unless the
/// caller explicitly allows the ill-posed comparison; the flagged variant
/// zips the modality-balanced pools positionally, mixing subjects across
/// modalities within a row (labels follow the first modality's stream).
pub fn train_baseline(
    kind: BaselineKind,
    dataset: &Dataset,
    fold: &Fold,
    cfg: &TrainConfig,
    spec: &ModelSpec,
    fold_idx: u64,
    allow_ill_posed: bool,
) -> Result<BaselineOutcome> {
    cfg.validate()?;
    if cfg.mode == Mode::Async && !allow_ill_posed {
        return Err(TripError::Config(format!(
            "asynchronous training is ill-posed for the {kind} baseline; rerun with --allow-ill-posed to force the comparison"
        )));
    }
    if spec.modality_dims != dataset.modality_dims {
        return Err(TripError::Config(format!(
            "model dims {:?} do not match dataset dims {:?}",
            spec.modality_dims, dataset.modality_dims
        )));
    }
    let mut streams = SeedStreams::for_fold(cfg.seed, fold_idx);
    let mut params = BaselineParams::init(kind, spec, &mut streams.init)?;

    let m = dataset.num_modalities();
    let full_mask = vec![true; m];
    // Row plan: per step row i, one SegmentRef per modality.
    let base_rows: Vec<Vec<SegmentRef>> = match cfg.mode {
        Mode::Sync => {
            let aligned = aligned_pool(dataset, &fold.train_subjects)?;
            if aligned.is_empty() {
                return Err(TripError::Split(
                    "sync training needs complete subjects in the training set".into(),
                ));
            }
            aligned.into_iter().map(|sref| vec![sref; m]).collect()
        }
        Mode::Async => {
            let pools =
                oversample_modality_balanced(dataset, &fold.train_subjects, &mut streams.sampling)?;
            let n = pools[0].len();
            (0..n).map(|i| pools.iter().map(|p| p[i]).collect()).collect()
        }
    };

    let stats = if cfg.rebalance_enabled {
        let counts = class_counts(
            &base_rows.iter().map(|row| row[0]).collect::<Vec<_>>(),
            dataset.num_classes,
        );
        if let Some(j) = counts.iter().position(|&c| c == 0) {
            return Err(TripError::Data(format!("class {j} has no training rows")));
        }
        rebalance::compute_class_stats(&counts, &cfg.rebalance)?
    } else {
        ClassStats::balanced(dataset.num_classes)
    };
    let reb = cfg.effective_rebalance();
    let mut opt = ParamOptimizer::new(cfg.optimizer);

    let mut trace = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..base_rows.len()).collect();
    for epoch in 0..cfg.epochs {
        streams.data.shuffle(&mut order);
        let mut sum = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&Vec<SegmentRef>> = chunk.iter().map(|&i| &base_rows[i]).collect();
            let labels: Vec<usize> = refs.iter().map(|row| row[0].label).collect();
            let features: Vec<DenseMatrix> = (0..m)
                .map(|r| {
                    let rows: Vec<Vec<f64>> = refs
                        .iter()
                        .map(|row| {
                            let sref = row[r];
                            dataset.subjects[sref.subject].segments[r].as_ref().expect("pooled")
                                [sref.segment]
                                .clone()
                        })
                        .collect();
                    DenseMatrix::from_rows(&rows)
                })
                .collect::<Result<_>>()?;
            let (mut tape, logits) = params.forward(&features, &full_mask)?;
            let loss_node = rebalance::rebalanced_loss(
                &mut tape,
                logits,
                &labels,
                &stats,
                &reb,
                &mut streams.noise,
            )?;
            let loss = tape.scalar(loss_node)?;
            if !loss.is_finite() {
                return Err(TripError::Numeric(format!(
                    "epoch {epoch} step {steps}: {kind} loss is {loss}"
                )));
            }
            let grads = tape.backward(loss_node)?;
            for (&id, grad) in grads.iter() {
                let value = params
                    .param_mut(id)
                    .ok_or_else(|| TripError::Partition(format!("unknown parameter {id:?}")))?;
                opt.step(id, value, grad, cfg.learning_rate);
            }
            sum += loss;
            steps += 1;
        }
        let mean = if steps > 0 { sum / steps as f64 } else { f64::INFINITY };
        trace.push(TraceRow { epoch, stream: "fused".to_string(), loss: mean });
        if cfg.early_stop {
            if best - mean > EARLY_STOP_MIN_DELTA {
                best = mean;
                stale = 0;
            } else {
                stale += 1;
                if stale >= EARLY_STOP_PATIENCE {
                    break;
                }
            }
        }
    }
    if !params.all_finite() {
        return Err(TripError::Numeric("non-finite parameters after training".into()));
    }
    Ok(BaselineOutcome { params, trace, stats })
}

#[derive(Serialize, Deserialize)]
struct BaselineCheckpoint {
    format_version: u32,
    kind: String,
    params: BaselineParams,
}

pub fn save_baseline_checkpoint(params: &BaselineParams, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let checkpoint = BaselineCheckpoint {
        format_version: crate::model::CHECKPOINT_VERSION,
        kind: format!("baseline-{}", params.kind),
        params: params.clone(),
    };
    serde_json::to_writer(BufWriter::new(file), &checkpoint)
        .map_err(|e| TripError::Data(format!("checkpoint write failed: {e}")))?;
    Ok(())
}

pub fn load_baseline_checkpoint(path: &Path) -> Result<BaselineParams> {
    let file = std::fs::File::open(path)?;
    let checkpoint: BaselineCheckpoint = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| TripError::Data(format!("checkpoint parse failed ({}): {e}", path.display())))?;
    if checkpoint.format_version != crate::model::CHECKPOINT_VERSION {
        return Err(TripError::Data(format!(
            "checkpoint version {} unsupported",
            checkpoint.format_version
        )));
    }
    Ok(checkpoint.params)
}
