//! The network family under training: one encoder per modality, a shared
//! backbone, and cosine-normalized heads (per modality, or one shared head
//! for synchronous inputs).
//!
//! Parameters split into three disjoint groups. Encoders and heads are
//! private to their modality and always follow their own loss; the backbone
//! is shared and follows the conflict-averse combined direction. Group
//! membership is fixed at init and never changes.

use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TripError};
use crate::moo::FlatGradient;
use crate::numerics::{DenseMatrix, Gradients, NodeId, ParamId, Rng, Tape};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadMode {
    PerModality,
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub modality_dims: Vec<usize>,
    pub hidden_width: usize,
    pub backbone_depth: usize,
    pub num_classes: usize,
    pub head_mode: HeadMode,
    pub cosine_scale: f64,
}

impl ModelSpec {
    pub fn new(modality_dims: Vec<usize>, num_classes: usize) -> ModelSpec {
        ModelSpec {
            modality_dims,
            hidden_width: 32,
            backbone_depth: 2,
            num_classes,
            head_mode: HeadMode::PerModality,
            cosine_scale: 16.0,
        }
    }

    pub fn num_modalities(&self) -> usize {
        self.modality_dims.len()
    }

    pub fn num_heads(&self) -> usize {
        match self.head_mode {
            HeadMode::PerModality => self.num_modalities(),
            HeadMode::Shared => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modality_dims.is_empty() || self.modality_dims.len() > 3 {
            return Err(TripError::Config(format!(
                "1 to 3 modalities supported, got {}",
                self.modality_dims.len()
            )));
        }
        if self.modality_dims.iter().any(|&d| d == 0) {
            return Err(TripError::Config("modality dims must be at least 1".into()));
        }
        if self.hidden_width == 0 || self.backbone_depth == 0 {
            return Err(TripError::Config("hidden_width and backbone_depth must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(TripError::Config("need at least two classes".into()));
        }
        if !(self.cosine_scale.is_finite() && self.cosine_scale > 0.0) {
            return Err(TripError::Config(format!(
                "cosine_scale must be positive, got {}",
                self.cosine_scale
            )));
        }
        Ok(())
    }

    /// Total scalar parameter count; used for capacity-matching baselines.
    pub fn param_count(&self) -> usize {
        let h = self.hidden_width;
        let enc: usize = self.modality_dims.iter().map(|d| d * h + h).sum();
        let backbone = self.backbone_depth * (h * h + h);
        let heads = self.num_heads() * self.num_classes * h;
        enc + backbone + heads
    }
}

/// Which disjoint group a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Encoder(usize),
    Backbone,
    Head(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub id: ParamId,
    pub value: DenseMatrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    spec: ModelSpec,
    encoders: Vec<Vec<ParamTensor>>,
    backbone: Vec<ParamTensor>,
    heads: Vec<Vec<ParamTensor>>,
}

/// Tape plus the logits node for one modality's forward pass.
pub struct ForwardResult {
    pub tape: Tape,
    pub logits: NodeId,
}

/// One modality's gradients split by group. The backbone part is flattened
/// in the model's canonical coordinate order.
pub struct PartitionedGradients {
    pub encoder: Vec<(ParamId, DenseMatrix)>,
    pub backbone: FlatGradient,
    pub head: Vec<(ParamId, DenseMatrix)>,
}

fn xavier_uniform(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut Rng) -> DenseMatrix {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut m = DenseMatrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng.uniform(-a, a);
    }
    m
}

impl ModelParams {
    /// Initialize all groups. Weights are Xavier-uniform, biases zero.
    /// Draw order is fixed: encoders by modality, then backbone layers, then
    /// heads, weights row-major; the same seed always yields the same net.
    pub fn init(spec: ModelSpec, rng: &mut Rng) -> Result<ModelParams> {
        spec.validate()?;
        let h = spec.hidden_width;
        let mut next_id = 0u32;
        let mut fresh = |value: DenseMatrix| {
            let t = ParamTensor { id: ParamId(next_id), value };
            next_id += 1;
            t
        };

        let mut encoders = Vec::new();
        for &d in &spec.modality_dims {
            let w = xavier_uniform(d, h, d, h, rng);
            let b = DenseMatrix::zeros(1, h);
            encoders.push(vec![fresh(w), fresh(b)]);
        }
        let mut backbone = Vec::new();
        for _ in 0..spec.backbone_depth {
            let w = xavier_uniform(h, h, h, h, rng);
            let b = DenseMatrix::zeros(1, h);
            backbone.push(fresh(w));
            backbone.push(fresh(b));
        }
        let mut heads = Vec::new();
        for _ in 0..spec.num_heads() {
            let w = xavier_uniform(spec.num_classes, h, h, spec.num_classes, rng);
            heads.push(vec![fresh(w)]);
        }
        Ok(ModelParams { spec, encoders, backbone, heads })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Group that owns `id`, if any.
    pub fn locate(&self, id: ParamId) -> Option<ParamGroup> {
        for (r, group) in self.encoders.iter().enumerate() {
            if group.iter().any(|t| t.id == id) {
                return Some(ParamGroup::Encoder(r));
            }
        }
        if self.backbone.iter().any(|t| t.id == id) {
            return Some(ParamGroup::Backbone);
        }
        for (q, group) in self.heads.iter().enumerate() {
            if group.iter().any(|t| t.id == id) {
                return Some(ParamGroup::Head(q));
            }
        }
        None
    }

    /// Head index serving a modality under the current head mode.
    pub fn head_index(&self, modality: usize) -> usize {
        match self.spec.head_mode {
            HeadMode::PerModality => modality,
            HeadMode::Shared => 0,
        }
    }

    pub fn param_mut(&mut self, id: ParamId) -> Option<&mut DenseMatrix> {
        self.encoders
            .iter_mut()
            .flatten()
            .chain(self.backbone.iter_mut())
            .chain(self.heads.iter_mut().flatten())
            .find(|t| t.id == id)
            .map(|t| &mut t.value)
    }

    pub fn param(&self, id: ParamId) -> Option<&DenseMatrix> {
        self.encoders
            .iter()
            .flatten()
            .chain(self.backbone.iter())
            .chain(self.heads.iter().flatten())
            .find(|t| t.id == id)
            .map(|t| &t.value)
    }

    pub fn backbone_len(&self) -> usize {
        self.backbone.iter().map(|t| t.value.rows() * t.value.cols()).sum()
    }

    /// Backbone coordinates in the canonical flattening order.
    pub fn backbone_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.backbone_len());
        for t in &self.backbone {
            out.extend_from_slice(t.value.data());
        }
        out
    }

    /// Forward one modality's batch. The backbone always participates; the
    /// encoder and head are the modality's own (or the shared head).
    pub fn forward(&self, modality: usize, features: &DenseMatrix) -> Result<ForwardResult> {
        if modality >= self.spec.num_modalities() {
            return Err(TripError::Routing(format!(
                "modality {modality} out of range for {} modalities",
                self.spec.num_modalities()
            )));
        }
        if features.cols() != self.spec.modality_dims[modality] {
            return Err(TripError::Shape(format!(
                "modality {modality} expects {} features, got {}",
                self.spec.modality_dims[modality],
                features.cols()
            )));
        }
        let mut tape = Tape::new();
        let mut h = tape.constant(features.clone());
        let enc = &self.encoders[modality];
        h = {
            let w = tape.param(enc[0].id, enc[0].value.clone());
            let b = tape.param(enc[1].id, enc[1].value.clone());
            let lin = tape.matmul(h, w)?;
            let biased = tape.add_bias(lin, b)?;
            tape.relu(biased)
        };
        for layer in self.backbone.chunks(2) {
            let w = tape.param(layer[0].id, layer[0].value.clone());
            let b = tape.param(layer[1].id, layer[1].value.clone());
            let lin = tape.matmul(h, w)?;
            let biased = tape.add_bias(lin, b)?;
            h = tape.relu(biased);
        }
        let head = &self.heads[self.head_index(modality)];
        let hw = tape.param(head[0].id, head[0].value.clone());
        let logits = tape.cosine_head(h, hw, self.spec.cosine_scale)?;
        Ok(ForwardResult { tape, logits })
    }

    /// Split one backward pass's gradients into encoder / backbone / head
    /// parts for the evaluated modality.
    ///
    /// Any gradient touching another modality's private group is a partition
    /// violation, as is an incomplete backbone gradient: the loss is wired
    /// through every backbone tensor, so all of them must appear.
    pub fn partition_gradients(
        &self,
        grads: &Gradients,
        modality: usize,
    ) -> Result<PartitionedGradients> {
        if modality >= self.spec.num_modalities() {
            return Err(TripError::Routing(format!(
                "modality {modality} out of range for {} modalities",
                self.spec.num_modalities()
            )));
        }
        let own_head = self.head_index(modality);
        let mut encoder = Vec::new();
        let mut head = Vec::new();
        let mut backbone_parts: Vec<Option<&DenseMatrix>> = vec![None; self.backbone.len()];
        for (&id, grad) in grads.iter() {
            match self.locate(id) {
                Some(ParamGroup::Encoder(r)) if r == modality => encoder.push((id, grad.clone())),
                Some(ParamGroup::Encoder(r)) => {
                    return Err(TripError::Partition(format!(
                        "modality {modality} loss produced gradient for encoder {r}"
                    )))
                }
                Some(ParamGroup::Head(q)) if q == own_head => head.push((id, grad.clone())),
                Some(ParamGroup::Head(q)) => {
                    return Err(TripError::Partition(format!(
                        "modality {modality} loss produced gradient for head {q}"
                    )))
                }
                Some(ParamGroup::Backbone) => {
                    let slot = self
                        .backbone
                        .iter()
                        .position(|t| t.id == id)
                        .expect("located in backbone");
                    backbone_parts[slot] = Some(grad);
                }
                None => {
                    return Err(TripError::Partition(format!(
                        "gradient for unknown parameter {id:?}"
                    )))
                }
            }
        }
        let mut coords = Vec::with_capacity(self.backbone_len());
        for (slot, part) in backbone_parts.iter().enumerate() {
            match part {
                Some(grad) => {
                    let t = &self.backbone[slot];
                    if grad.rows() != t.value.rows() || grad.cols() != t.value.cols() {
                        return Err(TripError::Shape(format!(
                            "backbone gradient {}x{} against parameter {}x{}",
                            grad.rows(),
                            grad.cols(),
                            t.value.rows(),
                            t.value.cols()
                        )));
                    }
                    coords.extend_from_slice(grad.data());
                }
                None => {
                    return Err(TripError::Partition(format!(
                        "backbone tensor {slot} received no gradient"
                    )))
                }
            }
        }
        Ok(PartitionedGradients { encoder, backbone: FlatGradient::from_coords(coords)?, head })
    }

    /// Inverse of the canonical flattening used by `partition_gradients`.
    pub fn unflatten_backbone(&self, flat: &FlatGradient) -> Result<Vec<DenseMatrix>> {
        if flat.len() != self.backbone_len() {
            return Err(TripError::Shape(format!(
                "flat gradient has {} coordinates, backbone has {}",
                flat.len(),
                self.backbone_len()
            )));
        }
        let mut out = Vec::with_capacity(self.backbone.len());
        let mut offset = 0;
        for t in &self.backbone {
            let n = t.value.rows() * t.value.cols();
            let chunk = flat.coords()[offset..offset + n].to_vec();
            out.push(DenseMatrix::from_vec(t.value.rows(), t.value.cols(), chunk)?);
            offset += n;
        }
        Ok(out)
    }

    /// Plain descent step on the shared backbone: phi <- phi - lr * d.
    pub fn apply_backbone_step(&mut self, direction: &FlatGradient, lr: f64) -> Result<()> {
        if direction.len() != self.backbone_len() {
            return Err(TripError::Shape(format!(
                "direction has {} coordinates, backbone has {}",
                direction.len(),
                self.backbone_len()
            )));
        }
        let mut offset = 0;
        for t in &mut self.backbone {
            for v in t.value.data_mut() {
                *v -= lr * direction.coords()[offset];
                offset += 1;
            }
        }
        Ok(())
    }

    pub fn encoder_param_ids(&self, modality: usize) -> Vec<ParamId> {
        self.encoders[modality].iter().map(|t| t.id).collect()
    }

    pub fn head_param_ids(&self, modality: usize) -> Vec<ParamId> {
        self.heads[self.head_index(modality)].iter().map(|t| t.id).collect()
    }

    pub fn backbone_param_ids(&self) -> Vec<ParamId> {
        self.backbone.iter().map(|t| t.id).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.encoders
            .iter()
            .flatten()
            .chain(self.backbone.iter())
            .chain(self.heads.iter().flatten())
            .all(|t| t.value.is_finite())
    }

    fn validate_consistent(&self) -> Result<()> {
        self.spec.validate()?;
        let h = self.spec.hidden_width;
        if self.encoders.len() != self.spec.num_modalities() {
            return Err(TripError::Data("encoder group count mismatch".into()));
        }
        for (r, group) in self.encoders.iter().enumerate() {
            let d = self.spec.modality_dims[r];
            if group.len() != 2
                || group[0].value.rows() != d
                || group[0].value.cols() != h
                || group[1].value.rows() != 1
                || group[1].value.cols() != h
            {
                return Err(TripError::Data(format!("encoder {r} tensors malformed")));
            }
        }
        if self.backbone.len() != 2 * self.spec.backbone_depth {
            return Err(TripError::Data("backbone tensor count mismatch".into()));
        }
        for layer in self.backbone.chunks(2) {
            if layer[0].value.rows() != h
                || layer[0].value.cols() != h
                || layer[1].value.rows() != 1
                || layer[1].value.cols() != h
            {
                return Err(TripError::Data("backbone tensors malformed".into()));
            }
        }
        if self.heads.len() != self.spec.num_heads() {
            return Err(TripError::Data("head group count mismatch".into()));
        }
        for group in &self.heads {
            if group.len() != 1
                || group[0].value.rows() != self.spec.num_classes
                || group[0].value.cols() != h
            {
                return Err(TripError::Data("head tensors malformed".into()));
            }
        }
        let mut ids: Vec<u32> = self
            .encoders
            .iter()
            .flatten()
            .chain(self.backbone.iter())
            .chain(self.heads.iter().flatten())
            .map(|t| t.id.0)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        let total = self.encoders.iter().map(Vec::len).sum::<usize>()
            + self.backbone.len()
            + self.heads.iter().map(Vec::len).sum::<usize>();
        if ids.len() != total {
            return Err(TripError::Data("duplicate parameter ids".into()));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    kind: String,
    params: ModelParams,
}

/// Write a versioned JSON checkpoint. serde emits fields in declaration
/// order and floats in shortest round-trip form, so the same parameters
/// always produce the same bytes.
pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let checkpoint = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        kind: "trip".to_string(),
        params: params.clone(),
    };
    serde_json::to_writer(BufWriter::new(file), &checkpoint)
        .map_err(|e| TripError::Data(format!("checkpoint write failed: {e}")))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let file = std::fs::File::open(path)?;
    let checkpoint: Checkpoint = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| TripError::Data(format!("checkpoint parse failed ({}): {e}", path.display())))?;
    if checkpoint.format_version != CHECKPOINT_VERSION {
        return Err(TripError::Data(format!(
            "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
            checkpoint.format_version
        )));
    }
    if checkpoint.kind != "trip" {
        return Err(TripError::Data(format!("checkpoint kind '{}' is not a trip model", checkpoint.kind)));
    }
    checkpoint.params.validate_consistent()?;
    Ok(checkpoint.params)
}
