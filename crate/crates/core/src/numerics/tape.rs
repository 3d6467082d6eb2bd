use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TripError};
use crate::numerics::matrix::DenseMatrix;

/// Identifies one parameter tensor across tapes. Ids are assigned by the
/// model at init time and stay stable for the life of the parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub u32);

/// Index of a node on one tape. Only meaningful for the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Norm floor for cosine normalization. Inside the floor region the head
/// output is treated as constant by backward: the true derivative blows up
/// as 1/norm there and would poison the update.
const COSINE_NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    ConcatCols(Vec<NodeId>),
    AddBias { x: NodeId, bias: NodeId },
    Relu(NodeId),
    CosineHead { features: NodeId, weights: NodeId, scale: f64 },
    WeightedSoftmaxCe { logits: NodeId, labels: Vec<usize>, class_weights: Vec<f64>, shift: DenseMatrix },
    HalfSumSquares(NodeId),
}

#[derive(Debug)]
struct Node {
    value: DenseMatrix,
    op: Op,
}

/// Gradients keyed by parameter id. Parameters a tape never touched are
/// absent from the map, not zero-filled; callers can tell "no flow" from
/// "flow that cancelled to zero".
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    map: BTreeMap<ParamId, DenseMatrix>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&DenseMatrix> {
        self.map.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamId, &DenseMatrix)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn accumulate(&mut self, id: ParamId, grad: &DenseMatrix) -> Result<()> {
        match self.map.get_mut(&id) {
            Some(existing) => existing.add_assign(grad),
            None => {
                self.map.insert(id, grad.clone());
                Ok(())
            }
        }
    }
}

/// Append-only computation tape. Operations record their inputs by node id;
/// `backward` replays the tape in reverse to accumulate parameter gradients.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: DenseMatrix, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &DenseMatrix {
        &self.nodes[id.0].value
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        let v = self.value(id);
        if v.rows() != 1 || v.cols() != 1 {
            return Err(TripError::Contract(format!(
                "expected scalar node, got {}x{}",
                v.rows(),
                v.cols()
            )));
        }
        Ok(v.get(0, 0))
    }

    /// Leaf with no gradient flow (inputs, frozen shift matrices).
    pub fn constant(&mut self, value: DenseMatrix) -> NodeId {
        self.push(value, Op::Constant)
    }

    /// Leaf that collects gradient under `id`. Registering the same id on
    /// several leaves is allowed; their gradients sum.
    pub fn param(&mut self, id: ParamId, value: DenseMatrix) -> NodeId {
        self.push(value, Op::Param(id))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// Elementwise sum of two equally shaped nodes.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Concatenate nodes along columns; all inputs share the row count.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(TripError::Contract("concat needs at least one node".into()));
        }
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(TripError::Shape("concat inputs must share the row count".into()));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = DenseMatrix::zeros(rows, total);
        for r in 0..rows {
            let mut c = 0;
            for &p in parts {
                for v in self.value(p).row(r) {
                    value.set(r, c, *v);
                    c += 1;
                }
            }
        }
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    /// Broadcast-add a 1xC bias row onto every row of `x`.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        let bv = self.value(bias);
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(TripError::Shape(format!(
                "bias {}x{} against activations {}x{}",
                bv.rows(),
                bv.cols(),
                xv.rows(),
                xv.cols()
            )));
        }
        let mut value = xv.clone();
        for r in 0..value.rows() {
            for c in 0..value.cols() {
                let v = value.get(r, c) + bv.get(0, c);
                value.set(r, c, v);
            }
        }
        Ok(self.push(value, Op::AddBias { x, bias }))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let mut value = self.value(x).clone();
        for v in value.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self.push(value, Op::Relu(x))
    }

    /// Cosine-normalized classification head.
    ///
    /// features: B x H, weights: K x H (one row per class). Output B x K with
    /// entries `scale * clamp(dot / max(|s||w|, floor), -1, 1)`.
    pub fn cosine_head(&mut self, features: NodeId, weights: NodeId, scale: f64) -> Result<NodeId> {
        let f = self.value(features);
        let w = self.value(weights);
        if f.cols() != w.cols() {
            return Err(TripError::Shape(format!(
                "cosine head features {}x{} against weights {}x{}",
                f.rows(),
                f.cols(),
                w.rows(),
                w.cols()
            )));
        }
        let mut value = DenseMatrix::zeros(f.rows(), w.rows());
        for i in 0..f.rows() {
            let s = f.row(i);
            let ns = norm(s);
            for j in 0..w.rows() {
                let wj = w.row(j);
                let dot = dot(s, wj);
                let denom = (ns * norm(wj)).max(COSINE_NORM_FLOOR);
                value.set(i, j, scale * (dot / denom).clamp(-1.0, 1.0));
            }
        }
        Ok(self.push(value, Op::CosineHead { features, weights, scale }))
    }

    /// Class-weighted softmax cross-entropy over shifted logits.
    ///
    /// `shift` is added to the logits as a constant (no gradient); it carries
    /// the frozen noise and margin terms. Output is the 1x1 batch mean of
    /// `class_weights[y_i] * (-log softmax(z + shift)_{y_i})`.
    pub fn weighted_softmax_ce(
        &mut self,
        logits: NodeId,
        labels: &[usize],
        class_weights: &[f64],
        shift: DenseMatrix,
    ) -> Result<NodeId> {
        let z = self.value(logits);
        let (b, k) = (z.rows(), z.cols());
        if labels.len() != b {
            return Err(TripError::Shape(format!("{} labels for {b} rows", labels.len())));
        }
        if class_weights.len() != k {
            return Err(TripError::Shape(format!(
                "{} class weights for {k} classes",
                class_weights.len()
            )));
        }
        if shift.rows() != b || shift.cols() != k {
            return Err(TripError::Shape(format!(
                "shift {}x{} against logits {b}x{k}",
                shift.rows(),
                shift.cols()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(TripError::Contract(format!("label {bad} out of range for {k} classes")));
        }
        let mut total = 0.0;
        for i in 0..b {
            let row: Vec<f64> = (0..k).map(|j| z.get(i, j) + shift.get(i, j)).collect();
            total += class_weights[labels[i]] * (log_sum_exp(&row) - row[labels[i]]);
        }
        let value = DenseMatrix::from_vec(1, 1, vec![total / b as f64])?;
        Ok(self.push(
            value,
            Op::WeightedSoftmaxCe {
                logits,
                labels: labels.to_vec(),
                class_weights: class_weights.to_vec(),
                shift,
            },
        ))
    }

    /// 0.5 * sum of squares, used as a simple scalar objective in tests.
    pub fn half_sum_squares(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let total: f64 = v.data().iter().map(|a| 0.5 * a * a).sum();
        let value = DenseMatrix::from_vec(1, 1, vec![total]).expect("1x1");
        self.push(value, Op::HalfSumSquares(x))
    }

    /// Reverse sweep from a scalar seed node. Returns gradients for every
    /// parameter the seed actually depends on.
    pub fn backward(&self, seed: NodeId) -> Result<Gradients> {
        let seed_value = self.value(seed);
        if seed_value.rows() != 1 || seed_value.cols() != 1 {
            return Err(TripError::Contract(format!(
                "backward seed must be 1x1, got {}x{}",
                seed_value.rows(),
                seed_value.cols()
            )));
        }
        let mut adjoints: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        adjoints[seed.0] = Some(DenseMatrix::from_vec(1, 1, vec![1.0])?);
        let mut grads = Gradients::default();

        for i in (0..=seed.0).rev() {
            let adj = match adjoints[i].take() {
                Some(a) => a,
                None => continue,
            };
            match &self.nodes[i].op {
                Op::Constant => {}
                Op::Param(id) => grads.accumulate(*id, &adj)?,
                Op::MatMul(a, b) => {
                    let da = adj.matmul(&self.value(*b).transpose())?;
                    let db = self.value(*a).transpose().matmul(&adj)?;
                    accumulate(&mut adjoints, *a, da)?;
                    accumulate(&mut adjoints, *b, db)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut adjoints, *a, adj.clone())?;
                    accumulate(&mut adjoints, *b, adj)?;
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let cols = self.value(p).cols();
                        let mut part_adj = DenseMatrix::zeros(adj.rows(), cols);
                        for r in 0..adj.rows() {
                            for c in 0..cols {
                                part_adj.set(r, c, adj.get(r, offset + c));
                            }
                        }
                        accumulate(&mut adjoints, p, part_adj)?;
                        offset += cols;
                    }
                }
                Op::AddBias { x, bias } => {
                    let mut dbias = DenseMatrix::zeros(1, adj.cols());
                    for r in 0..adj.rows() {
                        for c in 0..adj.cols() {
                            dbias.set(0, c, dbias.get(0, c) + adj.get(r, c));
                        }
                    }
                    accumulate(&mut adjoints, *x, adj)?;
                    accumulate(&mut adjoints, *bias, dbias)?;
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let mut dx = adj;
                    for (g, v) in dx.data_mut().iter_mut().zip(xv.data()) {
                        if *v <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    accumulate(&mut adjoints, *x, dx)?;
                }
                Op::CosineHead { features, weights, scale } => {
                    let (df, dw) = self.cosine_head_backward(*features, *weights, *scale, &adj)?;
                    accumulate(&mut adjoints, *features, df)?;
                    accumulate(&mut adjoints, *weights, dw)?;
                }
                Op::WeightedSoftmaxCe { logits, labels, class_weights, shift } => {
                    let dz =
                        self.softmax_ce_backward(*logits, labels, class_weights, shift, &adj)?;
                    accumulate(&mut adjoints, *logits, dz)?;
                }
                Op::HalfSumSquares(x) => {
                    let s = adj.get(0, 0);
                    let dx = self.value(*x).scale(s);
                    accumulate(&mut adjoints, *x, dx)?;
                }
            }
        }
        Ok(grads)
    }

    fn cosine_head_backward(
        &self,
        features: NodeId,
        weights: NodeId,
        scale: f64,
        adj: &DenseMatrix,
    ) -> Result<(DenseMatrix, DenseMatrix)> {
        let f = self.value(features);
        let w = self.value(weights);
        let mut df = DenseMatrix::zeros(f.rows(), f.cols());
        let mut dw = DenseMatrix::zeros(w.rows(), w.cols());
        let feature_norms: Vec<f64> = (0..f.rows()).map(|i| norm(f.row(i))).collect();
        let weight_norms: Vec<f64> = (0..w.rows()).map(|j| norm(w.row(j))).collect();
        for i in 0..f.rows() {
            let s = f.row(i);
            let ns = feature_norms[i];
            for j in 0..w.rows() {
                let g = scale * adj.get(i, j);
                if g == 0.0 {
                    continue;
                }
                let nw = weight_norms[j];
                if ns * nw <= COSINE_NORM_FLOOR {
                    continue;
                }
                let wj = w.row(j);
                let denom = ns * nw;
                let dot = dot(s, wj);
                for c in 0..f.cols() {
                    let d = df.get(i, c) + g * (wj[c] / denom - dot * s[c] / (ns * ns * denom));
                    df.set(i, c, d);
                }
                for c in 0..w.cols() {
                    let d = dw.get(j, c) + g * (s[c] / denom - dot * wj[c] / (nw * nw * denom));
                    dw.set(j, c, d);
                }
            }
        }
        Ok((df, dw))
    }

    fn softmax_ce_backward(
        &self,
        logits: NodeId,
        labels: &[usize],
        class_weights: &[f64],
        shift: &DenseMatrix,
        adj: &DenseMatrix,
    ) -> Result<DenseMatrix> {
        let z = self.value(logits);
        let (b, k) = (z.rows(), z.cols());
        let outer = adj.get(0, 0) / b as f64;
        let mut dz = DenseMatrix::zeros(b, k);
        for i in 0..b {
            let row: Vec<f64> = (0..k).map(|j| z.get(i, j) + shift.get(i, j)).collect();
            let lse = log_sum_exp(&row);
            let wy = class_weights[labels[i]];
            for j in 0..k {
                let p = (row[j] - lse).exp();
                let indicator = if j == labels[i] { 1.0 } else { 0.0 };
                dz.set(i, j, outer * wy * (p - indicator));
            }
        }
        Ok(dz)
    }
}

fn accumulate(adjoints: &mut [Option<DenseMatrix>], id: NodeId, grad: DenseMatrix) -> Result<()> {
    match &mut adjoints[id.0] {
        Some(existing) => existing.add_assign(&grad),
        slot @ None => {
            *slot = Some(grad);
            Ok(())
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Max-subtracted log-sum-exp; stable for large positive or negative logits.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
