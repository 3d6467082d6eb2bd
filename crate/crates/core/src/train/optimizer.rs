//! Parameter update rules. Private groups default to Adam; the shared
//! backbone defaults to the plain descent step its update formula states.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::numerics::{DenseMatrix, ParamId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Moments {
    fn step(&mut self, value: &mut [f64], grad: &[f64], lr: f64) {
        if self.m.is_empty() {
            self.m = vec![0.0; value.len()];
            self.v = vec![0.0; value.len()];
        }
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..value.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grad[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            value[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// Optimizer over named parameter tensors.
#[derive(Debug)]
pub struct ParamOptimizer {
    kind: OptimizerKind,
    states: BTreeMap<ParamId, Moments>,
}

impl ParamOptimizer {
    pub fn new(kind: OptimizerKind) -> ParamOptimizer {
        ParamOptimizer { kind, states: BTreeMap::new() }
    }

    pub fn step(&mut self, id: ParamId, value: &mut DenseMatrix, grad: &DenseMatrix, lr: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (v, g) in value.data_mut().iter_mut().zip(grad.data()) {
                    *v -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                self.states.entry(id).or_default().step(value.data_mut(), grad.data(), lr);
            }
        }
    }
}

/// Optimizer over one flat coordinate vector (the backbone direction).
#[derive(Debug)]
pub struct FlatOptimizer {
    kind: OptimizerKind,
    moments: Moments,
}

impl FlatOptimizer {
    pub fn new(kind: OptimizerKind) -> FlatOptimizer {
        FlatOptimizer { kind, moments: Moments::default() }
    }

    /// Turn the raw direction into the applied delta: the caller subtracts
    /// the result from the parameters. Sgd returns `lr * d` unchanged.
    pub fn deltas(&mut self, direction: &[f64], lr: f64) -> Vec<f64> {
        match self.kind {
            OptimizerKind::Sgd => direction.iter().map(|d| lr * d).collect(),
            OptimizerKind::Adam => {
                let mut shadow = vec![0.0; direction.len()];
                self.moments.step(&mut shadow, direction, lr);
                shadow.iter().map(|v| -v).collect()
            }
        }
    }
}
