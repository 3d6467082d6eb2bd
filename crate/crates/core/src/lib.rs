//! Training toolkit for asynchronous multimodal classifiers with a shared
//! backbone: conflict-averse gradient combination across modality streams,
//! margin-based class rebalancing, deterministic data pipelines, and a
//! reproducible evaluation harness.
//!
//! Layering, bottom up: [`numerics`] (matrices, seeded streams, the reverse
//! mode tape), [`model`] / [`rebalance`] / [`moo`] (the trainable pieces),
//! [`data`] (generation, CSV, folds, pools), [`train`] / [`eval`] (loops and
//! metrics), [`config`] / [`run`] (TOML front end and orchestration).

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod moo;
pub mod numerics;
pub mod rebalance;
pub mod run;
pub mod train;

pub use error::{Result, TripError};
