pub mod matrix;
pub mod rng;
pub mod tape;

pub use matrix::DenseMatrix;
pub use rng::Rng;
pub use tape::{log_sum_exp, Gradients, NodeId, ParamId, Tape};
