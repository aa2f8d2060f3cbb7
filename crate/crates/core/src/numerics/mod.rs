//! From-scratch learning engine: matrix kernels, dense/ReLU/softmax layers, inverted dropout,
//! an LSTM layer with full BPTT, softmax cross-entropy and constant-rate SGD with L2 decay.
//!
//! All gradients are hand-derived; [`gradcheck`] verifies them against central differences.
//! Accumulation over a batch always runs in row order, so results are reproducible.

mod dense;
mod dropout;
pub mod gradcheck;
mod loss;
mod lstm;
mod matrix;
mod sgd;

use thiserror::Error;

pub use dense::{dense_backward, dense_forward, relu, Activation, DenseCache, DenseGrads, DenseLayer};
pub use dropout::{dropout_backward, dropout_forward, dropout_forward_rng};
pub use loss::{argmax, one_hot, softmax_cross_entropy, softmax_in_place, softmax_rows};
pub use lstm::{
    lstm_backward, lstm_forward, LstmCache, LstmGrads, LstmLayer, GATES, GATE_CANDIDATE,
    GATE_FORGET, GATE_INPUT, GATE_OUTPUT,
};
pub use matrix::Matrix;
pub use sgd::{sgd_step, ParamBlock, ParamKind};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NumericsError {
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("InvalidTarget: target row {0} is not one-hot")]
    InvalidTarget(usize),
    #[error("EmptySequence: an LSTM needs at least one timestep")]
    EmptySequence,
    #[error("InvalidRate: dropout rate {0} is outside [0, 1)")]
    InvalidRate(f64),
}
