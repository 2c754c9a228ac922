//! Neural-network kernels with reverse-mode gradients: dense tensors,
//! Conv1d, BatchNorm, MaxPool, Dropout, bidirectional LSTM, dense layers,
//! activations, and a finite-difference verification harness.

pub mod act;
pub mod checkpoint;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod gradcheck;
pub mod init;
pub mod lstm;
pub mod norm;
mod ops;
pub mod pool;
mod scalar;
mod tensor;

pub use conv::{Conv1d, Padding};
pub use dense::Dense;
pub use dropout::Dropout;
pub use init::glorot_uniform;
pub use lstm::{BiLstm, BiLstmCache, LstmDirection};
pub use norm::{BatchNorm1d, BatchNormCache};
pub use pool::MaxPool1d;
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Train/eval switch. Only BatchNorm and Dropout behave differently.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
