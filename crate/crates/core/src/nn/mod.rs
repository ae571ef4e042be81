//! Float64 tensor engine with hand-written forward and backward passes for
//! every layer the classifiers use, plus Adam, crossentropy, checkpoints and a
//! finite-difference gradient checker.
//!
//! Operations never mutate their inputs; only [`adam_step`] updates parameters
//! in place.

mod adam;
pub mod checkpoint;
mod conv;
mod dense;
mod embedding;
pub mod gradcheck;
pub mod init;
mod linalg;
mod loss;
mod lstm;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use conv::{
    conv1d_backward, conv1d_forward, global_max_pool, global_max_pool_backward, Conv1dCache,
    Conv1dGrads, Conv1dParams, MaxPoolCache,
};
pub use dense::{
    dense_backward, dense_forward, dropout, dropout_backward, softmax_rows, Activation, DenseCache,
    DenseGrads, DenseParams, DropoutMask, Mode,
};
pub use embedding::{embedding_backward, embedding_forward, IdBatch};
pub use gradcheck::{check_blocks, GradCheckReport};
pub use loss::{crossentropy_rows, softmax_crossentropy};
pub use lstm::{
    bilstm_backward, bilstm_forward, lstm_backward, lstm_forward, BiLstmCache, BiLstmGrads,
    Direction, LstmCache, LstmGrads, LstmParams,
};
pub use tensor::Tensor;
