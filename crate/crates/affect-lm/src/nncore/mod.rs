//! Minimal dense numeric core: row-major f64 matrices, the LSTM cell, a
//! sigmoid MLP, stable log-softmax, hand-written reverse-mode gradients for
//! the fixed model topology, and a finite-difference oracle for checking
//! them. Everything is 64-bit and single-threaded-deterministic.

mod gradcheck;
mod lstm;
mod math;
mod mlp;
mod tensor;

pub use gradcheck::finite_diff_grad;
pub use lstm::{lstm_step, LayerState, LstmLayerParams, LstmState};
pub use math::{log_softmax, logistic};
pub use mlp::{mlp_forward, MlpParams};
pub use tensor::Tensor2;

pub(crate) use lstm::{lstm_step_backward, lstm_step_forward, LayerStepCache};
pub(crate) use math::{add_assign, dot, log_softmax_into, matvec_t_acc, outer_acc};
pub(crate) use mlp::{mlp_backward, mlp_forward_cached};
