//! Neural building blocks with hand-derived gradients.

pub mod attention;
pub mod dense;
pub mod gradcheck;
pub mod init;
pub mod lstm;
pub mod mat;
pub mod params;
pub mod sgd;

pub use attention::{attention_backward, attention_context, softmax, AttentionParams};
pub use dense::{dense_backward, dense_forward, DenseParams};
pub use lstm::{lstm_backward, lstm_forward, lstm_step, LstmState, LstmWeights};
pub use mat::Mat;
pub use params::{ParamSet, WeightContainer};
pub use sgd::{sgd_update, SgdSchedule};
