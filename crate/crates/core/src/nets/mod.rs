//! The hybrid LSTM-ACD and Attention-LSTM-ACD models.

mod checkpoint;
mod model;
mod predict;
mod spec;
mod train;

pub use checkpoint::{SIDECAR_FILE, WEIGHTS_FILE};
pub use model::{batch_loss, batch_loss_and_grad, batch_nll, forward_window, nll_term, nll_term_grad, NetParams, WindowOutput};
pub use predict::{predict_series, quantile_series, Prediction};
pub use spec::{HybridModelSpec, ModelKind, TrainConfig, Variant};
pub use train::{train, EarlyStopping, HistoryEntry, Observation, TrainError, TrainedModel};
