//! Recurrent networks trained with exact backpropagation through time.

mod cell;
mod loss;
mod network;
mod optim;
mod train;

pub use cell::{gru_step, lstm_step, rnn_step, CellKind, CellParams, StepCache};
pub use loss::{mse_loss, mse_loss_batch};
pub use network::{ForwardCache, NetworkDims, NetworkParams};
pub use optim::{clip_global_norm, Optimizer, OptimizerState};
pub use train::{predict, predict_scaled, train, TrainConfig, TrainHistory, TrainOutcome};

/// Dense double-precision matrix used for every weight and activation block.
pub type Tensor2 = ndarray::Array2<f64>;

/// Per-layer recurrent state; `c` is kept by the LSTM only.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<Tensor2>,
    pub c: Option<Vec<Tensor2>>,
}

impl CellState {
    pub fn zeros(dims: NetworkDims, batch: usize) -> Self {
        let z = || vec![Tensor2::zeros((batch, dims.hidden_dim)); dims.n_layers];
        CellState {
            h: z(),
            c: (dims.kind == CellKind::Lstm).then(z),
        }
    }
}
