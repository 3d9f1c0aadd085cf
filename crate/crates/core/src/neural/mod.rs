//! Small differentiable core: tensors, parameter storage, a reverse-mode
//! tape, dense and GRU layers, softmax/NLL, dropout and Adam.

mod graph;
mod layers;
mod ops;
mod optim;
mod params;
mod tensor;

pub use graph::{Graph, Var};
pub use layers::{gru_step, Dense, GruCell, GruStack};
pub use ops::{dropout, dropout_mask, log_softmax, softmax, softmax_nll};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use params::{Gradients, Param, ParamId, ParamStore};
pub use tensor::Tensor2;
