//! Deterministic differentiable kernel: dense layers, activations, recurrent
//! cells, losses, optimizers and vector-Jacobian products for the fixed
//! architectures used by encoders, scorers and attack models.

pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod matrix;
pub mod mlp;
pub mod optim;
pub mod params;
pub mod recurrent;

pub use gradcheck::{finite_difference_grad, max_relative_error};
pub use layers::{activation, dense_affine, sigmoid, Activation, Dense};
pub use loss::{bce, loss_eval, mse, softmax_cross_entropy, LossKind, Target};
pub use matrix::{dot, l1_norm, l2_norm, Matrix};
pub use mlp::{LayerSpec, Mlp, MlpTape};
pub use optim::{AdamConfig, AdamState, Optimizer, OptimizerKind};
pub use params::{ParamBundle, Parameterized};
pub use recurrent::{lstm_cell, rnn_cell, CellKind, LstmCell, Recurrent, RnnCell, SequenceTape};
