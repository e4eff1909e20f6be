//! Dense vector arithmetic, reverse-mode gradients, the LSTM cell,
//! optimizers, gradient checking and parameter checkpoints.

pub mod checkpoint;
pub mod gradcheck;
pub mod lstm;
pub mod matrix;
pub mod optim;
pub mod params;
pub mod tape;

pub use checkpoint::{decode_params, encode_params, load_params, save_params};
pub use gradcheck::{grad_check, GradCheckReport, Objective, ParamCheck, TapeObjective};
pub use lstm::{lstm_cell_backward, lstm_cell_forward, LstmCache};
pub use matrix::{argmax, cross_entropy, sigmoid, softmax, Matrix};
pub use optim::{adam_step, sgd_momentum_step, AdamConfig, OptimState};
pub use params::{LstmParams, ParamId, ParamStore, Parameter};
pub use tape::{NodeId, Tape};
