//! Trade-duration modelling: classic ACD(p, q), LSTM-ACD and
//! Attention-LSTM-ACD, all fitted by exponential maximum likelihood.

pub mod acd;
pub mod data;
pub mod error;
pub mod eval;
mod fileio;
pub mod nets;
pub mod nn;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
