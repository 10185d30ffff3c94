//! Predicting human (SUR) and machine (SMR) satisfied ratios along
//! compression quality ladders.

pub mod autograd;
pub mod commands;
pub mod error;
pub mod exec;
pub mod image;
pub mod io;
pub mod labelgen;
pub mod model;
pub mod quality;
pub mod seed;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use exec::Exec;
