pub mod config;
pub mod data;
pub mod diagnostics;
pub mod nn;
pub mod protocols;
pub mod rng;
pub mod tensor;
pub mod train;
mod wire;
