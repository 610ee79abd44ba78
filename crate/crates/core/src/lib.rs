//! Majority-dynamics random walks and a round-based simulator of the Fast
//! Probabilistic Consensus protocol.

pub mod adversary;
pub mod chain;
pub mod experiments;
pub mod fpc;
pub mod models;
pub mod numeric;
pub mod randomness;
