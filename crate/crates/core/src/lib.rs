//! Privacy-preserving machine learning with additive secret sharing.

pub mod channel;
pub mod nonlinear;
pub mod rng;
pub mod sharing;
pub mod tensor;
pub mod split;
pub mod privacy;
pub mod net;
pub mod experiment;
