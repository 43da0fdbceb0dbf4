//! Mean-field phase structure of deep tanh and SWISH networks: edge of
//! chaos, line of uniformity, correlation lengths, and the desk-scale MNIST
//! experiments that test them.

pub mod activation;
pub mod cli;
pub mod datasets;
pub mod error;
pub mod experiments;
pub mod fitting;
pub mod gaussian;
pub mod network;
pub mod output;
pub mod phase;
pub mod quadrature;
pub mod roots;

pub use activation::{Activation, ActivationKind};
pub use error::{Error, Result};
pub use phase::PhasePoint;
