//! Matrix arithmetic, reverse-mode differentiation and seeded sampling.

pub mod matrix;
pub mod rng;
pub mod tape;

pub use matrix::{argmax, Matrix};
pub use rng::{sample_beta, Rng};
pub use tape::{Gradients, Tape, Var};
