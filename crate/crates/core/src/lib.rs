//! Multi-annotator classification trained by marginal likelihood over
//! per-annotator confusion matrices, regularised by mixing
//! (instance, annotator, label) triples.
//!
//! Module map:
//!
//! * [`numerics`]: matrices, the differentiation tape, seeded sampling.
//! * [`data`]: datasets, sparse annotation sets, triple populations.
//! * [`mixup`]: vanilla and triple mixing.
//! * [`models`]: classifier and annotator networks, checkpoints.
//! * [`training`]: loss, optimiser, schedules and the trainers.
//! * [`annosim`]: simulated annotators.
//! * [`eval`]: accuracy scores and AUROC.
//! * [`cli`]: configuration, subcommands and run manifests.

pub mod annosim;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod mixup;
pub mod models;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
