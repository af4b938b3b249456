//! Cross-entropy between predicted annotation probabilities and (possibly
//! mixed) noisy-label encodings.

use crate::error::{Error, Result};
use crate::numerics::tape::cross_entropy_value;
use crate::numerics::Matrix;

/// Probabilities are clamped to this value before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Batch mean of `-Σ_c z[c] · ln(max(p[c], PROB_FLOOR))`.
pub fn annotmix_loss(annotation_probs: &Matrix, targets: &Matrix) -> Result<f64> {
    if annotation_probs.shape() != targets.shape() {
        return Err(Error::shape(
            "annotmix_loss",
            format!("{:?} vs {:?}", annotation_probs.shape(), targets.shape()),
        ));
    }
    Ok(cross_entropy_value(annotation_probs, targets, PROB_FLOOR))
}
