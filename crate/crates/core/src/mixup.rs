//! Convex mixing of training examples.
//!
//! Vanilla mixing combines (instance, label) pairs. Triple mixing combines
//! (instance, annotator one-hot, noisy-label one-hot) triples with one shared
//! coefficient, so the annotator channel is interpolated together with the
//! instance and label.

use serde::{Deserialize, Serialize};

use crate::data::{AnnotationSet, Dataset, Triple, TripleSet};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixupMode {
    /// No mixing: plain empirical risk minimisation.
    Off,
    Vanilla,
    #[default]
    Triple,
    /// Triples are only mixed with triples of the same instance.
    SameInstanceOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixupConfig {
    #[serde(default)]
    pub mode: MixupMode,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Draw one coefficient per row instead of one per batch.
    #[serde(default)]
    pub per_row: bool,
}

fn default_alpha() -> f64 {
    1.0
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self {
            mode: MixupMode::Triple,
            alpha: 1.0,
            per_row: false,
        }
    }
}

impl MixupConfig {
    pub fn off() -> Self {
        Self {
            mode: MixupMode::Off,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode != MixupMode::Off && !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("mixup.alpha", format!("must be > 0, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Mixing coefficients for a batch of `rows`: a single Beta(α, α) draw
    /// repeated, or one draw per row when `per_row` is set.
    pub fn draw(&self, rows: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        if self.per_row {
            (0..rows).map(|_| rng.beta(self.alpha)).collect()
        } else {
            let lambda = rng.beta(self.alpha)?;
            Ok(vec![lambda; rows])
        }
    }
}

/// Encoded, mixed batch fed to the classifier and annotator networks.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedBatch {
    pub x: Matrix,
    /// Mixed annotator encodings, `batch × M`.
    pub a: Matrix,
    /// Mixed label encodings, `batch × C`.
    pub z: Matrix,
    /// Coefficient applied to each row's first source.
    pub lambdas: Vec<f64>,
}

#[inline]
fn mix_into(out: &mut [f64], first: &[f64], second: &[f64], lambda: f64) {
    if lambda == 1.0 {
        out.copy_from_slice(first);
    } else if lambda == 0.0 {
        out.copy_from_slice(second);
    } else {
        for ((o, &u), &v) in out.iter_mut().zip(first).zip(second) {
            *o = lambda * u + (1.0 - lambda) * v;
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Contract(format!("mixing coefficient {lambda} outside [0, 1]")));
    }
    Ok(())
}

/// Encodes one batch of triples without mixing.
pub fn encode_triples(batch: &[Triple], ds: &Dataset, num_annotators: usize) -> MixedBatch {
    let n = batch.len();
    let mut x = Matrix::zeros(n, ds.dim());
    let mut a = Matrix::zeros(n, num_annotators);
    let mut z = Matrix::zeros(n, ds.num_classes());
    for (r, t) in batch.iter().enumerate() {
        x.row_mut(r).copy_from_slice(ds.features().row(t.instance));
        if num_annotators > 0 {
            a.set(r, t.annotator, 1.0);
        }
        z.set(r, t.label, 1.0);
    }
    MixedBatch {
        x,
        a,
        z,
        lambdas: vec![1.0; n],
    }
}

/// Mixes two triple batches with one coefficient for the whole batch.
pub fn mix_triple_batch(
    b1: &[Triple],
    b2: &[Triple],
    lambda: f64,
    ds: &Dataset,
    ann: &AnnotationSet,
) -> Result<MixedBatch> {
    mix_triple_batch_rows(b1, b2, &vec![lambda; b1.len()], ds, ann.num_annotators())
}

/// Row-wise variant: row `i` uses `lambdas[i]`. Identical source triples
/// are copied through unchanged.
pub fn mix_triple_batch_rows(
    b1: &[Triple],
    b2: &[Triple],
    lambdas: &[f64],
    ds: &Dataset,
    num_annotators: usize,
) -> Result<MixedBatch> {
    if b1.len() != b2.len() || lambdas.len() != b1.len() {
        return Err(Error::Contract(format!(
            "batch sizes differ: {} vs {} with {} coefficients",
            b1.len(),
            b2.len(),
            lambdas.len()
        )));
    }
    for &l in lambdas {
        check_lambda(l)?;
    }
    let n = b1.len();
    let (d, m, c) = (ds.dim(), num_annotators, ds.num_classes());
    let mut x = Matrix::zeros(n, d);
    let mut a = Matrix::zeros(n, m);
    let mut z = Matrix::zeros(n, c);
    let mut one_hot_a = (vec![0.0; m], vec![0.0; m]);
    let mut one_hot_z = (vec![0.0; c], vec![0.0; c]);
    for (r, ((t1, t2), &lambda)) in b1.iter().zip(b2).zip(lambdas).enumerate() {
        let lambda = if t1 == t2 { 1.0 } else { lambda };
        mix_into(
            x.row_mut(r),
            ds.features().row(t1.instance),
            ds.features().row(t2.instance),
            lambda,
        );

        one_hot_a.0[t1.annotator] = 1.0;
        one_hot_a.1[t2.annotator] = 1.0;
        mix_into(a.row_mut(r), &one_hot_a.0, &one_hot_a.1, lambda);
        one_hot_a.0[t1.annotator] = 0.0;
        one_hot_a.1[t2.annotator] = 0.0;

        one_hot_z.0[t1.label] = 1.0;
        one_hot_z.1[t2.label] = 1.0;
        mix_into(z.row_mut(r), &one_hot_z.0, &one_hot_z.1, lambda);
        one_hot_z.0[t1.label] = 0.0;
        one_hot_z.1[t2.label] = 0.0;
    }
    Ok(MixedBatch {
        x,
        a,
        z,
        lambdas: lambdas.to_vec(),
    })
}

/// Encoded (instance, label-distribution) batch for the classifier-only
/// trainers.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBatch {
    pub x: Matrix,
    pub y: Matrix,
}

/// Vanilla mixing of two encoded batches, one coefficient per row.
pub fn mix_vanilla_batch_rows(b1: &LabeledBatch, b2: &LabeledBatch, lambdas: &[f64]) -> Result<LabeledBatch> {
    if b1.x.shape() != b2.x.shape() || b1.y.shape() != b2.y.shape() || lambdas.len() != b1.x.rows() {
        return Err(Error::Contract(format!(
            "batch shapes differ: {:?}/{:?} vs {:?}/{:?} with {} coefficients",
            b1.x.shape(),
            b1.y.shape(),
            b2.x.shape(),
            b2.y.shape(),
            lambdas.len()
        )));
    }
    let mut x = Matrix::zeros(b1.x.rows(), b1.x.cols());
    let mut y = Matrix::zeros(b1.y.rows(), b1.y.cols());
    for (r, &lambda) in lambdas.iter().enumerate() {
        check_lambda(lambda)?;
        mix_into(x.row_mut(r), b1.x.row(r), b2.x.row(r), lambda);
        mix_into(y.row_mut(r), b1.y.row(r), b2.y.row(r), lambda);
    }
    Ok(LabeledBatch { x, y })
}

pub fn mix_vanilla_batch(b1: &LabeledBatch, b2: &LabeledBatch, lambda: f64) -> Result<LabeledBatch> {
    mix_vanilla_batch_rows(b1, b2, &vec![lambda; b1.x.rows()])
}

/// Pairs every triple with a partner on the same instance, drawn uniformly
/// from the instance's other triples. Triples whose instance has a single
/// annotation are paired with themselves. Output is `(i, partner)` in triple
/// order.
pub fn pair_same_instance(ts: &TripleSet, rng: &mut Rng) -> Vec<(usize, usize)> {
    let mut partner: Vec<usize> = (0..ts.len()).collect();
    for group in ts.by_instance().values() {
        if group.len() < 2 {
            continue;
        }
        for (k, &i) in group.iter().enumerate() {
            let mut j = rng.below(group.len() - 1);
            if j >= k {
                j += 1;
            }
            partner[i] = group[j];
        }
    }
    partner.into_iter().enumerate().collect()
}
