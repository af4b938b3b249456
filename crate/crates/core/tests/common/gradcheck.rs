//! Finite-difference checking of the training loss gradients.

use annotmix::models::{AnnotatorNet, ClassifierNet, ModelPair};
use annotmix::numerics::{Matrix, Rng};
use annotmix::training::{annotmix_loss, annotmix_loss_and_grads};

pub const STEP: f64 = 1e-5;

fn random_simplex_rows(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let w: Vec<f64> = (0..cols).map(|_| rng.gamma(1.0).unwrap()).collect();
        let s: f64 = w.iter().sum();
        for (c, v) in w.iter().enumerate() {
            m.set(r, c, v / s);
        }
    }
    m
}

/// A random small instance: networks, mixed inputs and mixed targets.
pub fn random_instance(rng: &mut Rng) -> (ModelPair, Matrix, Matrix, Matrix) {
    let d = 1 + rng.below(4);
    let c = 2 + rng.below(3);
    let m = 1 + rng.below(4);
    let hidden: Vec<usize> = (0..1 + rng.below(2)).map(|_| 2 + rng.below(5)).collect();
    let batch = 1 + rng.below(5);
    let mut sizes = vec![d];
    sizes.extend(&hidden);
    sizes.push(c);
    let mut classifier = ClassifierNet::new(&sizes, rng).unwrap();
    // Larger final weights than the default init so the softmaxes are not
    // all near uniform.
    for p in classifier.params_mut() {
        for v in p.as_mut_slice() {
            *v *= 2.0;
        }
    }
    let mut annotator = AnnotatorNet::new(classifier.embedding_dim(), m, c, 2 + rng.below(5), 0.9, rng).unwrap();
    for p in annotator.params_mut() {
        for v in p.as_mut_slice() {
            *v += 0.3 * rng.normal();
        }
    }
    let mut x = Matrix::zeros(batch, d);
    for v in x.as_mut_slice() {
        *v = rng.normal();
    }
    let a = random_simplex_rows(batch, m, rng);
    let z = random_simplex_rows(batch, c, rng);
    (
        ModelPair {
            classifier,
            annotator: Some(annotator),
        },
        x,
        a,
        z,
    )
}

pub fn loss(models: &ModelPair, x: &Matrix, a: &Matrix, z: &Matrix) -> f64 {
    let pred = models.predict(x, a).unwrap();
    annotmix_loss(&pred.annotation_probs, z).unwrap()
}

fn param_count(models: &ModelPair) -> Vec<usize> {
    models
        .classifier
        .params()
        .into_iter()
        .chain(models.annotator.as_ref().unwrap().params())
        .map(|p| p.len())
        .collect()
}

fn perturb(models: &mut ModelPair, which: usize, index: usize, delta: f64) {
    let ModelPair { classifier, annotator } = models;
    let mut params: Vec<&mut Matrix> = classifier
        .params_mut()
        .into_iter()
        .chain(annotator.as_mut().unwrap().params_mut())
        .collect();
    params[which].as_mut_slice()[index] += delta;
}

/// Below this magnitude the central difference is dominated by rounding
/// (about `f64::EPSILON * loss / STEP`), so errors are measured against it.
pub const GRADIENT_FLOOR: f64 = 1e-6;

/// Largest elementwise relative error between analytic and numeric
/// gradients over every parameter.
pub fn max_relative_error(models: &ModelPair, x: &Matrix, a: &Matrix, z: &Matrix) -> f64 {
    let (_, grads) = annotmix_loss_and_grads(models, x, a, z, false).unwrap();
    let counts = param_count(models);
    assert_eq!(grads.len(), counts.len());
    let mut work = models.clone();
    let mut worst: f64 = 0.0;
    for (which, &n) in counts.iter().enumerate() {
        assert_eq!(grads[which].len(), n);
        for i in 0..n {
            perturb(&mut work, which, i, STEP);
            let up = loss(&work, x, a, z);
            perturb(&mut work, which, i, -2.0 * STEP);
            let down = loss(&work, x, a, z);
            perturb(&mut work, which, i, STEP);
            let numeric = (up - down) / (2.0 * STEP);
            let analytic = grads[which].as_slice()[i];
            let scale = analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR);
            let err = (analytic - numeric).abs() / scale;
            worst = worst.max(err);
        }
    }
    worst
}
