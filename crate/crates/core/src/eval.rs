//! Evaluation scores: classification accuracy on held-out data, accuracy of
//! predicting annotator labels, annotator-correctness probabilities and
//! their AUROC.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::{AnnotationSet, Dataset, Triple, TripleSet};
use crate::error::{Error, Result};
use crate::mixup::encode_triples;
use crate::models::{ClassifierNet, ModelPair};
use crate::numerics::Matrix;

const EVAL_CHUNK: usize = 1024;

/// Fraction of instances whose predicted class equals the true label.
pub fn clf_acc(classifier: &ClassifierNet, test: &Dataset) -> Result<f64> {
    let labels = test
        .true_labels()
        .ok_or_else(|| Error::Input("accuracy needs true labels".into()))?;
    if test.is_empty() {
        return Err(Error::Input("accuracy on an empty set".into()));
    }
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..test.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let x = test.features().select_rows(chunk);
        let pred = classifier.predict_class(&x)?;
        correct += pred.iter().zip(chunk).filter(|(&p, &i)| p == labels[i]).count();
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Fraction of triples whose predicted annotator label equals the observed
/// noisy label.
pub fn annot_acc(models: &ModelPair, triples: &TripleSet, ds: &Dataset) -> Result<f64> {
    if triples.is_empty() {
        return Err(Error::Input("annotation accuracy on an empty set".into()));
    }
    let m = annotator_width(models);
    let mut correct = 0usize;
    for chunk in triples.triples().chunks(EVAL_CHUNK) {
        let enc = encode_triples(chunk, ds, m);
        let pred = models.predict_annotation(&enc.x, &enc.a)?;
        correct += pred.iter().zip(chunk).filter(|(&p, t)| p == t.label).count();
    }
    Ok(correct as f64 / triples.len() as f64)
}

fn annotator_width(models: &ModelPair) -> usize {
    models.annotator.as_ref().map_or(0, |a| a.num_annotators())
}

/// `p(x)ᵀ · diag(P(x, a))` per row: the estimated probability that the
/// annotator's label is correct.
pub fn correctness_probability(models: &ModelPair, x: &Matrix, annotators: &Matrix) -> Result<Vec<f64>> {
    let pred = models.predict(x, annotators)?;
    let c = pred.class_probs.cols();
    Ok((0..x.rows())
        .map(|r| {
            let p = pred.class_probs.row(r);
            let conf = pred.confusion.row(r);
            p.iter().enumerate().map(|(i, &pi)| pi * conf[i * c + i]).sum()
        })
        .collect())
}

/// AUROC as the normalised Mann–Whitney statistic with midranks for ties:
/// `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)`.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Input(format!("score {s} is not comparable")));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::NotComputable(
            "AUROC needs both positive and negative labels".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    // Twice the rank sum keeps midranks integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j share the midrank (i + 1 + j) / 2
        let twice_mid = (i + 1 + j) as u128;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k]).count() as u128;
        twice_rank_sum += twice_mid * pos_in_group;
        i = j;
    }
    let p = positives as u128;
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2.0 * positives as f64 * negatives as f64))
}

/// Which (instance, annotator) pairs enter perf-AUROC.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AurocSupport {
    #[default]
    All,
    Annotated,
}

/// AUROC of the correctness probability against whether each recorded
/// annotator label is correct. `table` lists the (instance, annotator,
/// label) pairs to score, typically the full prediction table of simulated
/// annotators on the test set.
pub fn perf_auroc(models: &ModelPair, test: &Dataset, table: Option<&AnnotationSet>) -> Result<f64> {
    let table = table.ok_or_else(|| Error::NotComputable("no annotator table for the test set".into()))?;
    let truth = test
        .true_labels()
        .ok_or_else(|| Error::NotComputable("test set has no true labels".into()))?;
    table.validate_against(test)?;
    let m = annotator_width(models).max(table.num_annotators());
    let triples: Vec<Triple> = table
        .records()
        .iter()
        .map(|r| Triple {
            instance: r.instance,
            annotator: r.annotator,
            label: r.label,
        })
        .collect();
    let mut scores = Vec::with_capacity(triples.len());
    let mut correct = Vec::with_capacity(triples.len());
    for chunk in triples.chunks(EVAL_CHUNK) {
        let enc = encode_triples(chunk, test, m);
        let a = if models.annotator.is_some() {
            enc.a
        } else {
            Matrix::zeros(chunk.len(), 0)
        };
        scores.extend(correctness_probability(models, &enc.x, &a)?);
        correct.extend(chunk.iter().map(|t| t.label == truth[t.instance]));
    }
    auroc(&scores, &correct)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub n: usize,
}

/// Mean and sample standard deviation. `None` for no values.
pub fn aggregate(values: &[f64]) -> Option<Aggregate> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(Aggregate { mean, std, n })
}

/// Scores of one model snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub clf_acc: f64,
    pub annot_acc: Option<f64>,
    pub perf_auroc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub seed: u64,
    pub config_hash: String,
    pub last: Scores,
    pub best: Option<Scores>,
    pub best_epoch: Option<usize>,
}

/// Scores a snapshot on a test set and (optionally) the training triples.
pub fn score(
    models: &ModelPair,
    test: &Dataset,
    train: Option<(&TripleSet, &Dataset)>,
    test_table: Option<&AnnotationSet>,
) -> Result<Scores> {
    let clf_acc = clf_acc(&models.classifier, test)?;
    let annot_acc = match train {
        Some((ts, ds)) if !ts.is_empty() => Some(annot_acc(models, ts, ds)?),
        _ => None,
    };
    let perf_auroc = match perf_auroc(models, test, test_table) {
        Ok(v) => Some(v),
        Err(Error::NotComputable(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Scores {
        clf_acc,
        annot_acc,
        perf_auroc,
    })
}
