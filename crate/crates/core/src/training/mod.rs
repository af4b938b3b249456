//! Trainers: the joint classifier/annotator trainer with triple mixing, and
//! the classifier-only baselines trained on majority votes or true labels.

pub mod loss;
pub mod optim;
pub mod vote;

use serde::{Deserialize, Serialize};

use crate::data::{one_hot, paired_index_batches, AnnotationSet, Dataset, Triple, TripleSet};
use crate::error::{Error, Result};
use crate::eval;
use crate::mixup::{self, LabeledBatch, MixupConfig, MixupMode};
use crate::models::{AnnotatorNet, ClassifierNet, ModelPair};
use crate::numerics::{Matrix, Rng, Tape};

pub use loss::{annotmix_loss, PROB_FLOOR};
pub use optim::{cosine_lr, AdamW};
pub use vote::{aggregate_majority, majority_vote, Aggregated};

/// Independent random streams derived from the run seed.
mod streams {
    pub const INIT: u64 = 0;
    pub const LOADER: u64 = 1;
    pub const LAMBDA: u64 = 2;
    pub const PARTNER: u64 = 3;
    pub const VOTE: u64 = 4;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    AnnotMix,
    MvBase,
    MvMixup,
    TrueBase,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::AnnotMix => "annot_mix",
            Method::MvBase => "mv_base",
            Method::MvMixup => "mv_mixup",
            Method::TrueBase => "true_base",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_classifier_hidden")]
    pub classifier_hidden: Vec<usize>,
    #[serde(default = "default_annotator_hidden")]
    pub annotator_hidden: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Stop annotator-model gradients from reaching the classifier through
    /// the embedding.
    #[serde(default)]
    pub detach_embedding: bool,
}

fn default_classifier_hidden() -> Vec<usize> {
    vec![128, 128]
}

fn default_annotator_hidden() -> usize {
    128
}

fn default_eta() -> f64 {
    0.9
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            classifier_hidden: default_classifier_hidden(),
            annotator_hidden: default_annotator_hidden(),
            eta: default_eta(),
            detach_embedding: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub method: Method,
    pub mixup: MixupConfig,
    pub models: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-2,
            weight_decay: 0.0,
            seed: 0,
            method: Method::AnnotMix,
            mixup: MixupConfig::default(),
            models: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("train.learning_rate", "must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("train.weight_decay", "must be non-negative"));
        }
        if self.models.classifier_hidden.contains(&0) {
            return Err(Error::config("models.classifier_hidden", "widths must be positive"));
        }
        match (self.method, self.mixup.mode) {
            (Method::AnnotMix, MixupMode::Vanilla) => {
                return Err(Error::config(
                    "mixup.mode",
                    "annot_mix mixes triples; use `triple`, `same_instance_only` or `off`",
                ))
            }
            (Method::MvMixup, _) | (Method::AnnotMix, _) => self.mixup.validate()?,
            _ => {}
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub annot_acc_train: f64,
    pub clf_acc_val: Option<f64>,
    pub clf_acc_test: Option<f64>,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct BestSnapshot {
    pub epoch: usize,
    pub clf_acc_val: f64,
    pub models: ModelPair,
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub models: ModelPair,
    pub optimizer: AdamW,
    pub epoch: usize,
    pub log: Vec<EpochMetrics>,
    pub best: Option<BestSnapshot>,
    /// Training instances without any usable label.
    pub excluded_instances: usize,
    /// Optimiser steps taken.
    pub steps: u64,
    /// Training triples (for two-stage methods: the aggregated labels as
    /// single-annotator triples).
    pub train_triples: TripleSet,
}

/// Held-out sets scored after every epoch.
#[derive(Clone, Copy, Debug, Default)]
pub struct EvalSets<'a> {
    pub validation: Option<&'a Dataset>,
    pub test: Option<&'a Dataset>,
}

fn classifier_sizes(ds: &Dataset, cfg: &TrainConfig) -> Vec<usize> {
    let mut sizes = vec![ds.dim()];
    sizes.extend(&cfg.models.classifier_hidden);
    sizes.push(ds.num_classes());
    sizes
}

/// Triples restricted to instances of `ds`, and the count of instances
/// without any annotation.
fn training_triples(ds: &Dataset, ann: &AnnotationSet) -> Result<(TripleSet, usize)> {
    let ts = crate::data::build_triples(ds, ann)?;
    let labelled = ts.by_instance().len();
    Ok((ts, ds.len() - labelled))
}

struct EpochRecorder<'a> {
    evals: EvalSets<'a>,
    train_ds: &'a Dataset,
}

impl EpochRecorder<'_> {
    fn record(&self, state: &mut TrainState, epoch: usize, train_loss: f64, lr: f64) -> Result<()> {
        let annot_acc_train = eval::annot_acc(&state.models, &state.train_triples, self.train_ds)?;
        let clf_acc_val = match self.evals.validation {
            Some(v) => Some(eval::clf_acc(&state.models.classifier, v)?),
            None => None,
        };
        let clf_acc_test = match self.evals.test {
            Some(t) => Some(eval::clf_acc(&state.models.classifier, t)?),
            None => None,
        };
        if let Some(acc) = clf_acc_val {
            let improved = state.best.as_ref().is_none_or(|b| acc > b.clf_acc_val);
            if improved {
                state.best = Some(BestSnapshot {
                    epoch,
                    clf_acc_val: acc,
                    models: state.models.clone(),
                });
            }
        }
        log::debug!(
            "epoch {epoch}: loss {train_loss:.5} annot_acc {annot_acc_train:.4} val {clf_acc_val:?} lr {lr:.3e}"
        );
        state.log.push(EpochMetrics {
            epoch,
            train_loss,
            annot_acc_train,
            clf_acc_val,
            clf_acc_test,
            lr,
        });
        state.epoch = epoch + 1;
        Ok(())
    }
}

fn divergence(epoch: usize, e: Error) -> Error {
    match e {
        Error::Divergence { message, .. } => Error::Divergence { epoch, message },
        other => other,
    }
}

fn check_loss(loss: f64, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            epoch,
            message: format!("loss became {loss}"),
        })
    }
}

/// How the mixing coefficient of each batch is obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaSource {
    /// Beta(α, α) draws as configured.
    Sampled,
    /// A fixed value for every row of every batch.
    Fixed(f64),
}

/// Joint training of classifier and annotator networks on the marginal
/// likelihood of the noisy labels, with mixing according to `cfg.mixup`.
pub fn train_annotmix(ds: &Dataset, ann: &AnnotationSet, cfg: &TrainConfig, evals: EvalSets<'_>) -> Result<TrainState> {
    train_annotmix_with(ds, ann, cfg, evals, LambdaSource::Sampled)
}

pub fn train_annotmix_with(
    ds: &Dataset,
    ann: &AnnotationSet,
    cfg: &TrainConfig,
    evals: EvalSets<'_>,
    lambda_source: LambdaSource,
) -> Result<TrainState> {
    cfg.validate()?;
    let (triples, excluded) = training_triples(ds, ann)?;
    if triples.is_empty() {
        return Err(Error::Input("no annotations to train on".into()));
    }
    let m = ann.num_annotators();

    let mut init_rng = Rng::stream(cfg.seed, streams::INIT);
    let classifier = ClassifierNet::new(&classifier_sizes(ds, cfg), &mut init_rng)?;
    let annotator = AnnotatorNet::new(
        classifier.embedding_dim(),
        m,
        ds.num_classes(),
        cfg.models.annotator_hidden,
        cfg.models.eta,
        &mut init_rng,
    )?;
    let mut state = TrainState {
        models: ModelPair {
            classifier,
            annotator: Some(annotator),
        },
        optimizer: AdamW::new(cfg.weight_decay),
        epoch: 0,
        log: Vec::with_capacity(cfg.epochs),
        best: None,
        excluded_instances: excluded,
        steps: 0,
        train_triples: triples,
    };
    if excluded > 0 {
        log::info!("{excluded} training instances have no annotations and are skipped");
    }

    let mut loader_rng = Rng::stream(cfg.seed, streams::LOADER);
    let mut lambda_rng = Rng::stream(cfg.seed, streams::LAMBDA);
    let mut partner_rng = Rng::stream(cfg.seed, streams::PARTNER);
    let recorder = EpochRecorder { evals, train_ds: ds };
    let mode = cfg.mixup.mode;

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(cfg.learning_rate, epoch, cfg.epochs);
        let batches = paired_index_batches(state.train_triples.len(), cfg.batch_size, &mut loader_rng)?;
        let partners = (mode == MixupMode::SameInstanceOnly)
            .then(|| mixup::pair_same_instance(&state.train_triples, &mut partner_rng));

        let mut loss_sum = 0.0;
        for pair in &batches {
            let ts = &state.train_triples;
            let first: Vec<Triple> = pair.first.iter().map(|&i| ts.get(i)).collect();
            let batch = match mode {
                MixupMode::Off => mixup::encode_triples(&first, ds, m),
                _ => {
                    let second: Vec<Triple> = match &partners {
                        Some(p) => pair.first.iter().map(|&i| ts.get(p[i].1)).collect(),
                        None => pair.second.iter().map(|&i| ts.get(i)).collect(),
                    };
                    let lambdas = match lambda_source {
                        LambdaSource::Sampled => cfg.mixup.draw(first.len(), &mut lambda_rng)?,
                        LambdaSource::Fixed(l) => vec![l; first.len()],
                    };
                    mixup::mix_triple_batch_rows(&first, &second, &lambdas, ds, m)?
                }
            };
            let loss = annotmix_step(
                &mut state,
                &batch.x,
                &batch.a,
                &batch.z,
                lr,
                cfg.models.detach_embedding,
            )
            .map_err(|e| divergence(epoch, e))?;
            check_loss(loss, epoch)?;
            loss_sum += loss;
        }
        recorder.record(&mut state, epoch, loss_sum / batches.len() as f64, lr)?;
    }
    Ok(state)
}

/// Loss of an encoded batch and its gradients with respect to the
/// classifier parameters followed by the annotator parameters.
pub fn annotmix_loss_and_grads(
    models: &ModelPair,
    x: &Matrix,
    a: &Matrix,
    z: &Matrix,
    detach_embedding: bool,
) -> Result<(f64, Vec<Matrix>)> {
    let annotator = models
        .annotator
        .as_ref()
        .ok_or_else(|| Error::Contract("annotator network missing".into()))?;
    let mut tape = Tape::new();
    let cb = models.classifier.bind(&mut tape);
    let ab = annotator.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let av = tape.constant(a.clone());
    let (probs, embedding) = models.classifier.forward_tape(&mut tape, &cb, xv)?;
    let embedding = if detach_embedding {
        tape.detach(embedding)
    } else {
        embedding
    };
    let confusion = annotator.forward_tape(&mut tape, &ab, embedding, av)?;
    let annotation_probs = tape.row_vec_mat(probs, confusion)?;
    let loss = tape.soft_cross_entropy(annotation_probs, z, PROB_FLOOR)?;
    let loss_value = tape.value(loss).get(0, 0);
    if !loss_value.is_finite() {
        return Err(Error::Divergence {
            epoch: 0,
            message: format!("loss became {loss_value}"),
        });
    }
    Ok((loss_value, tape.backward(loss)?.params()))
}

/// Forward, backward and one optimiser update on an encoded batch. Returns
/// the batch loss before the update.
fn annotmix_step(
    state: &mut TrainState,
    x: &Matrix,
    a: &Matrix,
    z: &Matrix,
    lr: f64,
    detach_embedding: bool,
) -> Result<f64> {
    let (loss_value, grads) = annotmix_loss_and_grads(&state.models, x, a, z, detach_embedding)?;
    let ModelPair { classifier, annotator } = &mut state.models;
    let annotator = annotator
        .as_mut()
        .ok_or_else(|| Error::Contract("annotator network missing".into()))?;
    let params: Vec<&mut Matrix> = classifier
        .params_mut()
        .into_iter()
        .chain(annotator.params_mut())
        .collect();
    state.optimizer.step(params, &grads, lr)?;
    state.steps += 1;
    Ok(loss_value)
}

/// One optimiser update of a classifier on soft-label cross-entropy.
/// Returns the batch loss before the update.
pub fn classifier_step(
    classifier: &mut ClassifierNet,
    optimizer: &mut AdamW,
    x: &Matrix,
    y: &Matrix,
    lr: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let cb = classifier.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let (probs, _) = classifier.forward_tape(&mut tape, &cb, xv)?;
    let loss = tape.soft_cross_entropy(probs, y, PROB_FLOOR)?;
    let loss_value = tape.value(loss).get(0, 0);
    if !loss_value.is_finite() {
        return Err(Error::Divergence {
            epoch: 0,
            message: format!("loss became {loss_value}"),
        });
    }
    let grads = tape.backward(loss)?.params();
    optimizer.step(classifier.params_mut(), &grads, lr)?;
    Ok(loss_value)
}

/// Classifier-only training on majority votes (`mv_base`, `mv_mixup`) or on
/// true labels (`true_base`).
pub fn train_two_stage(
    ds: &Dataset,
    ann: &AnnotationSet,
    cfg: &TrainConfig,
    evals: EvalSets<'_>,
) -> Result<TrainState> {
    train_two_stage_with(ds, ann, cfg, evals, LambdaSource::Sampled)
}

pub fn train_two_stage_with(
    ds: &Dataset,
    ann: &AnnotationSet,
    cfg: &TrainConfig,
    evals: EvalSets<'_>,
    lambda_source: LambdaSource,
) -> Result<TrainState> {
    cfg.validate()?;
    let (instances, labels, excluded) = match cfg.method {
        Method::TrueBase => {
            let truth = ds
                .true_labels()
                .ok_or_else(|| Error::config("data.train_labels", "true_base needs true labels"))?;
            ((0..ds.len()).collect::<Vec<_>>(), truth.to_vec(), 0)
        }
        Method::MvBase | Method::MvMixup => {
            ann.validate_against(ds)?;
            let mut vote_rng = Rng::stream(cfg.seed, streams::VOTE);
            let agg = aggregate_majority(ann, ds.len(), ds.num_classes(), &mut vote_rng);
            (agg.instances, agg.labels, agg.excluded)
        }
        Method::AnnotMix => {
            return Err(Error::Contract("train_two_stage called for annot_mix".into()));
        }
    };
    if instances.is_empty() {
        return Err(Error::Input("no labelled instances to train on".into()));
    }
    if excluded > 0 {
        log::info!("{excluded} training instances have no votes and are skipped");
    }
    // Aggregated labels as single-annotator triples; annot-acc on them is
    // the training accuracy against the labels the classifier was fit to.
    let train_triples = TripleSet::from_triples(
        instances
            .iter()
            .zip(&labels)
            .map(|(&instance, &label)| Triple {
                instance,
                annotator: 0,
                label,
            })
            .collect(),
    );

    let mut init_rng = Rng::stream(cfg.seed, streams::INIT);
    let classifier = ClassifierNet::new(&classifier_sizes(ds, cfg), &mut init_rng)?;
    let mut state = TrainState {
        models: ModelPair {
            classifier,
            annotator: None,
        },
        optimizer: AdamW::new(cfg.weight_decay),
        epoch: 0,
        log: Vec::with_capacity(cfg.epochs),
        best: None,
        excluded_instances: excluded,
        steps: 0,
        train_triples,
    };

    let mut loader_rng = Rng::stream(cfg.seed, streams::LOADER);
    let mut lambda_rng = Rng::stream(cfg.seed, streams::LAMBDA);
    let recorder = EpochRecorder { evals, train_ds: ds };
    let mix = cfg.method == Method::MvMixup && cfg.mixup.mode != MixupMode::Off;
    let c = ds.num_classes();
    let encode = |idx: &[usize]| LabeledBatch {
        x: ds
            .features()
            .select_rows(&idx.iter().map(|&i| instances[i]).collect::<Vec<_>>()),
        y: one_hot(&idx.iter().map(|&i| labels[i]).collect::<Vec<_>>(), c),
    };

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(cfg.learning_rate, epoch, cfg.epochs);
        let batches = paired_index_batches(instances.len(), cfg.batch_size, &mut loader_rng)?;
        let mut loss_sum = 0.0;
        for pair in &batches {
            let first = encode(&pair.first);
            let batch = if mix {
                let lambdas = match lambda_source {
                    LambdaSource::Sampled => cfg.mixup.draw(pair.first.len(), &mut lambda_rng)?,
                    LambdaSource::Fixed(l) => vec![l; pair.first.len()],
                };
                mixup::mix_vanilla_batch_rows(&first, &encode(&pair.second), &lambdas)?
            } else {
                first
            };
            let loss = classifier_step(
                &mut state.models.classifier,
                &mut state.optimizer,
                &batch.x,
                &batch.y,
                lr,
            )
            .map_err(|e| divergence(epoch, e))?;
            check_loss(loss, epoch)?;
            state.steps += 1;
            loss_sum += loss;
        }
        recorder.record(&mut state, epoch, loss_sum / batches.len() as f64, lr)?;
    }
    Ok(state)
}

/// Dispatches on `cfg.method`.
pub fn train(ds: &Dataset, ann: &AnnotationSet, cfg: &TrainConfig, evals: EvalSets<'_>) -> Result<TrainState> {
    match cfg.method {
        Method::AnnotMix => train_annotmix(ds, ann, cfg, evals),
        _ => train_two_stage(ds, ann, cfg, evals),
    }
}
