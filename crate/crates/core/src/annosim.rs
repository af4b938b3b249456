//! Simulated error-prone annotators.
//!
//! Each annotator is a small network trained on its own per-class subsample
//! of the true labels with its own epochs, learning rate and
//! initialisation. Its predictions are the noisy labels. A per-annotator
//! participation probability then decides which (instance, annotator) pairs
//! are kept, rescaled so the average number of labels per instance matches
//! the requested budget.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Annotation, AnnotationSet, Dataset};
use crate::error::{Error, Result};
use crate::models::ClassifierNet;
use crate::numerics::Rng;
use crate::training::{classifier_step, AdamW};

const MASK_STREAM: u64 = 1;
const PARTICIPATION_STREAM: u64 = 2;
const HELD_OUT_MASK_STREAM: u64 = 3;
const ANNOTATOR_STREAM_BASE: u64 = 1 << 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub num_annotators: usize,
    /// Inclusive range of training epochs.
    #[serde(default = "default_epochs")]
    pub epochs: [usize; 2],
    /// Learning-rate range, sampled log-uniformly.
    #[serde(default = "default_learning_rate")]
    pub learning_rate: [f64; 2],
    /// Range of the per-class fraction of instances an annotator sees; drawn
    /// separately for every (annotator, class).
    #[serde(default = "default_subsample")]
    pub subsample: [f64; 2],
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub target_avg_labels_per_instance: f64,
    /// Beta prior of participation probabilities.
    #[serde(default = "default_prior")]
    pub participation_prior: [f64; 2],
    /// Explicit participation probabilities; overrides the prior.
    #[serde(default)]
    pub participation: Option<Vec<f64>>,
    /// Set from the run seed, not from configuration files.
    #[serde(skip)]
    pub seed: u64,
}

// Default ranges give roughly 50% false labels at two labels per instance
// on four well-separated 2-D blobs.
fn default_epochs() -> [usize; 2] {
    [1, 2]
}

fn default_learning_rate() -> [f64; 2] {
    [1e-3, 1e-2]
}

fn default_subsample() -> [f64; 2] {
    [0.005, 0.08]
}

fn default_hidden() -> usize {
    32
}

fn default_batch() -> usize {
    32
}

fn default_prior() -> [f64; 2] {
    [2.0, 6.0]
}

impl SimConfig {
    pub fn new(num_annotators: usize, target_avg_labels_per_instance: f64, seed: u64) -> Self {
        Self {
            num_annotators,
            epochs: default_epochs(),
            learning_rate: default_learning_rate(),
            subsample: default_subsample(),
            hidden: default_hidden(),
            batch_size: default_batch(),
            target_avg_labels_per_instance,
            participation_prior: default_prior(),
            participation: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_annotators;
        if m == 0 {
            return Err(Error::config("sim.num_annotators", "must be positive"));
        }
        if self.epochs[0] == 0 || self.epochs[0] > self.epochs[1] {
            return Err(Error::config("sim.epochs", format!("invalid range {:?}", self.epochs)));
        }
        let [lo, hi] = self.learning_rate;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::config(
                "sim.learning_rate",
                format!("invalid range {:?}", self.learning_rate),
            ));
        }
        let [lo, hi] = self.subsample;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::config(
                "sim.subsample",
                format!("invalid range {:?}", self.subsample),
            ));
        }
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::config(
                "sim.hidden",
                "hidden width and batch size must be positive",
            ));
        }
        let t = self.target_avg_labels_per_instance;
        if !(t > 0.0 && t <= m as f64) {
            return Err(Error::config(
                "sim.target_avg_labels_per_instance",
                format!("{t} not reachable with {m} annotators (must lie in (0, {m}])"),
            ));
        }
        if let Some(p) = &self.participation {
            if p.len() != m || p.iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
                return Err(Error::config(
                    "sim.participation",
                    format!("need {m} probabilities in (0, 1]"),
                ));
            }
        } else if self.participation_prior.iter().any(|&v| v.is_nan() || v <= 0.0) {
            return Err(Error::config("sim.participation_prior", "parameters must be positive"));
        }
        Ok(())
    }
}

/// Hyperparameters drawn for one simulated annotator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Fraction of each class's instances used for training.
    pub subsample: Vec<f64>,
    pub training_instances: usize,
    pub participation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorSummary {
    pub annotator: usize,
    pub labels: usize,
    pub correct: usize,
    /// Accuracy on the labels this annotator provided; `None` without labels.
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub num_instances: usize,
    pub num_labels: usize,
    pub avg_labels_per_instance: f64,
    pub false_label_fraction: f64,
    pub per_annotator: Vec<AnnotatorSummary>,
}

impl SimReport {
    /// Max minus min accuracy over annotators with at least one label.
    pub fn accuracy_spread(&self) -> f64 {
        let acc: Vec<f64> = self.per_annotator.iter().filter_map(|a| a.accuracy).collect();
        if acc.is_empty() {
            return 0.0;
        }
        let max = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = acc.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}

/// Summary statistics of an annotation set against true labels.
pub fn noise_summary(ann: &AnnotationSet, ds: &Dataset) -> Result<SimReport> {
    let truth = ds
        .true_labels()
        .ok_or_else(|| Error::Input("noise summary needs true labels".into()))?;
    ann.validate_against(ds)?;
    let mut per: Vec<AnnotatorSummary> = (0..ann.num_annotators())
        .map(|m| AnnotatorSummary {
            annotator: m,
            labels: 0,
            correct: 0,
            accuracy: None,
        })
        .collect();
    let mut wrong = 0usize;
    for r in ann.records() {
        let s = &mut per[r.annotator];
        s.labels += 1;
        if r.label == truth[r.instance] {
            s.correct += 1;
        } else {
            wrong += 1;
        }
    }
    for s in &mut per {
        if s.labels > 0 {
            s.accuracy = Some(s.correct as f64 / s.labels as f64);
        }
    }
    let n = ann.len();
    Ok(SimReport {
        num_instances: ds.len(),
        num_labels: n,
        avg_labels_per_instance: if ds.is_empty() { 0.0 } else { n as f64 / ds.len() as f64 },
        false_label_fraction: if n == 0 { 0.0 } else { wrong as f64 / n as f64 },
        per_annotator: per,
    })
}

/// Result of a simulation run: the masked annotations plus the trained
/// annotator networks, which can label further instances (e.g. a test set).
#[derive(Clone, Debug)]
pub struct Simulation {
    pub annotations: AnnotationSet,
    pub report: SimReport,
    pub profiles: Vec<AnnotatorProfile>,
    pub annotators: Vec<ClassifierNet>,
    /// Rescaled probabilities used for masking.
    pub effective_participation: Vec<f64>,
}

impl Simulation {
    /// Labels every annotator assigns to every instance of `ds`.
    pub fn full_table(&self, ds: &Dataset) -> Result<AnnotationSet> {
        let preds = predict_all(&self.annotators, ds)?;
        let mut records = Vec::with_capacity(ds.len() * preds.len());
        for n in 0..ds.len() {
            for (m, p) in preds.iter().enumerate() {
                records.push(Annotation {
                    instance: n,
                    annotator: m,
                    label: p[n],
                });
            }
        }
        AnnotationSet::new(records, self.annotators.len())
    }

    /// Full table on held-out instances masked with the effective
    /// participation probabilities.
    pub fn masked_table(&self, ds: &Dataset, seed: u64) -> Result<AnnotationSet> {
        let preds = predict_all(&self.annotators, ds)?;
        let mut rng = Rng::stream(seed, HELD_OUT_MASK_STREAM);
        let draws = mask_draws(ds.len(), preds.len(), &mut rng);
        let records = select(&draws, &preds, &self.effective_participation, 1.0);
        AnnotationSet::new(records, self.annotators.len())
    }
}

fn predict_all(annotators: &[ClassifierNet], ds: &Dataset) -> Result<Vec<Vec<usize>>> {
    annotators
        .par_iter()
        .map(|net| net.predict_class(ds.features()))
        .collect()
}

/// Uniform draws `u[n][m]`, drawn instance-major so that the result does not
/// depend on thread scheduling.
fn mask_draws(n: usize, m: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..m).map(|_| rng.uniform()).collect()).collect()
}

fn select(draws: &[Vec<f64>], preds: &[Vec<usize>], probs: &[f64], scale: f64) -> Vec<Annotation> {
    let mut out = Vec::new();
    for (n, row) in draws.iter().enumerate() {
        for (m, &u) in row.iter().enumerate() {
            if u < (scale * probs[m]).min(1.0) {
                out.push(Annotation {
                    instance: n,
                    annotator: m,
                    label: preds[m][n],
                });
            }
        }
    }
    out
}

fn count_selected(draws: &[Vec<f64>], probs: &[f64], scale: f64) -> usize {
    draws
        .iter()
        .map(|row| {
            row.iter()
                .zip(probs)
                .filter(|(&u, &p)| u < (scale * p).min(1.0))
                .count()
        })
        .sum()
}

fn train_annotator(
    ds: &Dataset,
    truth: &[usize],
    cfg: &SimConfig,
    m: usize,
) -> Result<(ClassifierNet, AnnotatorProfile)> {
    let mut rng = Rng::stream(cfg.seed, ANNOTATOR_STREAM_BASE + m as u64);
    let epochs = cfg.epochs[0] + rng.below(cfg.epochs[1] - cfg.epochs[0] + 1);
    let [lr_lo, lr_hi] = cfg.learning_rate;
    let learning_rate = rng.uniform_range(lr_lo.ln(), lr_hi.ln()).exp();
    let c = ds.num_classes();
    let subsample: Vec<f64> = (0..c)
        .map(|_| rng.uniform_range(cfg.subsample[0], cfg.subsample[1]))
        .collect();

    let mut chosen = Vec::new();
    for (class, &ratio) in subsample.iter().enumerate() {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| truth[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        rng.shuffle(&mut members);
        let k = ((ratio * members.len() as f64).round() as usize).clamp(1, members.len());
        chosen.extend_from_slice(&members[..k]);
    }
    chosen.sort_unstable();

    let mut net = ClassifierNet::new(&[ds.dim(), cfg.hidden, c], &mut rng)?;
    let mut opt = AdamW::new(0.0);
    let mut order = chosen.clone();
    for _ in 0..epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let x = ds.features().select_rows(batch);
            let y = crate::data::one_hot(&batch.iter().map(|&i| truth[i]).collect::<Vec<_>>(), c);
            classifier_step(&mut net, &mut opt, &x, &y, learning_rate)?;
        }
    }
    Ok((
        net,
        AnnotatorProfile {
            epochs,
            learning_rate,
            subsample,
            training_instances: chosen.len(),
            participation: 0.0,
        },
    ))
}

/// Trains the simulated annotators on `ds` and masks their predictions down
/// to the configured label budget.
pub fn simulate_annotators(ds: &Dataset, cfg: &SimConfig) -> Result<Simulation> {
    cfg.validate()?;
    let truth = ds
        .true_labels()
        .ok_or_else(|| Error::Input("annotator simulation needs true labels".into()))?;
    if ds.is_empty() {
        return Err(Error::Input("annotator simulation on an empty dataset".into()));
    }
    let m = cfg.num_annotators;

    let trained: Vec<(ClassifierNet, AnnotatorProfile)> = (0..m)
        .into_par_iter()
        .map(|a| train_annotator(ds, truth, cfg, a))
        .collect::<Result<_>>()?;
    let (annotators, mut profiles): (Vec<_>, Vec<_>) = trained.into_iter().unzip();

    let participation = match &cfg.participation {
        Some(p) => p.clone(),
        None => {
            let mut rng = Rng::stream(cfg.seed, PARTICIPATION_STREAM);
            let [a, b] = cfg.participation_prior;
            (0..m).map(|_| rng.beta2(a, b)).collect::<Result<Vec<_>>>()?
        }
    };
    for (p, &v) in profiles.iter_mut().zip(&participation) {
        p.participation = v;
    }

    let preds = predict_all(&annotators, ds)?;
    let mut mask_rng = Rng::stream(cfg.seed, MASK_STREAM);
    let draws = mask_draws(ds.len(), m, &mut mask_rng);
    let target = (cfg.target_avg_labels_per_instance * ds.len() as f64).round() as usize;

    // Smallest global scale whose realised label count reaches the target.
    let min_p = participation.iter().copied().fold(f64::INFINITY, f64::min);
    let mut lo = 0.0;
    let mut hi = 1.0 / min_p;
    if target < ds.len() * m {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if count_selected(&draws, &participation, mid) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let scale = hi;
    let effective: Vec<f64> = participation.iter().map(|&p| (scale * p).min(1.0)).collect();
    let records = select(&draws, &preds, &effective, 1.0);
    let annotations = AnnotationSet::new(records, m)?;
    let report = noise_summary(&annotations, ds)?;
    log::info!(
        "simulated {} labels: {:.3} per instance, {:.1}% false",
        report.num_labels,
        report.avg_labels_per_instance,
        100.0 * report.false_label_fraction
    );
    Ok(Simulation {
        annotations,
        report,
        profiles,
        annotators,
        effective_participation: effective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gaussian_blobs;

    fn blobs(n: usize) -> Dataset {
        gaussian_blobs(n, 4, 2.0, 1.0, &mut Rng::new(1)).unwrap()
    }

    #[test]
    fn noise_summary_counts() {
        let ds = Dataset::new(crate::numerics::Matrix::zeros(100, 1), Some(vec![0; 100]), 2).unwrap();
        let all_right: Vec<Annotation> = (0..100)
            .map(|n| Annotation {
                instance: n,
                annotator: n % 4,
                label: 0,
            })
            .collect();
        let ann = AnnotationSet::new(all_right, 4).unwrap();
        let rep = noise_summary(&ann, &ds).unwrap();
        assert_eq!(rep.false_label_fraction, 0.0);
        assert_eq!(rep.per_annotator.iter().map(|a| a.labels).sum::<usize>(), 100);

        let half: Vec<Annotation> = (0..100)
            .map(|n| Annotation {
                instance: n,
                annotator: 0,
                label: n % 2,
            })
            .collect();
        let rep = noise_summary(&AnnotationSet::new(half, 1).unwrap(), &ds).unwrap();
        assert_eq!(rep.false_label_fraction, 0.5);
    }

    #[test]
    fn full_participation_annotates_everything() {
        let ds = blobs(60);
        let mut cfg = SimConfig::new(3, 3.0, 5);
        cfg.epochs = [1, 2];
        cfg.participation = Some(vec![1.0; 3]);
        let sim = simulate_annotators(&ds, &cfg).unwrap();
        assert_eq!(sim.annotations.len(), 180);
    }

    #[test]
    fn budget_is_met_and_reproducible() {
        let ds = blobs(400);
        let mut cfg = SimConfig::new(6, 2.0, 9);
        cfg.epochs = [1, 3];
        let a = simulate_annotators(&ds, &cfg).unwrap();
        assert!(
            (a.report.avg_labels_per_instance - 2.0).abs() <= 0.1,
            "{}",
            a.report.avg_labels_per_instance
        );
        let b = simulate_annotators(&ds, &cfg).unwrap();
        assert_eq!(a.annotations, b.annotations);
    }

    #[test]
    fn near_chance_annotators() {
        let ds = blobs(2000);
        let mut cfg = SimConfig::new(5, 2.0, 3);
        cfg.epochs = [1, 1];
        cfg.learning_rate = [1e-6, 1e-6];
        cfg.subsample = [0.01, 0.01];
        let sim = simulate_annotators(&ds, &cfg).unwrap();
        assert!(
            sim.report.false_label_fraction > 0.5,
            "{}",
            sim.report.false_label_fraction
        );
    }

    #[test]
    fn unreachable_budget_rejected() {
        let ds = blobs(10);
        let cfg = SimConfig::new(3, 3.5, 0);
        assert!(matches!(simulate_annotators(&ds, &cfg), Err(Error::Config { .. })));
    }
}
