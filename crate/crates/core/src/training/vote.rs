//! Majority-vote label aggregation for the two-stage baselines.

use crate::data::AnnotationSet;
use crate::numerics::Rng;

/// Modal class among `votes`; ties are broken uniformly at random. `None`
/// when there are no votes.
pub fn vote(votes: &[usize], num_classes: usize, rng: &mut Rng) -> Option<usize> {
    if votes.is_empty() {
        return None;
    }
    let mut counts = vec![0usize; num_classes.max(votes.iter().max().unwrap() + 1)];
    for &v in votes {
        counts[v] += 1;
    }
    let best = *counts.iter().max().unwrap();
    let modes: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] == best).collect();
    if modes.len() == 1 {
        Some(modes[0])
    } else {
        Some(modes[rng.below(modes.len())])
    }
}

/// Majority vote over the annotations of instance `n`.
pub fn majority_vote(ann: &AnnotationSet, n: usize, num_classes: usize, rng: &mut Rng) -> Option<usize> {
    let votes: Vec<usize> = ann
        .records()
        .iter()
        .filter(|r| r.instance == n)
        .map(|r| r.label)
        .collect();
    vote(&votes, num_classes, rng)
}

/// Aggregated training labels for instances `0..num_instances`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Aggregated {
    pub instances: Vec<usize>,
    pub labels: Vec<usize>,
    /// Instances without any annotation.
    pub excluded: usize,
}

pub fn aggregate_majority(ann: &AnnotationSet, num_instances: usize, num_classes: usize, rng: &mut Rng) -> Aggregated {
    let by_instance = ann.labels_by_instance(num_instances);
    let mut out = Aggregated {
        instances: Vec::new(),
        labels: Vec::new(),
        excluded: 0,
    };
    for (n, votes) in by_instance.iter().enumerate() {
        match vote(votes, num_classes, rng) {
            Some(label) => {
                out.instances.push(n);
                out.labels.push(label);
            }
            None => out.excluded += 1,
        }
    }
    out
}
