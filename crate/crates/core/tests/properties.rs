//! Property tests over randomly generated inputs.

use annotmix::data::{
    build_triples, load_annotations, load_dataset, paired_epoch_stream, Annotation, AnnotationSet, Dataset, Triple,
};
use annotmix::eval::auroc;
use annotmix::mixup::mix_triple_batch_rows;
use annotmix::models::{AnnotatorNet, ClassifierNet, ModelPair};
use annotmix::numerics::{Matrix, Rng};
use proptest::prelude::*;

fn brute_force_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn dataset(n: usize, d: usize, c: usize, seed: u64) -> Dataset {
    let mut rng = Rng::new(seed);
    let mut x = Matrix::zeros(n, d);
    for v in x.as_mut_slice() {
        *v = rng.normal();
    }
    let labels = (0..n).map(|_| rng.below(c)).collect();
    Dataset::new(x, Some(labels), c).unwrap()
}

fn random_annotations(n: usize, m: usize, c: usize, rng: &mut Rng) -> AnnotationSet {
    let mut records = Vec::new();
    for i in 0..n {
        for a in 0..m {
            if rng.uniform() < 0.4 {
                records.push(Annotation {
                    instance: i,
                    annotator: a,
                    label: rng.below(c),
                });
            }
        }
    }
    AnnotationSet::new(records, m).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn softmax_rows_are_distributions(rows in 1usize..6, cols in 1usize..8, seed in any::<u64>(), scale in 0.0f64..500.0) {
        let mut rng = Rng::new(seed);
        let mut m = Matrix::zeros(rows, cols);
        for v in m.as_mut_slice() {
            *v = scale * (2.0 * rng.uniform() - 1.0);
        }
        let s = m.softmax_rows();
        for r in 0..rows {
            let row = s.row(r);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_rows_are_convex(seed in any::<u64>(), batch in 1usize..10) {
        let mut rng = Rng::new(seed);
        let (n, d, m, c) = (8, 3, 4, 5);
        let ds = dataset(n, d, c, seed);
        let pick = |rng: &mut Rng| Triple { instance: rng.below(n), annotator: rng.below(m), label: rng.below(c) };
        let b1: Vec<Triple> = (0..batch).map(|_| pick(&mut rng)).collect();
        let b2: Vec<Triple> = (0..batch).map(|_| pick(&mut rng)).collect();
        let lambdas: Vec<f64> = (0..batch).map(|_| rng.uniform()).collect();
        let mixed = mix_triple_batch_rows(&b1, &b2, &lambdas, &ds, m).unwrap();
        for r in 0..batch {
            prop_assert!((mixed.a.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((mixed.z.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for k in 0..d {
                let u = ds.features().get(b1[r].instance, k);
                let v = ds.features().get(b2[r].instance, k);
                let x = mixed.x.get(r, k);
                prop_assert!(x >= u.min(v) - 1e-12 && x <= u.max(v) + 1e-12);
            }
        }
    }

    #[test]
    fn fast_auroc_matches_brute_force(seed in any::<u64>(), n in 2usize..100, levels in 1usize..6) {
        let mut rng = Rng::new(seed);
        let scores: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64 / levels as f64).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.5).collect();
        labels[0] = true;
        labels[1] = false;
        prop_assert_eq!(auroc(&scores, &labels).unwrap(), brute_force_auroc(&scores, &labels));
    }

    #[test]
    fn paired_stream_covers_each_triple_once_per_loader(seed in any::<u64>(), batch in 1usize..20) {
        let mut rng = Rng::new(seed);
        let ds = dataset(15, 2, 3, seed);
        let ann = random_annotations(15, 4, 3, &mut rng);
        prop_assume!(!ann.is_empty());
        let ts = build_triples(&ds, &ann).unwrap();
        let pairs = paired_epoch_stream(&ts, batch, &mut rng).unwrap();
        let mut first: Vec<usize> = pairs.iter().flat_map(|p| p.first.clone()).collect();
        let mut second: Vec<usize> = pairs.iter().flat_map(|p| p.second.clone()).collect();
        first.sort_unstable();
        second.sort_unstable();
        let all: Vec<usize> = (0..ts.len()).collect();
        prop_assert_eq!(&first, &all);
        prop_assert_eq!(&second, &all);
        prop_assert!(pairs.iter().all(|p| p.first.len() == p.second.len() && p.first.len() <= batch));
    }

    #[test]
    fn csv_round_trip(seed in any::<u64>(), n in 1usize..20, d in 1usize..4) {
        let mut rng = Rng::new(seed);
        let ds = dataset(n, d, 3, seed);
        let ann = random_annotations(n, 3, 3, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let (f, l, a) = (dir.path().join("x.csv"), dir.path().join("y.csv"), dir.path().join("a.csv"));
        ds.save(&f, Some(&l)).unwrap();
        ann.save(&a).unwrap();
        let back = load_dataset(&f, Some(&l), Some(3)).unwrap();
        prop_assert_eq!(back.features(), ds.features());
        prop_assert_eq!(back.true_labels(), ds.true_labels());
        prop_assert_eq!(load_annotations(&a, 3).unwrap(), ann);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let classifier = ClassifierNet::new(&[3, 5, 4], &mut rng).unwrap();
        let annotator = AnnotatorNet::new(5, 3, 4, 6, 0.9, &mut rng).unwrap();
        let models = ModelPair { classifier, annotator: Some(annotator) };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        models.save(&p).unwrap();
        prop_assert_eq!(ModelPair::load(&p).unwrap(), models);
    }
}
