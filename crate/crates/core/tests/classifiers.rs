//! Probe classifiers on synthetic embeddings with known structure.

mod support;

use std::collections::BTreeSet;

use dprobe_core::probeclf::{fit, micro_f1};
use dprobe_core::probes::{Label, LabelKind};
use dprobe_core::ProbeKind;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{clustered, unrelated};

fn classes(ys: &[usize]) -> Vec<Label> {
    ys.iter().map(|&c| Label::Class(c)).collect()
}

fn held_out_f1(kind: ProbeKind, train: (&[Vec<f64>], &[Label]), eval: (&[Vec<f64>], &[Label]), lk: LabelKind) -> f64 {
    let probe = fit(kind, train.0, train.1, lk).unwrap();
    micro_f1(&probe.predict_all(eval.0), eval.1)
}

#[test]
fn separable_clusters_are_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (xs, ys) = clustered(&mut rng, 600, 5, 12);
    let labels = classes(&ys);
    for kind in [ProbeKind::Linear, ProbeKind::Mlp] {
        let f1 = held_out_f1(kind, (&xs[..400], &labels[..400]), (&xs[400..], &labels[400..]), LabelKind::MultiClass(5));
        assert!(f1 >= 0.99, "{kind}: {f1}");
    }
}

#[test]
fn separable_label_sets_are_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    // Label c is present exactly when coordinate c is positive, with margin.
    let xs: Vec<Vec<f64>> = (0..600)
        .map(|_| (0..6).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(0.5..2.0)).collect())
        .collect();
    let labels: Vec<Label> = xs.iter().map(|x| Label::Set((0..4).filter(|&c| x[c] > 0.0).collect())).collect();
    for kind in [ProbeKind::Linear, ProbeKind::Mlp] {
        let f1 = held_out_f1(kind, (&xs[..400], &labels[..400]), (&xs[400..], &labels[400..]), LabelKind::MultiLabel(4));
        assert!(f1 >= 0.99, "{kind}: {f1}");
    }
}

#[test]
fn unrelated_labels_score_near_majority_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let weights = [0.6, 0.25, 0.15];
    let (xs, ys) = unrelated(&mut rng, 3000, 8, &weights);
    let labels = classes(&ys);
    let eval = &labels[2000..];
    let majority = eval.iter().filter(|l| **l == Label::Class(0)).count() as f64 / eval.len() as f64;
    let f1 = held_out_f1(ProbeKind::Linear, (&xs[..2000], &labels[..2000]), (&xs[2000..], eval), LabelKind::MultiClass(3));
    assert!((f1 - majority).abs() <= 0.05, "f1 {f1} majority {majority}");
}

#[test]
fn single_label_f1_is_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let n = rng.gen_range(1..60);
        let k = rng.gen_range(2..8);
        let p: Vec<Label> = (0..n).map(|_| Label::Class(rng.gen_range(0..k))).collect();
        let g: Vec<Label> = (0..n).map(|_| Label::Class(rng.gen_range(0..k))).collect();
        let acc = p.iter().zip(&g).filter(|(a, b)| a == b).count() as f64 / n as f64;
        assert_eq!(micro_f1(&p, &g), acc);
    }
}

#[test]
fn one_class_gives_constant_predictor() {
    let xs = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0]];
    let probe = fit(ProbeKind::Linear, &xs, &classes(&[2, 2, 2]), LabelKind::MultiClass(3)).unwrap();
    assert!(probe.degenerate);
    assert_eq!(probe.predict(&[9.0, -9.0]), Label::Class(2));
}

fn label_set() -> impl Strategy<Value = BTreeSet<usize>> {
    proptest::collection::btree_set(0usize..6, 0..4)
}

proptest! {
    #[test]
    fn micro_f1_is_symmetric_and_bounded(
        pairs in proptest::collection::vec((label_set(), label_set()), 1..30)
    ) {
        let p: Vec<Label> = pairs.iter().map(|(a, _)| Label::Set(a.clone())).collect();
        let g: Vec<Label> = pairs.iter().map(|(_, b)| Label::Set(b.clone())).collect();
        let f = micro_f1(&p, &g);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert_eq!(f, micro_f1(&g, &p));
        let any = g.iter().any(|l| matches!(l, Label::Set(s) if !s.is_empty()));
        prop_assert_eq!(micro_f1(&g, &g), if any { 1.0 } else { 0.0 });
    }

    #[test]
    fn classes_are_one_hot_sets(pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..40)) {
        let p: Vec<Label> = pairs.iter().map(|(a, _)| Label::Class(*a)).collect();
        let g: Vec<Label> = pairs.iter().map(|(_, b)| Label::Class(*b)).collect();
        let ps: Vec<Label> = pairs.iter().map(|(a, _)| Label::Set([*a].into())).collect();
        let gs: Vec<Label> = pairs.iter().map(|(_, b)| Label::Set([*b].into())).collect();
        prop_assert_eq!(micro_f1(&p, &g), micro_f1(&ps, &gs));
    }
}
