//! Bootstrap tie statistics and the power-iteration PCA.

mod support;

use dprobe_core::analysis::pca2;
use dprobe_core::humaneval::{bootstrap_tie_fraction, summarize, DEFAULT_SETS, DEFAULT_SET_SIZE};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::{anisotropic, pca_errors, tie_annotations};

#[test]
fn bootstrap_centres_on_the_tie_rate() {
    let records = tie_annotations(2000, 0.35, 9);
    let dists = bootstrap_tie_fraction(&records, DEFAULT_SETS, DEFAULT_SET_SIZE, 1).unwrap();
    let s = summarize(&dists[0].fractions).unwrap();
    let binomial_std = (0.35f64 * 0.65 / 200.0).sqrt();
    assert!((s.mean - 0.35).abs() <= 0.005, "mean {}", s.mean);
    assert!((s.std - binomial_std).abs() <= 0.005, "std {}", s.std);
    assert_eq!(s.histogram.iter().sum::<u64>(), DEFAULT_SETS as u64);
}

#[test]
fn bootstrap_is_seed_deterministic() {
    let records = tie_annotations(300, 0.2, 1);
    let a = bootstrap_tie_fraction(&records, 500, 100, 7).unwrap();
    let b = bootstrap_tie_fraction(&records, 500, 100, 7).unwrap();
    let c = bootstrap_tie_fraction(&records, 500, 100, 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn pca_matches_dense_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for dim in 2..=10 {
        let points = anisotropic(&mut rng, 200, dim);
        let (agree, ortho) = pca_errors(&points);
        assert!(agree < 1e-8, "dim {dim}: {agree:e}");
        assert!(ortho < 1e-10, "dim {dim}: {ortho:e}");
    }
}

#[test]
fn projection_coordinates_are_centred_dot_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let points = anisotropic(&mut rng, 50, 4);
    let p = pca2(&points).unwrap();
    for (x, c) in points.iter().zip(&p.coords) {
        for k in 0..2 {
            let expect: f64 = x.iter().zip(&p.mean).zip(&p.axes[k]).map(|((xi, m), a)| (xi - m) * a).sum();
            assert!((c[k] - expect).abs() < 1e-12);
        }
    }
    assert!(p.explained_variance_ratio[0] >= p.explained_variance_ratio[1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pca_axes_orthonormal_for_any_data(seed in 0u64..10_000, dim in 2usize..8, n in 5usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = anisotropic(&mut rng, n, dim);
        let (_, ortho) = pca_errors(&points);
        prop_assert!(ortho < 1e-10);
    }

    #[test]
    fn tie_fractions_stay_in_unit_interval(rate in 0.0f64..1.0, seed in 0u64..100) {
        let records = tie_annotations(200, rate, seed);
        let d = bootstrap_tie_fraction(&records, 200, 50, seed).unwrap();
        let s = summarize(&d[0].fractions).unwrap();
        prop_assert!(d[0].fractions.iter().all(|f| (0.0..=1.0).contains(f)));
        prop_assert!((0.0..=1.0).contains(&s.mass_at_most_half));
        prop_assert!(s.std >= 0.0);
    }
}
