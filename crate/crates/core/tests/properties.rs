//! Property tests of the end-to-end fit: oracle agreement, projector
//! structure and invariances.

use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use tirex_core::data::{rank_view, standardize};
use tirex_core::estimators::{cume_matrix_oracle, cuve_matrix_oracle};
use tirex_core::linalg::frobenius_dist_sq;
use tirex_core::rng::stream_rng;
use tirex_core::{fit, Dataset, Method, WhitenOptions};

fn random_dataset(seed: u64, n: usize, p: usize) -> Dataset {
    let mut rng = stream_rng(seed, 0);
    let x: Array2<f64> = Array2::from_shape_simple_fn((n, p), || StandardNormal.sample(&mut rng));
    let noise = Array1::from_shape_simple_fn(n, || rng.random::<f64>());
    // depends on the first column only, plus noise
    let y = x.column(0).mapv(|v| v.exp()) + noise;
    Dataset::new(x, y, None).unwrap()
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cumulative_methods_match_double_sum_oracles(seed in 0u64..10_000, n in 5usize..40, p in 1usize..5) {
        let ds = random_dataset(seed, n, p);
        let z = standardize(&ds, &WhitenOptions::default()).unwrap().z;
        let w = WhitenOptions::default();
        let cume = fit(&ds, Method::Cume, None, 1, &w).unwrap().candidate_matrix;
        let cuve = fit(&ds, Method::Cuve, None, 1, &w).unwrap().candidate_matrix;
        let d1 = cume.as_array() - cume_matrix_oracle(z.view(), ds.y()).as_array();
        let d2 = cuve.as_array() - cuve_matrix_oracle(z.view(), ds.y()).as_array();
        prop_assert!(max_abs(&d1) < 1e-10);
        prop_assert!(max_abs(&d2) < 1e-10);
    }

    #[test]
    fn fitted_projectors_are_orthogonal_projections(
        seed in 0u64..10_000,
        n in 20usize..80,
        p in 2usize..6,
        method_ix in 0usize..6,
    ) {
        let method = Method::ALL[method_ix];
        let ds = random_dataset(seed, n, p);
        let d = 1 + (seed as usize) % p;
        let k = n / 2;
        let f = fit(&ds, method, Some(k), d, &WhitenOptions::default()).unwrap();
        let m = f.projector_whitened.matrix();
        prop_assert_eq!(f.projector_whitened.rank(), d);
        prop_assert!(max_abs(&(m.dot(m) - m)) < 1e-10);
        prop_assert!(max_abs(&(m - &m.t())) < 1e-12);
        prop_assert!((m.diag().sum() - d as f64).abs() < 1e-10);
        let gram = f.basis_raw.t().dot(&f.basis_raw);
        prop_assert!(max_abs(&(gram - Array2::<f64>::eye(d))) < 1e-10);
        prop_assert!(f.eigen.eigenvalues.windows(2).into_iter().all(|w| w[0] >= w[1]));
        prop_assert_eq!(f.project(ds.x()).dim(), (n, d));
    }

    #[test]
    fn row_order_does_not_matter(seed in 0u64..10_000, n in 10usize..60, shift in 1usize..9) {
        let ds = random_dataset(seed, n, 3);
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let shuffled = ds.select_rows(&perm);
        let w = WhitenOptions::default();
        for method in [Method::Tirex1, Method::Tirex2, Method::Cume, Method::Cuve] {
            let a = fit(&ds, method, Some(n / 3 + 1), 1, &w).unwrap();
            let b = fit(&shuffled, method, Some(n / 3 + 1), 1, &w).unwrap();
            let gap = a.candidate_matrix.as_array() - b.candidate_matrix.as_array();
            prop_assert!(max_abs(&gap) < 1e-9 * (1.0 + max_abs(a.candidate_matrix.as_array())));
        }
    }

    #[test]
    fn rank_view_sorts_targets_descending(seed in 0u64..10_000, n in 1usize..100) {
        let ds = random_dataset(seed, n, 1);
        let order = rank_view(&ds);
        let y = ds.y();
        prop_assert!(order.order().windows(2).all(|w| y[w[0]] >= y[w[1]]));
    }
}

#[test]
fn tirex1_recovers_planted_direction() {
    // y depends on x·(1, 1, 0)/√2 only; the estimate should be close.
    let mut rng = stream_rng(5, 0);
    let n = 20_000;
    let x: Array2<f64> = Array2::from_shape_simple_fn((n, 3), || StandardNormal.sample(&mut rng));
    let y = (x.column(0).to_owned() + x.column(1)).mapv(|v| v.exp());
    let ds = Dataset::new(x, y, None).unwrap();
    let f = fit(&ds, Method::Tirex1, Some(1000), 1, &WhitenOptions::default()).unwrap();
    let truth = tirex_core::linalg::projector_from_basis(
        Array2::from_shape_vec((3, 1), vec![0.5f64.sqrt(), 0.5f64.sqrt(), 0.0]).unwrap().view(),
    )
    .unwrap();
    let err = frobenius_dist_sq(&f.projector_raw().unwrap(), &truth).unwrap();
    assert!(err < 0.01, "{err}");
    assert!(f.basis_raw.column(0).iter().take(2).all(|v| v.abs() > 0.6));
    assert!(f.basis_raw.index_axis(Axis(1), 0)[2].abs() < 0.1);
}
