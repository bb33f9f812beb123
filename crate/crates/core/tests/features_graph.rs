//! Property tests for feature extraction and graph construction.

use ezone_core::graph::{build_knn_graph, normalize_adjacency};
use ezone_core::grid::{compute_features, empirical_quantile, standardize, PrecipPanel};
use ndarray::Array2;
use proptest::prelude::*;

fn series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..80.0f64], 2..200)
}

fn coords(max_n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-60.0..60.0f64, -170.0..170.0f64), 2..max_n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn feature_bounds(values in series(), tau in 0.5..0.99f64) {
        let t = values.len() as f64;
        let panel = PrecipPanel::new(0, 0.0, 0.0, 2001, values).unwrap();
        let f = compute_features(&panel, tau).unwrap();
        prop_assert!(f.max_daily >= f.mu);
        prop_assert!(f.exceed_freq >= 0.0);
        prop_assert!(f.exceed_freq <= 1.0 - tau + 1.0 / t + 1e-12);
    }

    #[test]
    fn quantile_monotone_in_tau(values in series(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(empirical_quantile(&values, lo).unwrap() <= empirical_quantile(&values, hi).unwrap());
    }

    #[test]
    fn standardize_inverts(
        data in prop::collection::vec(prop::collection::vec(-1e3..1e3f64, 4), 3..60),
        constant_col in 0usize..5,
    ) {
        let n = data.len();
        let mut raw = Array2::from_shape_fn((n, 4), |(i, j)| data[i][j]);
        if constant_col < 4 {
            raw.column_mut(constant_col).fill(7.5);
        }
        let fm = standardize(&raw, (0..n as u32).collect()).unwrap();
        let back = fm.inverse_transform();
        for j in 0..4 {
            let col = fm.rows.column(j);
            if fm.col_stds[j] == 0.0 {
                prop_assert!(col.iter().all(|&v| v == 0.0));
                continue;
            }
            let mean = col.sum() / n as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((sd - 1.0).abs() < 1e-9);
            for i in 0..n {
                prop_assert!((back[(i, j)] - raw[(i, j)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn knn_degree_bounds(pts in coords(60), k in 1usize..12) {
        let g = build_knn_graph(&pts, k).unwrap();
        let k_eff = k.min(pts.len() - 1);
        prop_assert_eq!(g.k, k_eff);
        for d in g.degrees() {
            prop_assert!(d >= k_eff && d <= pts.len() - 1);
        }
        prop_assert_eq!(build_knn_graph(&pts, k).unwrap(), g);
    }

    #[test]
    fn normalized_adjacency_spectral_radius(pts in coords(25), k in 1usize..6) {
        let s = normalize_adjacency(&build_knn_graph(&pts, k).unwrap()).to_dense();
        let n = s.nrows();
        let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| s[(i, j)]);
        let eig = nalgebra::SymmetricEigen::new(dense);
        let rho = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(rho <= 1.0 + 1e-10, "dense spectral radius {}", rho);

        // power iteration on S^2 from a positive start
        let mut v = Array2::from_elem((n, 1), 1.0 / (n as f64).sqrt());
        let mut est = 0.0;
        for _ in 0..500 {
            let w = s.dot(&s.dot(&v));
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            est = norm.sqrt();
            v = w / norm;
        }
        prop_assert!(est <= rho + 1e-6, "power iteration {} vs eigen {}", est, rho);
    }
}
