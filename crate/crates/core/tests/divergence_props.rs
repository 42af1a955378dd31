//! Divergence and relation-matrix invariants on random inputs.

use proptest::prelude::*;
use relmatch::density::{von_neumann_entropy, DensityMatrix};
use relmatch::divergence::{
    matrix_bregman, mce, mce_grad_q, mce_lower_bound, mce_normalized, mce_pca_form, mre, LogBackend, MceConfig,
};
use relmatch::relation::{check_one_hot_equality, relation, relation_normalized, PredictionBatch};
use relmatch::spectral::eig_sym;
use relmatch::{Matrix, SymMatrix};

/// Positive definite `A·Aᵀ + floor·I`, scaled to unit trace.
fn density(n: usize, raw: &[f64], floor: f64) -> DensityMatrix {
    let a = Matrix::from_vec(n, n, raw.to_vec()).unwrap();
    let g = SymMatrix::new(a.matmul_t(&a)).unwrap().add_identity(floor);
    let t = g.trace();
    DensityMatrix::new(g.scale(1.0 / t)).unwrap()
}

fn pair() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    (2usize..=8).prop_flat_map(|n| {
        (Just(n), prop::collection::vec(-1.0f64..1.0, n * n), prop::collection::vec(-1.0f64..1.0, n * n))
    })
}

fn rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=8, 2usize..=5).prop_flat_map(|(b, k)| {
        prop::collection::vec(prop::collection::vec(0.01f64..1.0, k), b).prop_map(|rs| {
            rs.into_iter()
                .map(|r| {
                    let s: f64 = r.iter().sum();
                    r.into_iter().map(|x| x / s).collect()
                })
                .collect()
        })
    })
}

fn principal() -> MceConfig {
    MceConfig::principal(0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decomposition_into_entropy_and_relative_entropy((n, a, b) in pair()) {
        let p = density(n, &a, 1e-2);
        let q = density(n, &b, 1e-2);
        let cfg = principal();
        let lhs = mce_normalized(&p, &q, &cfg).unwrap();
        let rhs = von_neumann_entropy(&p).unwrap() + mre(&p, &q, &cfg).unwrap() + 1.0;
        prop_assert!((lhs - rhs).abs() <= 1e-9, "{lhs} vs {rhs}");
    }

    #[test]
    fn relative_entropy_and_bregman_are_nonnegative((n, a, b) in pair()) {
        let p = density(n, &a, 1e-2);
        let q = density(n, &b, 1e-2);
        let cfg = principal();
        prop_assert!(mre(&p, &q, &cfg).unwrap() >= -1e-12);
        prop_assert!(matrix_bregman(p.as_sym(), q.as_sym(), &cfg).unwrap() >= -1e-12);
        prop_assert!(mre(&p, &p, &cfg).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn lower_bound_holds((n, a, b) in pair(), scale in 0.3f64..3.0) {
        let p = density(n, &a, 1e-2);
        let q = density(n, &b, 1e-2).into_sym().scale(scale);
        let value = mce(p.as_sym(), &q, &principal()).unwrap();
        let bound = mce_lower_bound(&p, &q).unwrap();
        prop_assert!(value >= bound - 1e-10, "{value} < {bound}");
    }

    #[test]
    fn eigen_expansion_agrees((n, a, b) in pair()) {
        let p = density(n, &a, 1e-2).into_sym();
        let q = density(n, &b, 1e-2).into_sym();
        let direct = mce(&p, &q, &principal()).unwrap();
        let expanded = mce_pca_form(&p, &q).unwrap();
        prop_assert!((direct - expanded).abs() <= 1e-9 * direct.abs().max(1.0));
    }

    #[test]
    fn principal_gradient_matches_central_difference((n, a, b, c) in (2usize..=6).prop_flat_map(|n| (
        Just(n),
        prop::collection::vec(-1.0f64..1.0, n * n),
        prop::collection::vec(-1.0f64..1.0, n * n),
        prop::collection::vec(-1.0f64..1.0, n * n),
    ))) {
        let p = density(n, &a, 5e-2).into_sym();
        let q = density(n, &b, 5e-2).into_sym();
        let mut dir = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                dir[(i, j)] = 0.5 * (c[i * n + j] + c[j * n + i]);
            }
        }
        let dir = SymMatrix::new(dir).unwrap();
        let cfg = principal();
        let g = mce_grad_q(&p, &q, &cfg).unwrap();
        let analytic = g.trace_product(&dir);
        let h = 1e-6;
        let f = |s: f64| mce(&p, &q.add(&dir.scale(s)), &cfg).unwrap();
        let fd = (f(h) - f(-h)) / (2.0 * h);
        prop_assert!((analytic - fd).abs() <= 1e-5 * analytic.abs().max(1.0), "{analytic} vs {fd}");
    }

    #[test]
    fn taylor_and_elementwise_gradients_match_central_difference((n, a, b) in (2usize..=6).prop_flat_map(|n| (
        Just(n),
        prop::collection::vec(0.05f64..1.0, n * n),
        prop::collection::vec(0.05f64..1.0, n * n),
    ))) {
        let p = density(n, &a, 1e-2).into_sym();
        let q = density(n, &b, 1e-2).into_sym().scale(n as f64);
        for cfg in [MceConfig::default(), MceConfig::new(LogBackend::ElementWise(1e-6), 0.0).unwrap()] {
            let g = mce_grad_q(&p, &q, &cfg).unwrap();
            for i in 0..n {
                for j in i..n {
                    let mut e = Matrix::zeros(n, n);
                    e[(i, j)] = 1.0;
                    e[(j, i)] = 1.0;
                    let e = SymMatrix::new(e).unwrap();
                    let h = 1e-6;
                    let f = |s: f64| mce(&p, &q.add(&e.scale(s)), &cfg).unwrap();
                    let fd = (f(h) - f(-h)) / (2.0 * h);
                    let analytic = g.trace_product(&e);
                    prop_assert!((analytic - fd).abs() <= 1e-5 * analytic.abs().max(1.0), "{cfg:?} ({i},{j}) {analytic} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn relation_is_psd_with_row_norm_diagonal(rs in rows()) {
        let batch = PredictionBatch::from_rows(&rs).unwrap();
        let r = relation(&batch);
        for (i, row) in rs.iter().enumerate() {
            let want: f64 = row.iter().map(|x| x * x).sum();
            prop_assert!((r[(i, i)] - want).abs() <= 1e-15);
            for j in 0..rs.len() {
                prop_assert!(r[(i, j)] >= 0.0 && r[(i, j)] <= 1.0);
                prop_assert_eq!(r[(i, j)], r[(j, i)]);
            }
        }
        let s = eig_sym(&r).unwrap();
        prop_assert!(s.min_eigenvalue() >= -1e-12);
        let rank = s.eigenvalues.iter().filter(|&&v| v > 1e-10).count();
        prop_assert!(rank <= batch.classes());
        let norm = relation_normalized(&batch);
        prop_assert!((norm.trace() - r.trace() / rs.len() as f64).abs() <= 1e-15);
        prop_assert!(norm.trace() <= 1.0 + 1e-15);
    }

    #[test]
    fn one_hot_batches_match_themselves(labels in prop::collection::vec(0usize..4, 1..10)) {
        let z = PredictionBatch::one_hot(&labels, 4).unwrap();
        prop_assert!(check_one_hot_equality(&z, &z).unwrap());
        let r = relation(&z);
        for i in 0..labels.len() {
            for j in 0..labels.len() {
                prop_assert_eq!(r[(i, j)], if labels[i] == labels[j] { 1.0 } else { 0.0 });
            }
        }
    }
}

#[test]
fn mixed_rows_never_match_a_one_hot_relation() {
    let z1 = PredictionBatch::one_hot(&[0, 1, 0], 3).unwrap();
    let z2 = PredictionBatch::from_rows(&[[0.9, 0.1, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
    assert!(!check_one_hot_equality(&z1, &z2).unwrap());
}
