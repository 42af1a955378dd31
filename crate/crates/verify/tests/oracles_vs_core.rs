//! The independent oracles against the primary implementation, plus the
//! full property suite.

use relmatch::divergence::{mce, scalar_ce_bridge, MceConfig};
use relmatch::relation::{relation, PredictionBatch};
use relmatch::spectral::{eig_sym, log_taylor};
use relmatch::{Matrix, SymMatrix};
use relmatch_verify::reference::*;
use relmatch_verify::suite;

#[test]
fn diagonal_mce_matches_commuting_oracle() {
    let p = [0.5, 0.3, 0.2];
    let q = [0.2, 0.7, 1.1];
    let got = mce(&SymMatrix::from_diag(&p), &SymMatrix::from_diag(&q), &MceConfig::principal(0.0)).unwrap();
    assert!((got - oracle_mce_commuting(&p, &q)).abs() <= 1e-12);
}

#[test]
fn gram_matches_oracle() {
    let rows = vec![vec![0.2, 0.5, 0.3], vec![1.0, 0.0, 0.0], vec![0.1, 0.1, 0.8]];
    let want = oracle_gram(&rows);
    let got = relation(&PredictionBatch::from_rows(&rows).unwrap());
    for i in 0..3 {
        for j in 0..3 {
            assert!((got[(i, j)] - want[i][j]).abs() <= 1e-15);
        }
    }
}

#[test]
fn one_hot_relation_spectrum_is_class_counts() {
    // Singular values of Z are √count; eigenvalues of ZZᵀ are the counts.
    let labels = [0, 2, 0, 0];
    let z = PredictionBatch::one_hot(&labels, 3).unwrap();
    let eigs = eig_sym(&relation(&z)).unwrap().eigenvalues;
    let sv = oracle_onehot_svd(&labels, 4, 3);
    for (e, s) in eigs.iter().zip(&sv) {
        assert!((e - s * s).abs() <= 1e-12);
    }
    assert!(eigs[sv.len()..].iter().all(|e| e.abs() <= 1e-12));
}

#[test]
fn cross_entropy_bridge_matches_scalar_oracle() {
    let labels = [0, 1, 1, 2];
    let probs = vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.8, 0.1], vec![0.3, 0.4, 0.3], vec![0.05, 0.05, 0.9]];
    let mu = Matrix::from_rows(
        &labels.iter().map(|&l| (0..3).map(|c| if c == l { 1.0 } else { 0.0 }).collect::<Vec<_>>()).collect::<Vec<_>>(),
    );
    let nu = Matrix::from_rows(&probs);
    let got = scalar_ce_bridge(&mu, &nu).unwrap();
    assert!((got - oracle_scalar_ce(&labels, &probs)).abs() <= 1e-12, "{got}");
}

#[test]
fn series_log_matches_scalar_oracle_on_diagonals() {
    let d = [0.6, 1.0, 1.3];
    let m = log_taylor(&SymMatrix::from_diag(&d), 7);
    for (i, &x) in d.iter().enumerate() {
        assert!((m[(i, i)] - oracle_taylor_log(x, 7)).abs() <= 1e-15);
    }
}

#[test]
fn full_suite_passes() {
    let checks = suite::full_suite(2024);
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.to_string()).collect();
    assert!(failed.is_empty(), "{failed:#?}");
}

#[test]
fn series_log_agrees_inside_the_safe_radius() {
    let c = suite::taylor_agreement(200, 40, 0.6, 1e-8, 3);
    assert!(c.passed, "{c}");
}
