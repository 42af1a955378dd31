//! Prediction batches and their in-batch relation (Gram) matrices.

use crate::error::{MceError, Result};
use crate::matrix::{Matrix, SymMatrix};

/// Row-sum tolerance for probability rows.
pub const ROW_SUM_TOL: f64 = 1e-8;
/// Entry-wise tolerance for comparing Gram matrices.
pub const GRAM_TOL: f64 = 1e-10;

/// `b × k` matrix whose rows are probability vectors over `k` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBatch {
    rows: Matrix,
}

impl PredictionBatch {
    pub fn new(rows: Matrix) -> Result<Self> {
        if rows.rows() == 0 || rows.cols() == 0 {
            return Err(MceError::InvalidProbability("empty prediction batch".into()));
        }
        for i in 0..rows.rows() {
            let r = rows.row(i);
            if r.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(MceError::InvalidProbability(format!("row {i} has a negative or non-finite entry")));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(MceError::InvalidProbability(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { rows })
    }

    /// One-hot batch from class indices.
    pub fn one_hot(labels: &[usize], k: usize) -> Result<Self> {
        let mut m = Matrix::zeros(labels.len(), k);
        for (i, &c) in labels.iter().enumerate() {
            if c >= k {
                return Err(MceError::Contract(format!("label {c} out of range for {k} classes")));
            }
            m[(i, c)] = 1.0;
        }
        Self::new(m)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows))
    }

    pub fn batch_size(&self) -> usize {
        self.rows.rows()
    }

    pub fn classes(&self) -> usize {
        self.rows.cols()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.rows.row(i)
    }

    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        Self::new(self.rows.select_rows(idx))
    }

    /// Index of the largest entry of each row (first one on ties).
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.batch_size())
            .map(|i| {
                let r = self.row(i);
                let mut best = 0;
                for j in 1..r.len() {
                    if r[j] > r[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    pub fn is_one_hot(&self) -> bool {
        (0..self.batch_size()).all(|i| {
            let r = self.row(i);
            r.iter().filter(|&&x| x == 1.0).count() == 1 && r.iter().all(|&x| x == 0.0 || x == 1.0)
        })
    }
}

/// `R(A) = A·Aᵀ`.
pub fn relation(a: &PredictionBatch) -> SymMatrix {
    let m = a.as_matrix();
    SymMatrix::new(m.matmul_t(m)).expect("Gram matrix of finite rows is square and finite")
}

/// Batch-normalized relation `(1/b)·A·Aᵀ`. Unit trace exactly when every row is one-hot.
pub fn relation_normalized(a: &PredictionBatch) -> SymMatrix {
    relation(a).scale(1.0 / a.batch_size() as f64)
}

/// True iff `Z₁Z₁ᵀ` and `Z₂Z₂ᵀ` agree entry-wise within [`GRAM_TOL`].
///
/// `z1` must be one-hot. Whenever this returns true every row of `z2` is
/// one-hot and partitions the batch the same way `z1` does.
pub fn check_one_hot_equality(z1: &PredictionBatch, z2: &PredictionBatch) -> Result<bool> {
    if !z1.is_one_hot() {
        return Err(MceError::Contract("reference batch is not one-hot".into()));
    }
    if z1.batch_size() != z2.batch_size() {
        return Ok(false);
    }
    let g1 = relation(z1);
    let g2 = relation(z2);
    Ok(g1.sub(&g2).as_matrix().max_abs() <= GRAM_TOL)
}
