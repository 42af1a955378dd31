//! Dense symmetric linear algebra: eigendecomposition by cyclic Jacobi
//! rotations and the spectral matrix functions built on it (exponential,
//! principal logarithm), plus the truncated-series and element-wise
//! logarithm surrogates used as training backends.

use std::cmp::Ordering;

use crate::error::{MceError, Result};
use crate::matrix::{Matrix, SymMatrix};

/// Sweep cap for the Jacobi iteration.
pub const MAX_SWEEPS: usize = 100;
/// Convergence threshold: off-diagonal Frobenius norm relative to `‖m‖_F`.
pub const JACOBI_TOL: f64 = 1e-12;
/// Eigenvalues at or below this violate the principal-log precondition.
pub const EPS_PD: f64 = 1e-12;

/// Components smaller than this are treated as zero when fixing eigenvector signs.
const SIGN_FLOOR: f64 = 1e-12;

/// Eigen-decomposition `m = U·diag(λ)·Uᵀ`.
///
/// Eigenvalues are in descending order and column `i` of `eigenvectors`
/// belongs to `eigenvalues[i]`. Each eigenvector has its first non-negligible
/// component positive, and eigenvectors sharing an eigenvalue are ordered
/// lexicographically (largest first), so identical inputs always produce
/// identical output.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `U·diag(f(λ))·Uᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.dim();
        let u = &self.eigenvectors;
        let fl: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for (k, &w) in fl.iter().enumerate() {
                    s += u[(i, k)] * w * u[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        SymMatrix::symmetrize(out)
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.map(|l| l)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(f64::NAN)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn eig_sym(m: &SymMatrix) -> Result<Spectrum> {
    let n = m.dim();
    let mut a = m.as_matrix().clone();
    let mut v = Matrix::identity(n);
    let target = JACOBI_TOL * m.frobenius();

    // A rotation is skipped only once `a_pq` is negligible relative to its
    // diagonal pair, which keeps small eigenvalues accurate to high relative
    // precision. Sweeping stops when a full sweep rotates nothing.
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::EPSILON * (a[(p, p)] * a[(q, q)]).abs().sqrt() {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
                rotated = true;
            }
        }
        if !rotated {
            break;
        }
    }
    let off = off_diagonal_norm(&a);
    if !(off <= target) {
        return Err(MceError::NoConvergence { sweeps: MAX_SWEEPS, off_diagonal: off });
    }

    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|k| {
            let mut col = v.column(k);
            if let Some(first) = col.iter().find(|x| x.abs() > SIGN_FLOOR) {
                if *first < 0.0 {
                    col.iter_mut().for_each(|x| *x = -*x);
                }
            }
            (a[(k, k)], col)
        })
        .collect();

    let scale = pairs.iter().fold(1.0_f64, |s, (l, _)| s.max(l.abs()));
    let tie = 64.0 * f64::EPSILON * scale;
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    // Reorder runs of (numerically) equal eigenvalues by descending lexicographic eigenvector.
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (pairs[end - 1].0 - pairs[end].0).abs() <= tie {
            end += 1;
        }
        if end - start > 1 {
            pairs[start..end].sort_by(|x, y| lex_desc(&x.1, &y.1));
        }
        start = end;
    }

    let mut eigenvectors = Matrix::zeros(n, n);
    let mut eigenvalues = Vec::with_capacity(n);
    for (k, (l, col)) in pairs.into_iter().enumerate() {
        eigenvalues.push(l);
        for (i, x) in col.into_iter().enumerate() {
            eigenvectors[(i, k)] = x;
        }
    }
    Ok(Spectrum { eigenvalues, eigenvectors })
}

fn lex_desc(x: &[f64], y: &[f64]) -> Ordering {
    for (a, b) in x.iter().zip(y) {
        match b.total_cmp(a) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Applies `a ← Jᵀ a J`, `v ← v J` for the plane rotation in `(p, q)`.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Fails with [`MceError::NotPositiveDefinite`] when the smallest eigenvalue is `<= EPS_PD`.
pub fn require_positive_definite(spec: &Spectrum) -> Result<()> {
    let min = spec.min_eigenvalue();
    if !(min > EPS_PD) {
        return Err(MceError::NotPositiveDefinite { eigenvalue: min, threshold: EPS_PD });
    }
    Ok(())
}

/// Principal logarithm of a symmetric positive definite matrix.
pub fn log_principal(m: &SymMatrix) -> Result<SymMatrix> {
    let spec = eig_sym(m)?;
    require_positive_definite(&spec)?;
    Ok(spec.map(f64::ln))
}

/// Matrix exponential of a symmetric matrix.
pub fn exp_sym(m: &SymMatrix) -> Result<SymMatrix> {
    Ok(eig_sym(m)?.map(f64::exp))
}

/// Truncated Mercator series `Σ_{k=1..order} (-1)^{k+1} (m - I)^k / k`.
///
/// Evaluated by Horner's rule. No radius check is made: outside
/// `‖m - I‖ < 1` this is a polynomial surrogate, not a logarithm.
pub fn log_taylor(m: &SymMatrix, order: usize) -> SymMatrix {
    let n = m.dim();
    assert!(order >= 1, "Taylor order must be at least 1");
    let x = m.add_identity(-1.0).into_matrix();
    let coef = |k: usize| if k % 2 == 1 { 1.0 / k as f64 } else { -1.0 / k as f64 };
    let mut acc = Matrix::identity(n).scale(coef(order));
    for k in (1..order).rev() {
        acc = x.matmul(&acc);
        for i in 0..n {
            acc[(i, i)] += coef(k);
        }
    }
    SymMatrix::symmetrize(x.matmul(&acc))
}

/// Entry-wise `log(max(m_ij, eps))`. Not a matrix function; kept as an
/// ablation surrogate for the relation loss.
pub fn log_elementwise(m: &SymMatrix, eps: f64) -> SymMatrix {
    assert!(eps > 0.0, "eps must be positive");
    let mut out = m.as_matrix().clone();
    out.as_mut_slice().iter_mut().for_each(|x| *x = x.max(eps).ln());
    SymMatrix::symmetrize(out)
}

pub fn trace(m: &SymMatrix) -> f64 {
    m.trace()
}

pub fn frobenius(m: &SymMatrix) -> f64 {
    m.frobenius()
}

/// `‖a - b‖_F / max(1, ‖b‖_F)`.
pub fn rel_frobenius(a: &SymMatrix, b: &SymMatrix) -> f64 {
    a.sub(b).frobenius() / b.frobenius().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn identity_eigendecomposition_is_identity() {
        let s = eig_sym(&SymMatrix::identity(3)).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 1.0, 1.0]);
        assert_eq!(s.eigenvectors, Matrix::identity(3));
    }

    #[test]
    fn diagonal_input_gives_permutation() {
        let s = eig_sym(&SymMatrix::from_diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(s.eigenvalues, vec![3.0, 2.0, 1.0]);
        let expected = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]);
        assert_eq!(s.eigenvectors, expected);
    }

    #[test]
    fn zero_matrix_converges_immediately() {
        let s = eig_sym(&SymMatrix::zeros(4)).unwrap();
        assert!(s.eigenvalues.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn two_by_two_closed_form() {
        // [[2,1],[1,2]] has eigenpairs 3:(1,1)/√2 and 1:(1,-1)/√2.
        let s = eig_sym(&SymMatrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]])).unwrap();
        assert!((s.eigenvalues[0] - 3.0).abs() < 1e-14);
        assert!((s.eigenvalues[1] - 1.0).abs() < 1e-14);
        let r = 0.5_f64.sqrt();
        assert!((s.eigenvectors[(0, 0)] - r).abs() < 1e-14);
        assert!((s.eigenvectors[(1, 0)] - r).abs() < 1e-14);
        assert!((s.eigenvectors[(0, 1)] - r).abs() < 1e-14);
        assert!((s.eigenvectors[(1, 1)] + r).abs() < 1e-14);
    }

    #[test]
    fn log_of_identity_is_zero() {
        let l = log_principal(&SymMatrix::identity(5)).unwrap();
        assert_eq!(l.frobenius(), 0.0);
    }

    #[test]
    fn log_of_diagonal() {
        let l = log_principal(&SymMatrix::from_diag(&[E, E * E])).unwrap();
        assert!((l[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((l[(1, 1)] - 2.0).abs() < 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
    }

    #[test]
    fn log_rejects_singular_and_indefinite() {
        let err = log_principal(&SymMatrix::from_diag(&[1.0, 0.0])).unwrap_err();
        assert!(matches!(err, MceError::NotPositiveDefinite { eigenvalue, .. } if eigenvalue == 0.0));
        let err = log_principal(&SymMatrix::from_diag(&[1.0, -0.5])).unwrap_err();
        assert!(matches!(err, MceError::NotPositiveDefinite { eigenvalue, .. } if eigenvalue == -0.5));
        assert!(log_principal(&SymMatrix::from_diag(&[1.0, 1e-12])).is_err());
        assert!(log_principal(&SymMatrix::from_diag(&[1.0, 2e-12])).is_ok());
    }

    #[test]
    fn exp_of_zero_and_diagonal() {
        assert_eq!(exp_sym(&SymMatrix::zeros(3)).unwrap(), SymMatrix::identity(3));
        let e = exp_sym(&SymMatrix::from_diag(&[1.0, 2.0])).unwrap();
        assert!((e[(0, 0)] - E).abs() < 1e-15);
        assert!((e[(1, 1)] - E * E).abs() < 1e-14);
    }

    #[test]
    fn taylor_of_identity_is_zero() {
        for order in [1, 2, 3, 7] {
            assert_eq!(log_taylor(&SymMatrix::identity(3), order).frobenius(), 0.0);
        }
    }

    #[test]
    fn taylor_order_three_on_diagonal() {
        let scalar = |x: f64| (1..=3).map(|k| (-1f64).powi(k + 1) * x.powi(k) / k as f64).sum::<f64>();
        let l = log_taylor(&SymMatrix::from_diag(&[1.5, 0.5]), 3);
        assert!((l[(0, 0)] - scalar(0.5)).abs() < 1e-15);
        assert!((l[(1, 1)] - scalar(-0.5)).abs() < 1e-15);
        assert!((l[(0, 0)] - (0.5 - 0.125 + 0.125 / 3.0)).abs() < 1e-15);
        assert!((l[(1, 1)] - (-0.5 - 0.125 - 0.125 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn elementwise_log_definition() {
        let l = log_elementwise(&SymMatrix::identity(2), 1e-12);
        assert_eq!(l[(0, 0)], 0.0);
        assert_eq!(l[(0, 1)], (1e-12f64).ln());
        let all_e = SymMatrix::from_rows(&[[E, E], [E, E]]);
        let l = log_elementwise(&all_e, 1e-12);
        assert!(l.as_matrix().as_slice().iter().all(|&x| (x - 1.0).abs() < 1e-15));
    }
}
