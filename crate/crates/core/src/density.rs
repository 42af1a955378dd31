//! Density matrices (symmetric, PSD, unit trace), their constructions from
//! probability vectors and Gram products, and von Neumann entropy.

use crate::error::{MceError, Result};
use crate::matrix::{Matrix, SymMatrix};
use crate::spectral::eig_sym;

/// Slack allowed below zero for the smallest eigenvalue.
pub const PSD_SLACK: f64 = 1e-10;
/// Allowed deviation of the trace from one.
pub const TRACE_TOL: f64 = 1e-10;
/// Allowed deviation from orthonormality for bases and orthogonal maps.
pub const BASIS_TOL: f64 = 1e-10;

/// A probability vector over `k` outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(MceError::InvalidProbability("empty vector".into()));
        }
        if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(MceError::InvalidProbability(format!("entry {x} is negative or non-finite")));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > TRACE_TOL {
            return Err(MceError::InvalidProbability(format!("entries sum to {s}")));
        }
        Ok(Self(p))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Symmetric positive semi-definite matrix with unit trace. Validated once, at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    inner: SymMatrix,
}

impl DensityMatrix {
    pub fn new(m: SymMatrix) -> Result<Self> {
        let tr = m.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(MceError::InvalidDensity(format!("trace is {tr}")));
        }
        let min = eig_sym(&m)?.min_eigenvalue();
        if min < -PSD_SLACK {
            return Err(MceError::InvalidDensity(format!("eigenvalue {min:e} is negative")));
        }
        Ok(Self { inner: m })
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.inner
    }

    pub fn into_sym(self) -> SymMatrix {
        self.inner
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Eigenvalues, descending, with the numerical slack in `(-1e-10, 0]` clamped to zero.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(eig_sym(&self.inner)?.eigenvalues.into_iter().map(|l| l.max(0.0)).collect())
    }
}

fn normalized_gram(g: Matrix) -> Result<DensityMatrix> {
    let g = SymMatrix::new(g)?;
    let tr = g.trace();
    if tr <= 0.0 {
        return Err(MceError::Degenerate("Gram matrix of an all-zero input".into()));
    }
    DensityMatrix::new(g.scale(1.0 / tr))
}

/// `A·Aᵀ / tr(A·Aᵀ)` for a nonzero `b × k` matrix.
pub fn from_gram_rows(a: &Matrix) -> Result<DensityMatrix> {
    normalized_gram(a.matmul_t(a))
}

/// `Aᵀ·A / tr(Aᵀ·A)` for a nonzero `b × k` matrix.
pub fn from_gram_cols(a: &Matrix) -> Result<DensityMatrix> {
    normalized_gram(a.t_matmul(a))
}

/// The diagonal (mixed-state) density matrix `diag(p)`.
pub fn diag_density(p: &ProbVector) -> DensityMatrix {
    DensityMatrix { inner: SymMatrix::from_diag(p.as_slice()) }
}

fn check_orthogonal(u: &Matrix) -> Result<()> {
    if u.rows() != u.cols() {
        return Err(MceError::Basis { deviation: f64::INFINITY });
    }
    let deviation = u.orthonormality_defect().max(u.transpose().orthonormality_defect());
    if !(deviation <= BASIS_TOL) {
        return Err(MceError::Basis { deviation });
    }
    Ok(())
}

/// The pure state `ψψᵀ` with `ψ = Σ √p_i x_i`, where `x_i` are the columns of `basis`.
pub fn pure_density(p: &ProbVector, basis: &Matrix) -> Result<DensityMatrix> {
    check_orthogonal(basis)?;
    if basis.cols() != p.len() {
        return Err(MceError::Contract(format!("basis has {} columns for {} outcomes", basis.cols(), p.len())));
    }
    let n = basis.rows();
    let mut psi = vec![0.0; n];
    for (j, &pj) in p.as_slice().iter().enumerate() {
        let w = pj.sqrt();
        for (i, v) in psi.iter_mut().enumerate() {
            *v += w * basis[(i, j)];
        }
    }
    let outer = Matrix::from_vec(n, 1, psi).expect("column shape");
    Ok(DensityMatrix { inner: SymMatrix::symmetrize(outer.matmul_t(&outer)) })
}

/// The distribution `p_i = x_iᵀ d x_i` induced on the columns of `basis`.
pub fn induced_prob(d: &DensityMatrix, basis: &Matrix) -> Result<ProbVector> {
    check_orthogonal(basis)?;
    if basis.rows() != d.dim() {
        return Err(MceError::Contract("basis dimension does not match density matrix".into()));
    }
    let conj = d.as_sym().conjugate_t(basis);
    // Entries may dip a hair below zero for PSD-with-slack inputs.
    let p = conj.diagonal().into_iter().map(|x| x.max(0.0)).collect();
    ProbVector::new(p)
}

/// `-Σ λ log λ` over the eigenvalues, natural log, with `0·log 0 = 0`.
pub fn von_neumann_entropy(d: &DensityMatrix) -> Result<f64> {
    Ok(shannon(&d.eigenvalues()?))
}

pub(crate) fn shannon(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// True iff exactly one eigenvalue is within `tol` of one and the rest within `tol` of zero.
pub fn is_pure(d: &DensityMatrix, tol: f64) -> Result<bool> {
    let eig = d.eigenvalues()?;
    let ones = eig.iter().filter(|&&l| (l - 1.0).abs() <= tol).count();
    let zeros = eig.iter().filter(|&&l| l.abs() <= tol).count();
    Ok(ones == 1 && zeros == eig.len() - 1)
}

/// `U·d·Uᵀ` for an orthogonal `U`.
pub fn unitary_conjugate(d: &DensityMatrix, u: &Matrix) -> Result<DensityMatrix> {
    check_orthogonal(u)?;
    if u.rows() != d.dim() {
        return Err(MceError::Contract("orthogonal map dimension does not match".into()));
    }
    DensityMatrix::new(d.as_sym().conjugate(u))
}
