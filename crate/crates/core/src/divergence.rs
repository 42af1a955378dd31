//! Matrix cross-entropy and its relatives.
//!
//! For PSD `P`, `Q` the matrix cross-entropy is `tr(-P log Q + Q)`. The
//! logarithm is pluggable ([`LogBackend`]) and is always applied to the
//! ridged argument `Q + λI`; the linear `tr(Q)` term uses the unridged `Q`.
//! Where `log P` appears (relative entropy, Bregman divergence) the ridge is
//! applied to `P` as well.

use crate::density::{shannon, DensityMatrix};
use crate::error::{MceError, Result};
use crate::matrix::{Matrix, SymMatrix};
use crate::spectral::{eig_sym, log_elementwise, log_taylor, require_positive_definite, Spectrum};

/// Default clamp for the element-wise surrogate.
pub const ELEMENTWISE_EPS: f64 = 1e-8;
/// Default ridge added before taking logarithms.
pub const DEFAULT_RIDGE: f64 = 1e-6;
/// Default truncation order of the series backend.
pub const DEFAULT_TAYLOR_ORDER: usize = 3;

/// How `log Q` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogBackend {
    /// Spectral principal logarithm. Requires `Q + λI` positive definite.
    Principal,
    /// Truncated series around the identity, of the given order.
    Taylor(usize),
    /// Entry-wise `log(max(q_ij, eps))`.
    ElementWise(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MceConfig {
    pub log_backend: LogBackend,
    pub ridge_lambda: f64,
}

impl Default for MceConfig {
    fn default() -> Self {
        Self { log_backend: LogBackend::Taylor(DEFAULT_TAYLOR_ORDER), ridge_lambda: DEFAULT_RIDGE }
    }
}

impl MceConfig {
    pub fn new(log_backend: LogBackend, ridge_lambda: f64) -> Result<Self> {
        let cfg = Self { log_backend, ridge_lambda };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn principal(ridge_lambda: f64) -> Self {
        Self { log_backend: LogBackend::Principal, ridge_lambda }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge_lambda >= 0.0) || !self.ridge_lambda.is_finite() {
            return Err(MceError::Contract(format!("ridge must be >= 0, got {}", self.ridge_lambda)));
        }
        match self.log_backend {
            LogBackend::Taylor(0) => Err(MceError::Contract("Taylor order must be >= 1".into())),
            LogBackend::ElementWise(eps) if !(eps > 0.0) => {
                Err(MceError::Contract(format!("element-wise eps must be > 0, got {eps}")))
            }
            _ => Ok(()),
        }
    }

    /// `log_backend(m + λI)`.
    pub fn log_ridged(&self, m: &SymMatrix) -> Result<SymMatrix> {
        let ridged = m.add_identity(self.ridge_lambda);
        match self.log_backend {
            LogBackend::Principal => {
                let spec = eig_sym(&ridged)?;
                require_positive_definite(&spec)?;
                Ok(spec.map(f64::ln))
            }
            LogBackend::Taylor(order) => Ok(log_taylor(&ridged, order)),
            LogBackend::ElementWise(eps) => Ok(log_elementwise(&ridged, eps)),
        }
    }
}

fn check_dims(p: &SymMatrix, q: &SymMatrix) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(MceError::Contract(format!("dimension mismatch: {} vs {}", p.dim(), q.dim())));
    }
    Ok(())
}

fn finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(MceError::Domain(format!("{what} evaluated to {x}")))
    }
}

/// `tr(-P log(Q + λI)) + tr(Q)` for PSD `P`, `Q`.
pub fn mce(p: &SymMatrix, q: &SymMatrix, cfg: &MceConfig) -> Result<f64> {
    check_dims(p, q)?;
    let log_q = cfg.log_ridged(q)?;
    finite(-p.trace_product(&log_q) + q.trace(), "matrix cross-entropy")
}

/// Unit-trace form `tr(-P log(Q + λI)) + 1`.
pub fn mce_normalized(p: &DensityMatrix, q: &DensityMatrix, cfg: &MceConfig) -> Result<f64> {
    check_dims(p.as_sym(), q.as_sym())?;
    let log_q = cfg.log_ridged(q.as_sym())?;
    finite(-p.as_sym().trace_product(&log_q) + 1.0, "matrix cross-entropy")
}

/// Matrix relative entropy `tr(P log P - P log Q)`, ridge applied to both logs.
pub fn mre(p: &DensityMatrix, q: &DensityMatrix, cfg: &MceConfig) -> Result<f64> {
    let (p, q) = (p.as_sym(), q.as_sym());
    check_dims(p, q)?;
    let log_p = cfg.log_ridged(p)?;
    let log_q = cfg.log_ridged(q)?;
    finite(p.trace_product(&log_p) - p.trace_product(&log_q), "matrix relative entropy")
}

/// Matrix Bregman divergence generated by negative von Neumann entropy:
/// `tr(P log P - P log Q - P + Q)`.
pub fn matrix_bregman(p: &SymMatrix, q: &SymMatrix, cfg: &MceConfig) -> Result<f64> {
    check_dims(p, q)?;
    let log_p = cfg.log_ridged(p)?;
    let log_q = cfg.log_ridged(q)?;
    finite(p.trace_product(&log_p) - p.trace_product(&log_q) - p.trace() + q.trace(), "matrix Bregman divergence")
}

/// Mean scalar cross-entropy written as a matrix cross-entropy between
/// `P = I_b / b` and the diagonal `Q = I_b ∘ (M Nᵀ)`.
///
/// `mu` holds one-hot rows, `nu` strictly positive probability rows. The
/// matrix route is cross-checked against `-(1/b) Σ log ν_i[class(i)]`.
pub fn scalar_ce_bridge(mu: &Matrix, nu: &Matrix) -> Result<f64> {
    if mu.shape() != nu.shape() || mu.rows() == 0 {
        return Err(MceError::Contract(format!("shape mismatch {:?} vs {:?}", mu.shape(), nu.shape())));
    }
    let b = mu.rows();
    let mut classes = Vec::with_capacity(b);
    for i in 0..b {
        let row = mu.row(i);
        let ones: Vec<usize> = (0..row.len()).filter(|&j| row[j] == 1.0).collect();
        if ones.len() != 1 || row.iter().any(|&x| x != 0.0 && x != 1.0) {
            return Err(MceError::Contract(format!("row {i} of the target is not one-hot")));
        }
        classes.push(ones[0]);
    }
    let hadamard = mu.matmul_t(nu);
    let diag: Vec<f64> = (0..b).map(|i| hadamard[(i, i)]).collect();
    if let Some((i, x)) = diag.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
        return Err(MceError::Domain(format!("diagonal entry {i} of M Nᵀ is {x}")));
    }
    let p = SymMatrix::identity(b).scale(1.0 / b as f64);
    let q = SymMatrix::from_diag(&diag);
    let log_q = crate::spectral::log_principal(&q)?;
    let via_matrix = -p.trace_product(&log_q);

    let direct = -classes.iter().enumerate().map(|(i, &c)| nu[(i, c)].ln()).sum::<f64>() / b as f64;
    if (via_matrix - direct).abs() > 1e-12 * direct.abs().max(1.0) {
        return Err(MceError::Contract(format!("matrix route {via_matrix} disagrees with scalar route {direct}")));
    }
    Ok(via_matrix)
}

/// `-log tr(PQ) + tr(Q)`, a lower bound on `MCE(P, Q)` for density `P` and PSD `Q`.
pub fn mce_lower_bound(p: &DensityMatrix, q: &SymMatrix) -> Result<f64> {
    check_dims(p.as_sym(), q)?;
    let tpq = p.as_sym().trace_product(q);
    if !(tpq > 0.0) {
        return Err(MceError::Domain(format!("tr(PQ) = {tpq} is not positive")));
    }
    Ok(-tpq.ln() + q.trace())
}

/// MCE evaluated through both eigenbases:
/// `-Σ_{i,j} (v_iᵀ u_j)² λ_i log θ_j + Σ_j θ_j` with `P = VΛVᵀ`, `Q = UΘUᵀ`.
pub fn mce_pca_form(p: &SymMatrix, q: &SymMatrix) -> Result<f64> {
    check_dims(p, q)?;
    let sp = eig_sym(p)?;
    let sq = eig_sym(q)?;
    require_positive_definite(&sq)?;
    let overlap = sp.eigenvectors.t_matmul(&sq.eigenvectors);
    let log_theta: Vec<f64> = sq.eigenvalues.iter().map(|t| t.ln()).collect();
    let mut cross = 0.0;
    for (i, &lam) in sp.eigenvalues.iter().enumerate() {
        for (j, &lt) in log_theta.iter().enumerate() {
            let c = overlap[(i, j)];
            cross -= c * c * lam * lt;
        }
    }
    finite(cross + sq.eigenvalues.iter().sum::<f64>(), "matrix cross-entropy (eigen form)")
}

/// Gradient of [`mce`] with respect to `q`, as a symmetric matrix `G` with
/// `d mce = ⟨G, dQ⟩` for symmetric perturbations `dQ`. The ridge is held constant.
pub fn mce_grad_q(p: &SymMatrix, q: &SymMatrix, cfg: &MceConfig) -> Result<SymMatrix> {
    check_dims(p, q)?;
    let n = q.dim();
    let ridged = q.add_identity(cfg.ridge_lambda);
    let grad_log_term = match cfg.log_backend {
        LogBackend::Principal => {
            let spec = eig_sym(&ridged)?;
            require_positive_definite(&spec)?;
            daleckii_krein_log(p, &spec)
        }
        LogBackend::Taylor(order) => taylor_trace_grad(p, &ridged.add_identity(-1.0), order),
        LogBackend::ElementWise(eps) => {
            let mut g = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let x = ridged[(i, j)];
                    if x > eps {
                        g[(i, j)] = p[(i, j)] / x;
                    }
                }
            }
            SymMatrix::symmetrize(g)
        }
    };
    // d/dQ tr(-P log Q) = -grad_log_term; d/dQ tr(Q) = I.
    Ok(grad_log_term.scale(-1.0).add_identity(1.0))
}

/// Fréchet derivative of `Q ↦ tr(P log Q)` at `Q = UΘUᵀ`:
/// `U[(UᵀPU) ∘ Γ]Uᵀ` with `Γ_ij = (log θ_i - log θ_j)/(θ_i - θ_j)`, `Γ_ii = 1/θ_i`.
fn daleckii_krein_log(p: &SymMatrix, spec: &Spectrum) -> SymMatrix {
    let u = &spec.eigenvectors;
    let theta = &spec.eigenvalues;
    let n = theta.len();
    let pt = p.conjugate_t(u);
    let mut h = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] = pt[(i, j)] * log_divided_difference(theta[i], theta[j]);
        }
    }
    SymMatrix::symmetrize(h).conjugate(u)
}

/// First divided difference of `ln` at `(a, b)`, stable as `a → b`.
fn log_divided_difference(a: f64, b: f64) -> f64 {
    let r = a / b - 1.0;
    if r.abs() < 1e-6 {
        (1.0 - r / 2.0 + r * r / 3.0) / b
    } else {
        r.ln_1p() / (a - b)
    }
}

/// Gradient of `tr(P · Σ_k c_k M^k)` with respect to `M`, `c_k = (-1)^{k+1}/k`:
/// `Σ_k c_k Σ_{j<k} M^{k-1-j} P M^j`.
fn taylor_trace_grad(p: &SymMatrix, m: &SymMatrix, order: usize) -> SymMatrix {
    let n = m.dim();
    let mm = m.as_matrix();
    let mut powers = vec![Matrix::identity(n)];
    for k in 1..order {
        powers.push(powers[k - 1].matmul(mm));
    }
    let mut g = Matrix::zeros(n, n);
    for k in 1..=order {
        let c = if k % 2 == 1 { 1.0 / k as f64 } else { -1.0 / k as f64 };
        for j in 0..k {
            let term = powers[k - 1 - j].matmul(p.as_matrix()).matmul(&powers[j]);
            g.add_assign_scaled(&term, c);
        }
    }
    SymMatrix::symmetrize(g)
}

/// Shannon entropy of a probability vector in nats. Exposed for scalar cross-checks.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    shannon(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{diag_density, ProbVector};

    fn principal0() -> MceConfig {
        MceConfig::principal(0.0)
    }

    #[test]
    fn config_validation() {
        assert!(MceConfig::new(LogBackend::Taylor(0), 0.0).is_err());
        assert!(MceConfig::new(LogBackend::ElementWise(0.0), 0.0).is_err());
        assert!(MceConfig::new(LogBackend::Principal, -1.0).is_err());
        assert!(MceConfig::new(LogBackend::Taylor(3), 1e-6).is_ok());
        assert_eq!(MceConfig::default(), MceConfig { log_backend: LogBackend::Taylor(3), ridge_lambda: 1e-6 });
    }

    #[test]
    fn uniform_pair_gives_log_b_plus_one() {
        for b in [2usize, 3, 5] {
            let u = SymMatrix::identity(b).scale(1.0 / b as f64);
            let oracle: f64 = (0..b).map(|_| -(1.0 / b as f64) * (1.0 / b as f64).ln() + 1.0 / b as f64).sum();
            let v = mce(&u, &u, &principal0()).unwrap();
            assert!((v - oracle).abs() < 1e-13);
            assert!((v - ((b as f64).ln() + 1.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn diagonal_pair_scalar_value() {
        let p = SymMatrix::from_diag(&[1.0, 0.0]);
        let q = SymMatrix::from_diag(&[0.9, 0.1]);
        let v = mce(&p, &q, &principal0()).unwrap();
        assert!((v - (-(0.9f64).ln() + 1.0)).abs() < 1e-14);
        assert!((v - 1.10536).abs() < 1e-5);
    }

    #[test]
    fn principal_rejects_singular_q() {
        let p = SymMatrix::from_diag(&[0.5, 0.5]);
        let q = SymMatrix::from_diag(&[1.0, 0.0]);
        assert!(matches!(mce(&p, &q, &principal0()), Err(MceError::NotPositiveDefinite { .. })));
        assert!(mce(&p, &q, &MceConfig::principal(1e-6)).is_ok());
    }

    #[test]
    fn normalized_uniform_and_pure() {
        let half = DensityMatrix::new(SymMatrix::identity(2).scale(0.5)).unwrap();
        let v = mce_normalized(&half, &half, &principal0()).unwrap();
        assert!((v - (2f64.ln() + 1.0)).abs() < 1e-14);

        // Pure P: ridge keeps the log finite; spectral oracle is
        // -(1)·log(1 + λ) + 1 since P puts all weight on the unit eigenvalue.
        let lambda = 1e-6;
        let pure = diag_density(&ProbVector::new(vec![1.0, 0.0]).unwrap());
        let v = mce_normalized(&pure, &pure, &MceConfig::principal(lambda)).unwrap();
        assert!((v - (1.0 - (1.0 + lambda).ln())).abs() < 1e-12);
        assert!((v - 1.0).abs() < 1e-3);
    }

    #[test]
    fn relative_entropy_of_diagonals_is_kl() {
        let p = [0.6f64, 0.3, 0.1];
        let q = [0.2f64, 0.5, 0.3];
        let dp = diag_density(&ProbVector::new(p.to_vec()).unwrap());
        let dq = diag_density(&ProbVector::new(q.to_vec()).unwrap());
        let kl: f64 = p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum();
        assert!((mre(&dp, &dq, &principal0()).unwrap() - kl).abs() < 1e-14);
        assert!(mre(&dp, &dp, &principal0()).unwrap().abs() < 1e-14);
    }

    #[test]
    fn bregman_of_diagonals_is_generalized_kl() {
        let p = [0.6f64, 1.3, 0.1];
        let q = [0.2f64, 0.5, 2.3];
        let gkl: f64 = p.iter().zip(&q).map(|(a, b)| a * (a / b).ln() - a + b).sum();
        let v = matrix_bregman(&SymMatrix::from_diag(&p), &SymMatrix::from_diag(&q), &principal0()).unwrap();
        assert!((v - gkl).abs() < 1e-14);
        let pm = SymMatrix::from_diag(&p);
        assert!(matrix_bregman(&pm, &pm, &principal0()).unwrap().abs() < 1e-14);
    }

    #[test]
    fn bridge_single_row() {
        let mu = Matrix::from_rows(&[[1.0, 0.0, 0.0]]);
        let nu = Matrix::from_rows(&[[0.5, 0.25, 0.25]]);
        assert!((scalar_ce_bridge(&mu, &nu).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn bridge_near_one_hot_prediction_is_zero() {
        let mu = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let nu = Matrix::from_rows(&[[1e-12, 1.0 - 1e-12], [1.0 - 1e-12, 1e-12]]);
        assert!(scalar_ce_bridge(&mu, &nu).unwrap().abs() < 1e-11);
    }

    #[test]
    fn bridge_two_rows_is_mean() {
        let mu = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        let nu = Matrix::from_rows(&[[0.7, 0.2, 0.1], [0.3, 0.3, 0.4]]);
        let oracle = -(0.7f64.ln() + 0.4f64.ln()) / 2.0;
        assert!((scalar_ce_bridge(&mu, &nu).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn bridge_errors() {
        let mu = Matrix::from_rows(&[[1.0, 0.0]]);
        assert!(matches!(scalar_ce_bridge(&mu, &Matrix::from_rows(&[[0.0, 1.0]])), Err(MceError::Domain(_))));
        let soft = Matrix::from_rows(&[[0.5, 0.5]]);
        assert!(matches!(scalar_ce_bridge(&soft, &soft), Err(MceError::Contract(_))));
    }

    #[test]
    fn lower_bound_saturates_on_uniform() {
        let half = DensityMatrix::new(SymMatrix::identity(2).scale(0.5)).unwrap();
        let bound = mce_lower_bound(&half, half.as_sym()).unwrap();
        assert!((bound - (2f64.ln() + 1.0)).abs() < 1e-14);
        let v = mce(half.as_sym(), half.as_sym(), &principal0()).unwrap();
        assert!((v - bound).abs() < 1e-13);
    }

    #[test]
    fn lower_bound_orthogonal_pure_states() {
        let p = diag_density(&ProbVector::new(vec![1.0, 0.0]).unwrap());
        let q = SymMatrix::from_diag(&[0.0, 1.0]);
        assert!(matches!(mce_lower_bound(&p, &q), Err(MceError::Domain(_))));
        let lambda = 1e-6;
        let qr = q.add_identity(lambda);
        let bound = mce_lower_bound(&p, &qr).unwrap();
        assert!(bound.is_finite());
        let v = mce(p.as_sym(), &qr, &MceConfig::principal(0.0)).unwrap();
        assert!(v >= bound - 1e-8);
    }

    #[test]
    fn pca_form_on_commuting_diagonals() {
        let p = [0.5f64, 0.3, 0.2, 0.0];
        let q = [0.1f64, 0.6, 0.2, 0.4];
        let oracle: f64 = p.iter().zip(&q).map(|(a, b)| -a * b.ln()).sum::<f64>() + q.iter().sum::<f64>();
        let v = mce_pca_form(&SymMatrix::from_diag(&p), &SymMatrix::from_diag(&q)).unwrap();
        assert!((v - oracle).abs() < 1e-14);
        assert!(mce_pca_form(&SymMatrix::from_diag(&p), &SymMatrix::from_diag(&p)).is_err());
    }

    #[test]
    fn diagonal_gradient_closed_form() {
        let p = [0.5, 0.3, 0.2];
        let q = [0.1, 0.6, 0.3];
        let g = mce_grad_q(&SymMatrix::from_diag(&p), &SymMatrix::from_diag(&q), &principal0()).unwrap();
        for i in 0..3 {
            assert!((g[(i, i)] - (1.0 - p[i] / q[i])).abs() < 1e-13);
            for j in 0..3 {
                if i != j {
                    assert!(g[(i, j)].abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn divided_difference_is_continuous() {
        let b = 0.37f64;
        for r in [1e-3, 1e-5, 1e-7, 1e-9] {
            let a = b * (1.0 + r);
            let exact = (a.ln() - b.ln()) / (a - b);
            assert!((log_divided_difference(a, b) - exact).abs() < 1e-6 * exact, "r={r}");
        }
        assert_eq!(log_divided_difference(b, b), 1.0 / b);
    }
}
