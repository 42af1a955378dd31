//! Property checks over randomly sampled inputs. Each function returns
//! named [`Check`]s carrying the worst observed error and its tolerance.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relmatch::datagen::{generate, DataKind, SyntheticSpec};
use relmatch::density::{
    diag_density, from_gram_rows, induced_prob, pure_density, unitary_conjugate, von_neumann_entropy, DensityMatrix,
    ProbVector,
};
use relmatch::divergence::{
    matrix_bregman, mce, mce_grad_q, mce_lower_bound, mce_normalized, mce_pca_form, mre, scalar_ce_bridge, LogBackend,
    MceConfig,
};
use relmatch::model::{softmax_backward, softmax_rows, Mlp, Upstream};
use relmatch::relation::{check_one_hot_equality, relation, relation_normalized, PredictionBatch};
use relmatch::spectral::{eig_sym, exp_sym, log_principal, log_taylor, rel_frobenius};
use relmatch::trainer::{
    pseudo_label, relation_mce, relationmatch_loss, train_step, CplMapping, CplState, TrainConfig, TrainState,
    UnlabeledBatch,
};
use relmatch::{Matrix, SymMatrix};

use crate::reference::{
    oracle_enumerate_simplex, oracle_fd_directional, oracle_log_det, oracle_mce_commuting, oracle_onehot_svd,
    oracle_scalar_ce, oracle_taylor_log, simplex_counts,
};
use crate::sample;
use crate::Check;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Tracks the largest error seen and whether any sample exceeded the tolerance.
struct Worst {
    name: &'static str,
    tol: f64,
    worst: f64,
    failures: usize,
    samples: usize,
    start: Instant,
    note: String,
}

impl Worst {
    fn new(name: &'static str, tol: f64) -> Self {
        Self { name, tol, worst: 0.0, failures: 0, samples: 0, start: Instant::now(), note: String::new() }
    }

    fn add(&mut self, err: f64) {
        self.samples += 1;
        if !(err <= self.tol) {
            self.failures += 1;
        }
        if err > self.worst || err.is_nan() {
            self.worst = err;
        }
    }

    fn fail(&mut self, why: String) {
        self.samples += 1;
        self.failures += 1;
        self.worst = f64::INFINITY;
        if self.note.is_empty() {
            self.note = why;
        }
    }

    fn finish(self) -> Check {
        let mut detail = format!("{} samples, {} over tolerance", self.samples, self.failures);
        if !self.note.is_empty() {
            detail.push_str("; ");
            detail.push_str(&self.note);
        }
        Check::new(
            self.name,
            self.failures == 0 && self.samples > 0,
            self.worst,
            self.tol,
            detail,
            self.start.elapsed(),
        )
    }
}

fn dim_for(i: usize, lo: usize, hi: usize) -> usize {
    lo + i % (hi - lo + 1)
}

/// Symmetric matrix with the given spectrum's logarithm: `O·diag(log e)·Oᵀ`.
fn log_of_spectrum(o: &Matrix, e: &[f64]) -> SymMatrix {
    let l: Vec<f64> = e.iter().map(|x| x.ln()).collect();
    sample::with_spectrum(o, &l)
}

/// Eigendecomposition accuracy and matrix exp/log round trips on random
/// SPD matrices of dimension 2–32 with condition number up to `cond`.
pub fn matrix_functions(n: usize, cond: f64, seed: u64) -> Vec<Check> {
    let mut r = rng(seed);
    let mut recon = Worst::new("eigendecomposition reconstructs m", 1e-10);
    let mut ortho = Worst::new("eigenvectors orthonormal", 1e-10);
    let mut exp_log = Worst::new("exp(log m) = m", 1e-8);
    let mut log_exp = Worst::new("log(exp a) = a", 1e-8);
    let mut logdet = Worst::new("tr log m = sum of log eigenvalues", 1e-8);
    for i in 0..n {
        let d = dim_for(i, 2, 32);
        let e = sample::spd_eigs(&mut r, d, cond);
        let o = sample::orthogonal(&mut r, d);
        let m = sample::with_spectrum(&o, &e);
        match eig_sym(&m) {
            Ok(s) => {
                recon.add(rel_frobenius(&s.reconstruct(), &m));
                let g = s.eigenvectors.t_matmul(&s.eigenvectors);
                ortho.add(g.sub(&Matrix::identity(d)).max_abs());
            }
            Err(err) => {
                recon.fail(err.to_string());
                ortho.fail(err.to_string());
            }
        }
        match log_principal(&m).and_then(|l| Ok((exp_sym(&l)?, l))) {
            Ok((back, l)) => {
                exp_log.add(rel_frobenius(&back, &m));
                logdet.add((l.trace() - oracle_log_det(&e)).abs());
            }
            Err(err) => {
                exp_log.fail(err.to_string());
                logdet.fail(err.to_string());
            }
        }
        let a = log_of_spectrum(&o, &e);
        match exp_sym(&a).and_then(|x| log_principal(&x)) {
            Ok(back) => log_exp.add(rel_frobenius(&back, &a)),
            Err(err) => log_exp.fail(err.to_string()),
        }
    }
    vec![recon.finish(), ortho.finish(), exp_log.finish(), log_exp.finish(), logdet.finish()]
}

/// Truncation error of the series log at orders 1, 3, 10, 40 never grows,
/// for spectra inside the unit ball around the identity.
pub fn taylor_monotone(n: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut w = Worst::new("series log error shrinks with order (orders 1, 3, 10, 40)", 1e-12);
    for i in 0..n {
        let d = dim_for(i, 2, 16);
        let (m, _) = sample::near_identity(&mut r, d, 0.99);
        let exact = match log_principal(&m) {
            Ok(l) => l,
            Err(e) => {
                w.fail(e.to_string());
                continue;
            }
        };
        let errs: Vec<f64> = [1, 3, 10, 40].iter().map(|&k| rel_frobenius(&log_taylor(&m, k), &exact)).collect();
        let increase = errs.windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max);
        w.add(increase);
    }
    w.finish()
}

/// Series log of the given order against the principal log, for spectra
/// `1 + δ` with `|δ| ≤ radius`. The detail reports the largest `|δ|`
/// bound under which every sample met the tolerance.
pub fn taylor_agreement(n: usize, order: usize, radius: f64, tol: f64, seed: u64) -> Check {
    let mut r = rng(seed);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_at = 0.0;
    let mut failures = 0;
    let mut safe = radius;
    let mut scalar_gap: f64 = 0.0;
    for i in 0..n {
        let d = dim_for(i, 2, 32);
        let (m, e) = sample::near_identity(&mut r, d, radius);
        let spread = e.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
        let err = match log_principal(&m) {
            Ok(exact) => rel_frobenius(&log_taylor(&m, order), &exact),
            Err(_) => f64::INFINITY,
        };
        // Per-eigenvalue truncation error along an independent scalar path.
        let scalar = e.iter().map(|&x| (oracle_taylor_log(x, order) - x.ln()).powi(2)).sum::<f64>().sqrt();
        scalar_gap = scalar_gap.max(scalar);
        if !(err <= tol) {
            failures += 1;
            safe = safe.min(spread);
        }
        if err > worst {
            worst = err;
            worst_at = spread;
        }
    }
    let detail = format!(
        "{n} samples, {failures} over tolerance; worst at max|δ| = {worst_at:.3}; scalar truncation oracle max {scalar_gap:.3e}; \
         all samples with max|δ| < {safe:.3} within tolerance"
    );
    Check::new(
        format!("series log order {order} matches principal log for |δ| ≤ {radius}"),
        failures == 0,
        worst,
        tol,
        detail,
        start.elapsed(),
    )
}

pub fn density_properties(n: usize, seed: u64) -> Vec<Check> {
    let mut r = rng(seed);
    let mut gram = Worst::new("normalized Gram products are density matrices", 0.0);
    let mut unitary = Worst::new("entropy invariant under orthogonal conjugation", 1e-8);
    let mut bounds = Worst::new("0 <= entropy <= log(dim)", 1e-8);
    let mut induced = Worst::new("diagonal and pure states induce p", 1e-12);
    let mut onehot = Worst::new("one-hot Gram spectrum is class counts / b", 1e-12);
    for i in 0..n {
        let b = dim_for(i, 1, 12);
        let k = dim_for(i / 3, 1, 6);
        let a = sample::positive_matrix(&mut r, b, k);
        match from_gram_rows(&a) {
            Ok(d) => {
                gram.add(0.0);
                let h = von_neumann_entropy(&d).unwrap_or(f64::NAN);
                bounds.add((-h).max(h - (b as f64).ln()).max(0.0));
                let u = sample::orthogonal(&mut r, b);
                match unitary_conjugate(&d, &u).and_then(|c| von_neumann_entropy(&c)) {
                    Ok(h2) => unitary.add((h - h2).abs()),
                    Err(e) => unitary.fail(e.to_string()),
                }
            }
            Err(e) => gram.fail(e.to_string()),
        }

        let p = ProbVector::new(sample::prob(&mut r, k, 0.0)).expect("valid");
        let std = Matrix::identity(k);
        let via_diag = induced_prob(&diag_density(&p), &std);
        let via_pure = pure_density(&p, &std).and_then(|d| induced_prob(&d, &std));
        match (via_diag, via_pure) {
            (Ok(x), Ok(y)) => {
                let e = x
                    .as_slice()
                    .iter()
                    .zip(y.as_slice())
                    .zip(p.as_slice())
                    .map(|((a, b), c)| (a - c).abs().max((b - c).abs()))
                    .fold(0.0, f64::max);
                induced.add(e);
            }
            (Err(e), _) | (_, Err(e)) => induced.fail(e.to_string()),
        }

        let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..k)).collect();
        let onehot_m = PredictionBatch::one_hot(&labels, k).expect("in range");
        match from_gram_rows(onehot_m.as_matrix()).and_then(|d| d.eigenvalues()) {
            Ok(eig) => {
                let sv = oracle_onehot_svd(&labels, b, k);
                let mut want: Vec<f64> = sv.iter().map(|s| s * s / b as f64).collect();
                want.resize(b, 0.0);
                onehot.add(eig.iter().zip(&want).map(|(a, w)| (a - w).abs()).fold(0.0, f64::max));
            }
            Err(e) => onehot.fail(e.to_string()),
        }
    }
    vec![gram.finish(), unitary.finish(), bounds.finish(), induced.finish(), onehot.finish()]
}

fn convex_weights(r: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    sample::prob(r, m, 0.0)
}

/// Divergence identities on random positive definite pairs of dimension 2–16.
pub fn divergence_identities(n: usize, lower_bound_pairs: usize, seed: u64) -> Vec<Check> {
    let mut r = rng(seed);
    let exact = MceConfig::principal(0.0);
    let mut decomposition = Worst::new("normalized MCE = entropy + relative entropy + 1", 1e-8);
    let mut pca = Worst::new("eigen-expansion form equals MCE", 1e-8);
    let mut bridge = Worst::new("scalar cross-entropy bridge", 1e-12);
    let mut unitary = Worst::new("MCE invariant under simultaneous conjugation", 1e-8);
    let mut convex = Worst::new("MCE convex in its second argument", 1e-10);
    let mut joint = Worst::new("relative entropy jointly convex", 1e-10);
    let mut linear = Worst::new("MCE linear in first argument for convex weights", 1e-10);
    let mut log_linear = Worst::new("tr(-P log Q) linear in P for arbitrary weights", 1e-10);
    let mut commuting = Worst::new("MCE on commuting inputs matches scalar oracle", 1e-12);
    let mut bregman = Worst::new("matrix Bregman divergence non-negative", 1e-10);
    for i in 0..n {
        let d = dim_for(i, 2, 16);
        let p = sample::density_pd(&mut r, d, 1e-3);
        let q = sample::density_pd(&mut r, d, 1e-3);
        let (ps, qs) = (p.as_sym(), q.as_sym());

        let dec = (|| -> relmatch::Result<f64> {
            let lhs = mce_normalized(&p, &q, &exact)?;
            let rhs = von_neumann_entropy(&p)? + mre(&p, &q, &exact)? + 1.0;
            Ok((lhs - rhs).abs())
        })();
        match dec {
            Ok(e) => decomposition.add(e),
            Err(e) => decomposition.fail(e.to_string()),
        }

        let qg = sample::psd_pd(&mut r, d, 1e-3);
        match (mce_pca_form(ps, &qg), mce(ps, &qg, &exact)) {
            (Ok(a), Ok(b)) => pca.add((a - b).abs()),
            (Err(e), _) | (_, Err(e)) => pca.fail(e.to_string()),
        }

        let u = sample::orthogonal(&mut r, d);
        match (mce(ps, &qg, &exact), mce(&ps.conjugate(&u), &qg.conjugate(&u), &exact)) {
            (Ok(a), Ok(b)) => unitary.add((a - b).abs()),
            (Err(e), _) | (_, Err(e)) => unitary.fail(e.to_string()),
        }

        let q2 = sample::psd_pd(&mut r, d, 1e-3);
        let t = (1 + i % 9) as f64 / 10.0;
        let mix = |a: &SymMatrix, b: &SymMatrix| a.scale(t).add(&b.scale(1.0 - t));
        let cv = (|| -> relmatch::Result<f64> {
            let lhs = mce(ps, &mix(&qg, &q2), &exact)?;
            let rhs = t * mce(ps, &qg, &exact)? + (1.0 - t) * mce(ps, &q2, &exact)?;
            Ok(lhs - rhs)
        })();
        match cv {
            Ok(e) => convex.add(e.max(0.0)),
            Err(e) => convex.fail(e.to_string()),
        }

        let p2 = sample::density_pd(&mut r, d, 1e-3);
        let q3 = sample::density_pd(&mut r, d, 1e-3);
        let jc = (|| -> relmatch::Result<f64> {
            let pm = DensityMatrix::new(mix(ps, p2.as_sym()))?;
            let qm = DensityMatrix::new(mix(qs, q3.as_sym()))?;
            let lhs = mre(&pm, &qm, &exact)?;
            let rhs = t * mre(&p, &q, &exact)? + (1.0 - t) * mre(&p2, &q3, &exact)?;
            Ok(lhs - rhs)
        })();
        match jc {
            Ok(e) => joint.add(e.max(0.0)),
            Err(e) => joint.fail(e.to_string()),
        }

        let parts: Vec<DensityMatrix> = (0..3).map(|_| sample::density_pd(&mut r, d, 1e-3)).collect();
        let a = convex_weights(&mut r, 3);
        let lin = (|| -> relmatch::Result<f64> {
            let mut combo = SymMatrix::zeros(d);
            let mut rhs = 0.0;
            for (w, pi) in a.iter().zip(&parts) {
                combo = combo.add(&pi.as_sym().scale(*w));
                rhs += w * mce(pi.as_sym(), &qg, &exact)?;
            }
            Ok((mce(&combo, &qg, &exact)? - rhs).abs())
        })();
        match lin {
            Ok(e) => linear.add(e),
            Err(e) => linear.fail(e.to_string()),
        }

        let pe = sample::prob(&mut r, d, 0.0);
        let qe: Vec<f64> = sample::prob(&mut r, d, 1e-3).into_iter().map(|x| 1.5 * x).collect();
        match mce(&SymMatrix::from_diag(&pe), &SymMatrix::from_diag(&qe), &exact) {
            Ok(v) => commuting.add((v - oracle_mce_commuting(&pe, &qe)).abs()),
            Err(e) => commuting.fail(e.to_string()),
        }

        match matrix_bregman(ps, &qg, &exact) {
            Ok(v) => bregman.add((-v).max(0.0)),
            Err(e) => bregman.fail(e.to_string()),
        }

        let b = dim_for(i, 1, 10);
        let k = dim_for(i / 2, 2, 6);
        let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..k)).collect();
        let rows = sample::prob_rows(&mut r, b, k, 1e-3);
        let mu = PredictionBatch::one_hot(&labels, k).expect("in range");
        let nu = Matrix::from_rows(&rows);
        match scalar_ce_bridge(mu.as_matrix(), &nu) {
            Ok(v) => bridge.add((v - oracle_scalar_ce(&labels, &rows)).abs()),
            Err(e) => bridge.fail(e.to_string()),
        }

        // Without the tr(Q) term the identity needs no constraint on the weights.
        let w: Vec<f64> = (0..parts.len()).map(|_| r.random_range(-2.0..2.0)).collect();
        let ll = (|| -> relmatch::Result<f64> {
            let mut combo = SymMatrix::zeros(d);
            let mut rhs = 0.0;
            for (wi, pi) in w.iter().zip(&parts) {
                combo = combo.add(&pi.as_sym().scale(*wi));
                rhs += wi * (mce(pi.as_sym(), &qg, &exact)? - qg.trace());
            }
            let lhs = mce(&combo, &qg, &exact)? - qg.trace();
            Ok((lhs - rhs).abs() / rhs.abs().max(1.0))
        })();
        match ll {
            Ok(e) => log_linear.add(e),
            Err(e) => log_linear.fail(e.to_string()),
        }
    }

    let mut lower = Worst::new("MCE lower bound -log tr(PQ) + tr(Q)", 1e-10);
    for i in 0..lower_bound_pairs {
        let d = dim_for(i, 2, 16);
        let p = sample::density_pd(&mut r, d, 1e-4);
        let q = sample::psd_pd(&mut r, d, 1e-4);
        match (mce(p.as_sym(), &q, &exact), mce_lower_bound(&p, &q)) {
            (Ok(v), Ok(lb)) => lower.add((lb - v).max(0.0)),
            (Err(e), _) | (_, Err(e)) => lower.fail(e.to_string()),
        }
    }

    vec![
        decomposition.finish(),
        pca.finish(),
        bridge.finish(),
        unitary.finish(),
        lower.finish(),
        convex.finish(),
        joint.finish(),
        linear.finish(),
        log_linear.finish(),
        commuting.finish(),
        bregman.finish(),
    ]
}

/// At `Q = P` the gradient vanishes, both in full and projected onto
/// trace-zero directions, and every perturbed `Q` scores strictly worse.
pub fn stationarity(n: usize, perturbed: usize, seed: u64) -> Vec<Check> {
    let mut r = rng(seed);
    let exact = MceConfig::principal(0.0);
    let mut full = Worst::new("full gradient vanishes at Q = P", 1e-6);
    let mut grad = Worst::new("tangent gradient vanishes at Q = P", 1e-6);
    let mut strict = Worst::new("MCE(P, P) < MCE(P, Q) for perturbed Q", 0.0);
    for i in 0..n {
        let d = dim_for(i, 2, 16);
        let p = sample::density_pd(&mut r, d, 1e-3);
        match mce_grad_q(p.as_sym(), p.as_sym(), &exact) {
            Ok(g) => {
                full.add(g.frobenius());
                let tangent = g.add_identity(-g.trace() / d as f64);
                grad.add(tangent.frobenius());
            }
            Err(e) => {
                full.fail(e.to_string());
                grad.fail(e.to_string());
            }
        }
    }
    for i in 0..perturbed {
        let d = dim_for(i, 2, 16);
        let p = sample::density_pd(&mut r, d, 1e-3);
        let other = sample::density_pd(&mut r, d, 1e-3);
        let s = 10f64.powf(r.random_range(-4.0..0.0));
        let q = p.as_sym().scale(1.0 - s).add(&other.as_sym().scale(s));
        match (mce(p.as_sym(), p.as_sym(), &exact), mce(p.as_sym(), &q, &exact)) {
            // Pass when the perturbed value is strictly larger; the error is the shortfall.
            (Ok(at_p), Ok(at_q)) => strict.add(if at_q > at_p { 0.0 } else { at_p - at_q + f64::MIN_POSITIVE }),
            (Err(e), _) | (_, Err(e)) => strict.fail(e.to_string()),
        }
    }
    vec![full.finish(), grad.finish(), strict.finish()]
}

fn backend_label(b: LogBackend) -> &'static str {
    match b {
        LogBackend::Principal => "principal",
        LogBackend::Taylor(_) => "taylor",
        LogBackend::ElementWise(_) => "elementwise",
    }
}

/// Directional finite differences of `Q ↦ mce(P, Q)` against the analytic gradient.
pub fn mce_gradient_fd(n: usize, seed: u64) -> Vec<Check> {
    let backends = [LogBackend::Principal, LogBackend::Taylor(3), LogBackend::ElementWise(1e-8)];
    backends
        .iter()
        .map(|&backend| {
            let mut r = rng(seed);
            let name = match backend {
                LogBackend::Principal => "MCE gradient matches finite differences (principal)",
                LogBackend::Taylor(_) => "MCE gradient matches finite differences (taylor)",
                LogBackend::ElementWise(_) => "MCE gradient matches finite differences (elementwise)",
            };
            let mut w = Worst::new(name, 1e-6);
            let cfg = MceConfig { log_backend: backend, ridge_lambda: 1e-6 };
            for i in 0..n {
                let d = dim_for(i, 2, 10);
                let p = sample::density_pd(&mut r, d, 1e-3).into_sym();
                // Relation-like Q: Gram of positive rows, so every entry is positive.
                let rows = sample::positive_matrix(&mut r, d, d + 2);
                let q = SymMatrix::new(rows.matmul_t(&rows).scale(0.5)).expect("finite");
                let mut dir = Matrix::zeros(d, d);
                for a in 0..d {
                    for b in a..d {
                        let v = sample::gaussian(&mut r);
                        dir[(a, b)] = v;
                        dir[(b, a)] = v;
                    }
                }
                let g = match mce_grad_q(&p, &q, &cfg) {
                    Ok(g) => g,
                    Err(e) => {
                        w.fail(e.to_string());
                        continue;
                    }
                };
                let analytic: f64 = g.as_matrix().as_slice().iter().zip(dir.as_slice()).map(|(a, b)| a * b).sum();
                let f = |x: &[f64]| {
                    let m = SymMatrix::new(Matrix::from_vec(d, d, x.to_vec()).expect("shape")).expect("finite");
                    mce(&p, &m, &cfg).unwrap_or(f64::NAN)
                };
                let fd = oracle_fd_directional(f, q.as_matrix().as_slice(), dir.as_slice(), 1e-6);
                w.add((analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1.0));
            }
            w.finish()
        })
        .collect()
}

/// Inputs and targets for an end-to-end gradient check.
pub struct GradientProblem {
    pub model: Mlp,
    pub x_sup: Matrix,
    pub y_sup: Vec<usize>,
    pub x_strong: Matrix,
    pub pseudo: PredictionBatch,
    pub mask: Vec<bool>,
}

/// A 3-layer ReLU network with `b = 8`, `k = 3`, inputs drawn until every
/// hidden pre-activation sits at least `margin` away from the ReLU kink.
pub fn gradient_problem(seed: u64, margin: f64) -> GradientProblem {
    let dims = [5, 7, 6, 3];
    let mut r = rng(seed);
    let model = Mlp::new(&dims, seed).expect("valid dims");
    let draw = |r: &mut ChaCha8Rng| loop {
        let data = (0..8 * dims[0]).map(|_| sample::gaussian(r)).collect();
        let x = Matrix::from_vec(8, dims[0], data).expect("shape");
        if cache_margin(&model, &x) >= margin {
            break x;
        }
    };
    let x_sup = draw(&mut r);
    let x_strong = draw(&mut r);
    let y_sup = (0..8).map(|i| i % 3).collect();
    let pseudo_labels: Vec<usize> = (0..8).map(|_| r.random_range(0..3)).collect();
    let pseudo = PredictionBatch::one_hot(&pseudo_labels, 3).expect("in range");
    let mask = vec![true, true, false, true, true, true, false, true];
    GradientProblem { model, x_sup, y_sup, x_strong, pseudo, mask }
}

/// Smallest absolute hidden pre-activation over the batch.
fn cache_margin(model: &Mlp, x: &Matrix) -> f64 {
    let mut h = x.clone();
    let mut margin = f64::INFINITY;
    let n = model.layers().len();
    for (l, layer) in model.layers().iter().enumerate() {
        let mut z = h.matmul_t(&layer.weights);
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        if l + 1 < n {
            margin = margin.min(z.as_slice().iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min));
            z.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
        }
        h = z;
    }
    margin
}

pub fn problem_loss(p: &GradientProblem, model: &Mlp, cfg: &TrainConfig) -> relmatch::Result<f64> {
    let sup = model.forward_cache(&p.x_sup)?;
    let strong = model.forward_cache(&p.x_strong)?;
    let u = UnlabeledBatch { pseudo: &p.pseudo, mask: &p.mask, strong_logits: strong.logits() };
    Ok(relationmatch_loss(&p.y_sup, sup.logits(), Some(u), cfg)?.0.total)
}

pub fn problem_gradient(p: &GradientProblem, cfg: &TrainConfig) -> relmatch::Result<Vec<f64>> {
    let sup = p.model.forward_cache(&p.x_sup)?;
    let strong = p.model.forward_cache(&p.x_strong)?;
    let u = UnlabeledBatch { pseudo: &p.pseudo, mask: &p.mask, strong_logits: strong.logits() };
    let (_, g) = relationmatch_loss(&p.y_sup, sup.logits(), Some(u), cfg)?;
    let mut grads = p.model.backward(&sup, &Upstream::Logits(g.sup_logits))?;
    if let Some(gs) = g.strong_logits {
        grads.add_assign(&p.model.backward(&strong, &Upstream::Logits(gs))?);
    }
    Ok(grads.to_flat())
}

/// Relative error used for per-parameter gradient comparison.
pub fn gradient_rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(GRAD_FLOOR)
}

/// Gradients below this magnitude are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Central differences (`h = 1e-4`) of the full loss with respect to every
/// network parameter, against backpropagation.
pub fn mlp_gradient_certification(backend: LogBackend, mu_u: f64, gamma_u: f64, gamma_s: f64, seed: u64) -> Check {
    let start = Instant::now();
    let name = format!(
        "end-to-end loss gradient, {} backend, mu_u={mu_u} gamma_u={gamma_u} gamma_s={gamma_s}",
        backend_label(backend)
    );
    let p = gradient_problem(seed, 1e-2);
    let cfg = TrainConfig {
        mu_u,
        gamma_u,
        gamma_s,
        mce: MceConfig { log_backend: backend, ridge_lambda: 1e-6 },
        ..TrainConfig::default()
    };
    let analytic = match problem_gradient(&p, &cfg) {
        Ok(g) => g,
        Err(e) => return Check::new(name, false, f64::INFINITY, 1e-3, e.to_string(), start.elapsed()),
    };
    let theta = p.model.params_flat();
    let mut probe = p.model.clone();
    let mut f = |x: &[f64]| {
        probe.set_params_flat(x).expect("length");
        problem_loss(&p, &probe, &cfg).unwrap_or(f64::NAN)
    };
    let mut worst: f64 = 0.0;
    let mut worst_idx = 0;
    let mut dir = vec![0.0; theta.len()];
    for i in 0..theta.len() {
        dir[i] = 1.0;
        let fd = oracle_fd_directional(&mut f, &theta, &dir, 1e-4);
        dir[i] = 0.0;
        let e = gradient_rel_err(analytic[i], fd);
        if e > worst || e.is_nan() {
            worst = e;
            worst_idx = i;
        }
    }
    let detail = format!(
        "{} parameters; worst at #{worst_idx} (analytic {:.6e}); |grad| floor {GRAD_FLOOR:e}",
        theta.len(),
        analytic[worst_idx]
    );
    Check::new(name, worst <= 1e-3, worst, 1e-3, detail, start.elapsed())
}

/// The three backends at the default loss weights and with the relational
/// terms amplified so they dominate the gradient.
pub fn gradient_certification(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    for backend in [LogBackend::Principal, LogBackend::Taylor(3), LogBackend::ElementWise(1e-8)] {
        out.push(mlp_gradient_certification(backend, 1.0, 3e-3, 0.0, seed));
        out.push(mlp_gradient_certification(backend, 1.0, 1.0, 0.5, seed + 1));
    }
    out
}

/// Exhaustive check that Gram equality with a one-hot batch forces one-hot
/// rows, over every batch whose rows lie on a `1/steps` simplex grid.
pub fn one_hot_preservation(b: usize, k: usize, steps: u32) -> Check {
    let start = Instant::now();
    let grid_f = oracle_enumerate_simplex(k, 1.0 / steps as f64);
    let grid_c = simplex_counts(k, steps);
    let g = grid_f.len();
    let total = g.pow(b as u32);
    let n2 = (steps * steps) as u64;
    let mut counterexamples = 0usize;
    let mut disagreements = 0usize;
    let mut matches = 0usize;
    let mut checked = 0usize;
    let mut error = None;

    let batches: Vec<(PredictionBatch, Vec<usize>)> = (0..total)
        .map(|mut code| {
            let mut idx = Vec::with_capacity(b);
            for _ in 0..b {
                idx.push(code % g);
                code /= g;
            }
            let rows: Vec<Vec<f64>> = idx.iter().map(|&i| grid_f[i].clone()).collect();
            (PredictionBatch::from_rows(&rows).expect("grid rows are probabilities"), idx)
        })
        .collect();

    for code in 0..k.pow(b as u32) {
        let mut c = code;
        let labels: Vec<usize> = (0..b)
            .map(|_| {
                let l = c % k;
                c /= k;
                l
            })
            .collect();
        let z1 = PredictionBatch::one_hot(&labels, k).expect("in range");
        for (z2, idx) in &batches {
            checked += 1;
            let primary = match check_one_hot_equality(&z1, z2) {
                Ok(v) => v,
                Err(e) => {
                    error.get_or_insert(e.to_string());
                    false
                }
            };
            // Integer oracle: n²·(Z₂Z₂ᵀ)_ij must equal n²·[y_i = y_j].
            let oracle = (0..b).all(|i| {
                (0..b).all(|j| {
                    let s: u64 = (0..k).map(|t| grid_c[idx[i]][t] as u64 * grid_c[idx[j]][t] as u64).sum();
                    s == if labels[i] == labels[j] { n2 } else { 0 }
                })
            });
            if primary != oracle {
                disagreements += 1;
            }
            if primary {
                matches += 1;
                if !z2.is_one_hot() {
                    counterexamples += 1;
                }
            }
        }
    }
    let passed = counterexamples == 0 && disagreements == 0 && error.is_none();
    let detail = format!(
        "b={b} k={k} grid 1/{steps}: {checked} pairs, {matches} Gram matches, {counterexamples} counterexamples, \
         {disagreements} disagreements with integer oracle{}",
        error.map(|e| format!("; error: {e}")).unwrap_or_default()
    );
    Check::new(
        format!("Gram equality with one-hot forces one-hot (b={b}, k={k})"),
        passed,
        (counterexamples + disagreements) as f64,
        0.0,
        detail,
        start.elapsed(),
    )
}

pub fn relation_properties(n: usize, seed: u64) -> Vec<Check> {
    let mut r = rng(seed);
    let mut psd = Worst::new("relation matrix is PSD", 1e-10);
    let mut blocks = Worst::new("one-hot relation is the class block indicator", 0.0);
    let mut density = Worst::new("normalized one-hot relation is a density matrix", 0.0);
    for i in 0..n {
        let b = dim_for(i, 1, 16);
        let k = dim_for(i / 4, 1, 6);
        let rows = sample::prob_rows(&mut r, b, k, 0.0);
        let a = PredictionBatch::from_rows(&rows).expect("valid rows");
        match eig_sym(&relation(&a)) {
            Ok(s) => psd.add((-s.min_eigenvalue()).max(0.0)),
            Err(e) => psd.fail(e.to_string()),
        }
        let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..k)).collect();
        let z = PredictionBatch::one_hot(&labels, k).expect("in range");
        let rel = relation(&z);
        let mut bad = 0.0;
        for x in 0..b {
            for y in 0..b {
                let want = if labels[x] == labels[y] { 1.0 } else { 0.0 };
                if rel[(x, y)] != want {
                    bad = 1.0;
                }
            }
        }
        blocks.add(bad);
        match DensityMatrix::new(relation_normalized(&z)) {
            Ok(_) => density.add(0.0),
            Err(e) => density.fail(e.to_string()),
        }
    }
    vec![psd.finish(), blocks.finish(), density.finish()]
}

fn small_data(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        kind: DataKind::GaussianBlobs,
        k: 3,
        d: 6,
        n_labeled: 6,
        n_unlabeled: 200,
        n_test: 60,
        class_separation: 4.0,
        noise: 1.0,
        seed,
    }
}

/// Invariants of the training step on a small problem.
pub fn trainer_properties(seed: u64) -> Vec<Check> {
    let mut decomposition = Worst::new("reported total = CE_sup + mu_u(CE_unsup + gamma_u MCE)", 1e-10);
    let mut masked = Worst::new("rows below threshold get zero gradient", 0.0);
    let mut saturated = Worst::new("no MCE gradient when strong = weak, one-hot saturated", 1e-6);
    let mut fixed = Worst::new("curriculum with equal counts reduces to fixed threshold", 0.0);
    let mut replay = Worst::new("replayed steps give bit-identical losses", 0.0);

    let data = generate(&small_data(seed)).expect("valid spec");
    let cfg = TrainConfig { total_steps: 30, hidden: vec![16], gamma_u: 0.5, seed, ..TrainConfig::default() };
    let run = || -> relmatch::Result<Vec<relmatch::trainer::LossBreakdown>> {
        let mut state = TrainState::new(&cfg, &data)?;
        (0..cfg.total_steps).map(|_| train_step(&mut state, &cfg, &data).map(|x| x.0)).collect()
    };
    match (run(), run()) {
        (Ok(a), Ok(b)) => {
            for l in &a {
                decomposition.add((l.total - (l.ce_sup + cfg.mu_u * (l.ce_unsup + cfg.gamma_u * l.mce))).abs());
            }
            replay.add(if a == b { 0.0 } else { 1.0 });
        }
        (Err(e), _) | (_, Err(e)) => {
            decomposition.fail(e.to_string());
            replay.fail(e.to_string());
        }
    }

    let mut r = rng(seed);
    for _ in 0..20 {
        let logits = Matrix::from_vec(8, 3, (0..24).map(|_| 3.0 * sample::gaussian(&mut r)).collect()).expect("shape");
        let sup = Matrix::from_vec(4, 3, (0..12).map(|_| sample::gaussian(&mut r)).collect()).expect("shape");
        let weak = PredictionBatch::new(softmax_rows(&logits)).expect("softmax rows");
        let (mask, pseudo) = pseudo_label(&weak, 0.9, None);
        let u = UnlabeledBatch { pseudo: &pseudo, mask: &mask, strong_logits: &logits };
        match relationmatch_loss(&[0, 1, 2, 0], &sup, Some(u), &cfg) {
            Ok((_, g)) => {
                let gs = g.strong_logits.expect("unlabeled branch active");
                let leak =
                    (0..8).filter(|&i| !mask[i]).flat_map(|i| gs.row(i).to_vec()).fold(0.0f64, |m, v| m.max(v.abs()));
                masked.add(leak);
            }
            Err(e) => masked.fail(e.to_string()),
        }

        // Saturated one-hot predictions used on both sides.
        let labels: Vec<usize> = (0..8).map(|_| r.random_range(0..3)).collect();
        let z = PredictionBatch::one_hot(&labels, 3).expect("in range");
        let sat_logits = z.as_matrix().scale(40.0);
        let probs = softmax_rows(&sat_logits);
        for backend in [LogBackend::Principal, LogBackend::Taylor(3), LogBackend::ElementWise(1e-8)] {
            let mcfg = MceConfig { log_backend: backend, ridge_lambda: 1e-6 };
            match relation_mce(&z, &probs, &mcfg) {
                Ok((_, dp)) => saturated.add(softmax_backward(&probs, &dp).frobenius()),
                Err(e) => saturated.fail(e.to_string()),
            }
        }

        let n = 30;
        let mut cpl = CplState::new(n, 3, CplMapping::Convex, false);
        let conf: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row = vec![0.01; 3];
                row[i % 3] = 0.98;
                row
            })
            .collect();
        let ids: Vec<usize> = (0..n).collect();
        cpl.update(&ids, &PredictionBatch::from_rows(&conf).expect("valid"), 0.95);
        let same = pseudo_label(&weak, 0.9, Some(&cpl)) == pseudo_label(&weak, 0.9, None);
        fixed.add(if same { 0.0 } else { 1.0 });
    }
    vec![decomposition.finish(), masked.finish(), saturated.finish(), fixed.finish(), replay.finish()]
}

/// Every module invariant at moderate sample sizes. Used by `relmatch verify`.
pub fn full_suite(seed: u64) -> Vec<Check> {
    let mut out = crate::goldens::check_all();
    out.extend(matrix_functions(200, 1e6, seed));
    out.push(taylor_monotone(200, seed + 1));
    out.extend(density_properties(200, seed + 2));
    out.extend(divergence_identities(200, 1000, seed + 3));
    out.extend(stationarity(100, 200, seed + 4));
    out.extend(mce_gradient_fd(50, seed + 5));
    out.extend(relation_properties(200, seed + 6));
    for (b, k) in [(1, 1), (2, 2), (2, 3), (3, 2), (3, 3)] {
        out.push(one_hot_preservation(b, k, 10));
    }
    out.extend(gradient_certification(seed + 7));
    out.extend(trainer_properties(seed + 8));
    out
}
