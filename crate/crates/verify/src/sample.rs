//! Random test inputs: orthogonal matrices, SPD matrices with bounded
//! condition number, and density matrices.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use relmatch::density::DensityMatrix;
use relmatch::{Matrix, SymMatrix};

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Haar-ish orthogonal matrix from modified Gram–Schmidt on Gaussian columns.
pub fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
        for _ in 0..2 {
            for u in &cols {
                let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            cols.push(v);
        }
    }
    let mut m = Matrix::zeros(n, n);
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            m[(i, j)] = c[i];
        }
    }
    m
}

/// `O·diag(eigs)·Oᵀ`, accumulated entry by entry.
pub fn with_spectrum(o: &Matrix, eigs: &[f64]) -> SymMatrix {
    let n = eigs.len();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for t in 0..n {
                s += o[(i, t)] * eigs[t] * o[(j, t)];
            }
            m[(i, j)] = s;
        }
    }
    SymMatrix::new(m).expect("finite square")
}

/// Eigenvalues `s·10^{u·log10(cond)}`, with the extremes pinned so the
/// condition number is exactly `cond`, and a random overall scale `s`.
pub fn spd_eigs(rng: &mut ChaCha8Rng, n: usize, cond: f64) -> Vec<f64> {
    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
    let span = cond.log10();
    let mut e: Vec<f64> = (0..n).map(|_| scale * 10f64.powf(rng.random::<f64>() * span)).collect();
    e[0] = scale;
    if n > 1 {
        e[1] = scale * cond;
    }
    e
}

pub fn spd(rng: &mut ChaCha8Rng, n: usize, cond: f64) -> (SymMatrix, Vec<f64>) {
    let e = spd_eigs(rng, n, cond);
    let o = orthogonal(rng, n);
    (with_spectrum(&o, &e), e)
}

/// Probability vector with every entry at least `floor`.
pub fn prob(rng: &mut ChaCha8Rng, k: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| floor + (1.0 - k as f64 * floor) * x / s).collect()
}

/// Positive definite density matrix, eigenvalues at least `floor`.
pub fn density_pd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DensityMatrix {
    let e = prob(rng, n, floor);
    let o = orthogonal(rng, n);
    DensityMatrix::new(with_spectrum(&o, &e)).expect("valid density")
}

/// Positive definite matrix with trace in `[0.5, 2]`, eigenvalues at least `floor`.
pub fn psd_pd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> SymMatrix {
    let t = rng.random_range(0.5..2.0);
    let e: Vec<f64> = prob(rng, n, floor / t).into_iter().map(|x| x * t).collect();
    let o = orthogonal(rng, n);
    with_spectrum(&o, &e)
}

/// Symmetric matrix `I + O·diag(δ)·Oᵀ` with every `|δ_i| ≤ radius`.
pub fn near_identity(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> (SymMatrix, Vec<f64>) {
    let e: Vec<f64> = (0..n).map(|_| 1.0 + rng.random_range(-radius..=radius)).collect();
    let o = orthogonal(rng, n);
    (with_spectrum(&o, &e), e)
}

/// Random `b × k` matrix with positive entries.
pub fn positive_matrix(rng: &mut ChaCha8Rng, b: usize, k: usize) -> Matrix {
    let data = (0..b * k).map(|_| rng.random_range(0.01..1.0)).collect();
    Matrix::from_vec(b, k, data).expect("shape")
}

/// Random rows on the simplex, each entry at least `floor`.
pub fn prob_rows(rng: &mut ChaCha8Rng, b: usize, k: usize, floor: f64) -> Vec<Vec<f64>> {
    (0..b).map(|_| prob(rng, k, floor)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1, 2, 7, 32] {
            let o = orthogonal(&mut rng, n);
            let g = o.t_matmul(&o);
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g[(i, j)] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn spd_condition_is_pinned() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = spd_eigs(&mut rng, 5, 1e6);
        let max = e.iter().cloned().fold(0.0, f64::max);
        let min = e.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((max / min - 1e6).abs() < 1e-3);
    }

    #[test]
    fn prob_respects_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = prob(&mut rng, 6, 0.01);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.01));
    }
}
