//! Brute-force oracles. Nothing here calls into the library under test:
//! each one recomputes its quantity along a separate, naive arithmetic path.

/// `Σ -p_i log q_i + q_i` for commuting (simultaneously diagonal) arguments.
/// Terms with `p_i = 0` contribute only `q_i`.
pub fn oracle_mce_commuting(p_eigs: &[f64], q_eigs: &[f64]) -> f64 {
    assert_eq!(p_eigs.len(), q_eigs.len());
    let mut s = 0.0;
    for i in 0..p_eigs.len() {
        if p_eigs[i] != 0.0 {
            s -= p_eigs[i] * q_eigs[i].ln();
        }
        s += q_eigs[i];
    }
    s
}

/// Central difference `(f(x + h·dir) - f(x - h·dir)) / 2h`.
pub fn oracle_fd_directional<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], dir: &[f64], h: f64) -> f64 {
    assert_eq!(x.len(), dir.len());
    let plus: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + h * d).collect();
    let minus: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a - h * d).collect();
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// All compositions of `n` into `k` non-negative parts, in lexicographic order.
pub fn simplex_counts(k: usize, n: u32) -> Vec<Vec<u32>> {
    fn rec(k: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() + 1 == k {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(k, left - c, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k > 0 {
        rec(k, n, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// Every probability vector over `k` outcomes whose entries are multiples
/// of `grid_step`. `1/grid_step` must be (close to) an integer.
pub fn oracle_enumerate_simplex(k: usize, grid_step: f64) -> Vec<Vec<f64>> {
    let n = (1.0 / grid_step).round();
    assert!((n * grid_step - 1.0).abs() < 1e-9, "grid step must divide 1");
    let n = n as u32;
    simplex_counts(k, n).into_iter().map(|c| c.into_iter().map(|x| x as f64 / n as f64).collect()).collect()
}

/// Non-zero singular values of the `b × k` one-hot matrix of `labels`:
/// the square roots of the class counts, descending.
pub fn oracle_onehot_svd(labels: &[usize], b: usize, k: usize) -> Vec<f64> {
    assert_eq!(labels.len(), b);
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let mut s: Vec<f64> = counts.into_iter().filter(|&c| c > 0).map(|c| (c as f64).sqrt()).collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Naive `A·Aᵀ` from rows.
pub fn oracle_gram(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let b = rows.len();
    let mut g = vec![vec![0.0; b]; b];
    for i in 0..b {
        for j in 0..b {
            let mut s = 0.0;
            for (x, y) in rows[i].iter().zip(&rows[j]) {
                s += x * y;
            }
            g[i][j] = s;
        }
    }
    g
}

/// Mean of `-log q_i[y_i]`.
pub fn oracle_scalar_ce(labels: &[usize], probs: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        s -= probs[i][y].ln();
    }
    s / labels.len() as f64
}

/// `Σ log x_i`, the log-determinant of a matrix with eigenvalues `x`.
pub fn oracle_log_det(eigs: &[f64]) -> f64 {
    eigs.iter().map(|x| x.ln()).sum()
}

/// Partial sum `Σ_{k=1..order} (-1)^{k+1} δ^k / k` for one scalar.
pub fn oracle_taylor_log(x: f64, order: usize) -> f64 {
    let d = x - 1.0;
    let mut s = 0.0;
    let mut pow = 1.0;
    for k in 1..=order {
        pow *= d;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        s += sign * pow / k as f64;
    }
    s
}
