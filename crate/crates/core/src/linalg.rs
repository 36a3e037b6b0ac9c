//! Small dense helpers for the statistics code (normal equations,
//! correlation factors). Matrices are row-major `Vec<Vec<f64>>`.

/// Lower-triangular Cholesky factor of a symmetric matrix. Adds a diagonal
/// jitter of up to `max_jitter` (growing by powers of ten from 1e-14) when
/// the matrix is only semidefinite. Returns the factor and the jitter used.
pub fn cholesky_with_jitter(a: &[Vec<f64>], max_jitter: f64) -> Option<(Vec<Vec<f64>>, f64)> {
    if let Some(l) = cholesky(a, 0.0) {
        return Some((l, 0.0));
    }
    let mut jitter = 1e-14;
    while jitter <= max_jitter * (1.0 + 1e-12) {
        if let Some(l) = cholesky(a, jitter) {
            return Some((l, jitter));
        }
        jitter *= 10.0;
    }
    None
}

fn cholesky(a: &[Vec<f64>], jitter: f64) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            if i == j {
                s += jitter;
            }
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when `a` is numerically singular.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}
