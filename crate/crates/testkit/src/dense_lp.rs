//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Slow and simple; only meant for cross-checking small problems.

use crate::{DenseLp, Outcome};

const EPS: f64 = 1e-9;

enum Map {
    /// x = lo + x'
    Shift(f64),
    /// x = hi - x'
    Flip(f64),
    /// x = x+ - x-; second index in the standard-form column list
    Split(usize),
}

/// Returns the optimum and an optimal point.
pub fn solve(lp: &DenseLp) -> (Outcome, Vec<f64>) {
    let n = lp.c.len();
    // Standard form columns.
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut col_of = Vec::with_capacity(n);
    for j in 0..n {
        col_of.push(ncols);
        ncols += 1;
        let (l, u) = (lp.var_lo[j], lp.var_hi[j]);
        if l.is_finite() {
            maps.push(Map::Shift(l));
        } else if u.is_finite() {
            maps.push(Map::Flip(u));
        } else {
            maps.push(Map::Split(ncols));
            ncols += 1;
        }
    }
    // Each constraint: coefficients over standard columns, sense, rhs.
    let mut cons: Vec<(Vec<f64>, i8, f64)> = Vec::new();
    let expand = |row: &[f64], rhs: f64, ncols: usize| -> (Vec<f64>, f64) {
        let mut a = vec![0.0; ncols];
        let mut b = rhs;
        for j in 0..n {
            let v = row[j];
            if v == 0.0 {
                continue;
            }
            match maps[j] {
                Map::Shift(l) => {
                    a[col_of[j]] += v;
                    b -= v * l;
                }
                Map::Flip(u) => {
                    a[col_of[j]] -= v;
                    b -= v * u;
                }
                Map::Split(k) => {
                    a[col_of[j]] += v;
                    a[k] -= v;
                }
            }
        }
        (a, b)
    };
    for (i, row) in lp.a.iter().enumerate() {
        let (lo, hi) = (lp.row_lo[i], lp.row_hi[i]);
        if lo == hi {
            let (a, b) = expand(row, lo, ncols);
            cons.push((a, 0, b));
            continue;
        }
        if hi.is_finite() {
            let (a, b) = expand(row, hi, ncols);
            cons.push((a, -1, b));
        }
        if lo.is_finite() {
            let (a, b) = expand(row, lo, ncols);
            cons.push((a, 1, b));
        }
    }
    for j in 0..n {
        let (l, u) = (lp.var_lo[j], lp.var_hi[j]);
        if l.is_finite() && u.is_finite() {
            let mut a = vec![0.0; ncols];
            a[col_of[j]] = 1.0;
            cons.push((a, -1, u - l));
        }
    }
    let mut cost = vec![0.0; ncols];
    let mut offset = 0.0;
    for j in 0..n {
        match maps[j] {
            Map::Shift(l) => {
                cost[col_of[j]] += lp.c[j];
                offset += lp.c[j] * l;
            }
            Map::Flip(u) => {
                cost[col_of[j]] -= lp.c[j];
                offset += lp.c[j] * u;
            }
            Map::Split(k) => {
                cost[col_of[j]] += lp.c[j];
                cost[k] -= lp.c[j];
            }
        }
    }

    // Slack columns, then artificials.
    let m = cons.len();
    let nslack = cons.iter().filter(|c| c.1 != 0).count();
    let total = ncols + nslack + m;
    let mut t = vec![vec![0.0; total + 1]; m];
    let mut basis = vec![0usize; m];
    let mut s = ncols;
    for (i, (a, sense, b)) in cons.iter().enumerate() {
        t[i][..ncols].copy_from_slice(a);
        if *sense != 0 {
            t[i][s] = if *sense < 0 { 1.0 } else { -1.0 };
            s += 1;
        }
        t[i][total] = *b;
        if *b < 0.0 {
            for v in t[i].iter_mut() {
                *v = -*v;
            }
        }
        t[i][ncols + nslack + i] = 1.0;
        basis[i] = ncols + nslack + i;
    }
    let art_start = ncols + nslack;

    let mut phase1 = vec![0.0; total];
    for c in phase1.iter_mut().skip(art_start) {
        *c = 1.0;
    }
    if !run(&mut t, &mut basis, &phase1, total, None) {
        return (Outcome::Unbounded, vec![]);
    }
    let infeas: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &b)| b >= art_start)
        .map(|(i, _)| t[i][total])
        .sum();
    if infeas > 1e-7 {
        return (Outcome::Infeasible, vec![]);
    }
    // Drive zero-level artificials out where possible.
    for i in 0..m {
        if basis[i] >= art_start {
            if let Some(j) = (0..art_start).find(|&j| t[i][j].abs() > EPS) {
                pivot(&mut t, &mut basis, i, j, total);
            }
        }
    }
    let mut phase2 = vec![0.0; total];
    phase2[..ncols].copy_from_slice(&cost);
    if !run(&mut t, &mut basis, &phase2, total, Some(art_start)) {
        return (Outcome::Unbounded, vec![]);
    }
    let mut z = vec![0.0; total];
    for (i, &b) in basis.iter().enumerate() {
        z[b] = t[i][total];
    }
    let mut x = vec![0.0; n];
    for j in 0..n {
        x[j] = match maps[j] {
            Map::Shift(l) => l + z[col_of[j]],
            Map::Flip(u) => u - z[col_of[j]],
            Map::Split(k) => z[col_of[j]] - z[k],
        };
    }
    let obj = offset + cost.iter().zip(&z).map(|(c, v)| c * v).sum::<f64>();
    (Outcome::Optimal(obj), x)
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, q: usize, total: usize) {
    let p = t[r][q];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    let prow = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i != r {
            let f = row[q];
            if f != 0.0 {
                for k in 0..=total {
                    row[k] -= f * prow[k];
                }
            }
        }
    }
    basis[r] = q;
}

/// Minimizes `cost` from the current basis. Columns at or after `forbid`
/// may not enter. Returns false on unboundedness.
fn run(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], total: usize, forbid: Option<usize>) -> bool {
    let m = t.len();
    let limit = forbid.unwrap_or(total);
    loop {
        let mut entering = None;
        for j in 0..limit {
            if basis.contains(&j) {
                continue;
            }
            let mut d = cost[j];
            for i in 0..m {
                d -= cost[basis[i]] * t[i][j];
            }
            if d < -EPS {
                entering = Some(j);
                break;
            }
        }
        let Some(q) = entering else { return true };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][q] > EPS {
                let ratio = t[i][total] / t[i][q];
                let better = match leave {
                    None => true,
                    Some((li, lr)) => ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && basis[i] < basis[li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((r, _)) = leave else { return false };
        pivot(t, basis, r, q, total);
    }
}
