//! Exhaustive oracles: LP vertex enumeration and binary MIP enumeration.

use crate::{solve_dense, DenseLp, Outcome};

fn feasible(lp: &DenseLp, x: &[f64], tol: f64) -> bool {
    for (j, &v) in x.iter().enumerate() {
        if v < lp.var_lo[j] - tol || v > lp.var_hi[j] + tol {
            return false;
        }
    }
    for (i, row) in lp.a.iter().enumerate() {
        let act: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
        if act < lp.row_lo[i] - tol || act > lp.row_hi[i] + tol {
            return false;
        }
    }
    true
}

/// Best objective over all basic feasible points. Requires every variable to
/// be boxed so the feasible set (if nonempty) is a polytope.
pub fn vertex_enumeration(lp: &DenseLp) -> Outcome {
    let n = lp.c.len();
    assert!(n <= 8, "vertex enumeration is exponential");
    assert!(
        lp.var_lo.iter().chain(&lp.var_hi).all(|v| v.is_finite()),
        "vertex enumeration needs boxed variables"
    );
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), lp.var_lo[j]));
        planes.push((e, lp.var_hi[j]));
    }
    for (i, row) in lp.a.iter().enumerate() {
        if lp.row_lo[i].is_finite() {
            planes.push((row.clone(), lp.row_lo[i]));
        }
        if lp.row_hi[i].is_finite() && lp.row_hi[i] != lp.row_lo[i] {
            planes.push((row.clone(), lp.row_hi[i]));
        }
    }
    let mut best: Option<f64> = None;
    let mut pick = Vec::with_capacity(n);
    combos(planes.len(), n, 0, &mut pick, &mut |idx| {
        let a: Vec<Vec<f64>> = idx.iter().map(|&k| planes[k].0.clone()).collect();
        let b: Vec<f64> = idx.iter().map(|&k| planes[k].1).collect();
        if let Some(x) = solve_dense(a, b) {
            if feasible(lp, &x, 1e-7) {
                let v: f64 = lp.c.iter().zip(&x).map(|(c, x)| c * x).sum();
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
    });
    match best {
        Some(v) => Outcome::Optimal(v),
        None => Outcome::Infeasible,
    }
}

fn combos(total: usize, k: usize, start: usize, pick: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if pick.len() == k {
        f(pick);
        return;
    }
    for i in start..total {
        if total - i < k - pick.len() {
            break;
        }
        pick.push(i);
        combos(total, k, i + 1, pick, f);
        pick.pop();
    }
}

/// Minimizes over all 0/1 assignments of a pure binary problem. Returns the
/// optimum and the first optimal assignment in lexicographic order.
pub fn binary_enumeration(lp: &DenseLp) -> (Outcome, Vec<f64>) {
    let n = lp.c.len();
    assert!(n <= 22, "binary enumeration is exponential");
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut x = vec![0.0; n];
    for mask in 0u64..(1u64 << n) {
        for (j, v) in x.iter_mut().enumerate() {
            *v = ((mask >> j) & 1) as f64;
        }
        if !feasible(lp, &x, 1e-9) {
            continue;
        }
        let v: f64 = lp.c.iter().zip(&x).map(|(c, x)| c * x).sum();
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, x.clone()));
        }
    }
    match best {
        Some((v, x)) => (Outcome::Optimal(v), x),
        None => (Outcome::Infeasible, vec![]),
    }
}
