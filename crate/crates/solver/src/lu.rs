//! Sparse LU factorization of the simplex basis with product-form updates.
//!
//! The basis `B` is factored column by column (left-looking) in an order that
//! favours sparse columns, with threshold partial pivoting. After `k` basis
//! changes the inverse is represented as `E_k^-1 ... E_1^-1 (LU)^-1`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

const PIVOT_THRESHOLD: f64 = 0.1;
const SINGULAR_TOL: f64 = 1e-11;
const DROP_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    pivot: f64,
    entries: Vec<(usize, f64)>,
}

/// Result of a factorization attempt that hit structurally or numerically
/// dependent columns.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Singular {
    /// Basis positions that could not be pivoted.
    pub positions: Vec<usize>,
    /// Rows left without a pivot; same length as `positions`.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct BasisFactor {
    m: usize,
    col_of: Vec<usize>,
    row_of: Vec<usize>,
    l_cols: Vec<Vec<(usize, f64)>>,
    u_cols: Vec<Vec<(usize, f64)>>,
    u_diag: Vec<f64>,
    etas: Vec<Eta>,
    eta_nnz: usize,
    lu_nnz: usize,
}

impl BasisFactor {
    /// Factors the basis whose column at position `p` is `columns[p]`.
    pub fn factor(m: usize, columns: &[Vec<(usize, f64)>]) -> Result<Self, Singular> {
        debug_assert_eq!(columns.len(), m);
        let mut row_count = vec![0usize; m];
        for col in columns {
            for &(r, _) in col {
                row_count[r] += 1;
            }
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&p| (columns[p].len(), p));

        let mut f = BasisFactor {
            m,
            col_of: Vec::with_capacity(m),
            row_of: Vec::with_capacity(m),
            l_cols: Vec::with_capacity(m),
            u_cols: Vec::with_capacity(m),
            u_diag: Vec::with_capacity(m),
            etas: Vec::new(),
            eta_nnz: 0,
            lu_nnz: 0,
        };
        let mut pivot_of_row: Vec<Option<usize>> = vec![None; m];
        let mut x = vec![0.0; m];
        let mut in_pattern = vec![false; m];
        let mut pattern: Vec<usize> = Vec::new();
        let mut queued = vec![false; m];
        let mut heap: BinaryHeap<Reverse<usize>> = BinaryHeap::new();
        let mut singular_positions = Vec::new();

        for &p in &order {
            for &(r, v) in &columns[p] {
                if !in_pattern[r] {
                    in_pattern[r] = true;
                    pattern.push(r);
                }
                x[r] += v;
                if let Some(k) = pivot_of_row[r] {
                    if !queued[k] {
                        queued[k] = true;
                        heap.push(Reverse(k));
                    }
                }
            }
            // Apply earlier L columns in pivot order; L_k only touches rows
            // pivoted after k, so a min-heap gives a valid topological order.
            while let Some(Reverse(k)) = heap.pop() {
                queued[k] = false;
                let xr = x[f.row_of[k]];
                if xr == 0.0 {
                    continue;
                }
                for &(i, l) in &f.l_cols[k] {
                    if !in_pattern[i] {
                        in_pattern[i] = true;
                        pattern.push(i);
                    }
                    x[i] -= l * xr;
                    if let Some(k2) = pivot_of_row[i] {
                        if !queued[k2] {
                            queued[k2] = true;
                            heap.push(Reverse(k2));
                        }
                    }
                }
            }

            let mut u_col = Vec::new();
            let mut max_abs = 0.0f64;
            for &i in &pattern {
                match pivot_of_row[i] {
                    Some(k) => {
                        if x[i].abs() > DROP_TOL {
                            u_col.push((k, x[i]));
                        }
                    }
                    None => max_abs = max_abs.max(x[i].abs()),
                }
            }

            if max_abs <= SINGULAR_TOL {
                singular_positions.push(p);
            } else {
                let mut best: Option<usize> = None;
                for &i in &pattern {
                    if pivot_of_row[i].is_some() || x[i].abs() < PIVOT_THRESHOLD * max_abs {
                        continue;
                    }
                    best = match best {
                        None => Some(i),
                        Some(b) => {
                            if (row_count[i], i) < (row_count[b], b) {
                                Some(i)
                            } else {
                                Some(b)
                            }
                        }
                    };
                }
                let piv_row = best.expect("pivot candidate exists when max_abs > 0");
                let piv = x[piv_row];
                let k = f.row_of.len();
                let mut l_col = Vec::new();
                for &i in &pattern {
                    if i != piv_row && pivot_of_row[i].is_none() && x[i].abs() > DROP_TOL {
                        l_col.push((i, x[i] / piv));
                    }
                }
                u_col.sort_by_key(|&(j, _)| j);
                f.lu_nnz += l_col.len() + u_col.len() + 1;
                pivot_of_row[piv_row] = Some(k);
                f.col_of.push(p);
                f.row_of.push(piv_row);
                f.l_cols.push(l_col);
                f.u_cols.push(u_col);
                f.u_diag.push(piv);
            }
            for &i in &pattern {
                x[i] = 0.0;
                in_pattern[i] = false;
            }
            pattern.clear();
        }

        if singular_positions.is_empty() {
            Ok(f)
        } else {
            let rows: Vec<usize> = (0..m).filter(|&r| pivot_of_row[r].is_none()).collect();
            singular_positions.sort_unstable();
            Err(Singular {
                positions: singular_positions,
                rows,
            })
        }
    }

    pub fn num_updates(&self) -> usize {
        self.etas.len()
    }

    pub fn fill_ratio(&self) -> f64 {
        (self.eta_nnz as f64) / (self.lu_nnz.max(1) as f64)
    }

    /// Solves `B x = b`. `b` is indexed by row on entry; on exit `b` holds
    /// `x` indexed by basis position.
    pub fn ftran(&self, b: &mut [f64], scratch: &mut Vec<f64>) {
        let m = self.m;
        for k in 0..m {
            let wk = b[self.row_of[k]];
            if wk != 0.0 {
                for &(i, l) in &self.l_cols[k] {
                    b[i] -= l * wk;
                }
            }
        }
        scratch.clear();
        scratch.extend(self.row_of.iter().map(|&r| b[r]));
        for k in (0..m).rev() {
            let zk = scratch[k] / self.u_diag[k];
            scratch[k] = zk;
            if zk != 0.0 {
                for &(j, u) in &self.u_cols[k] {
                    scratch[j] -= u * zk;
                }
            }
        }
        for k in 0..m {
            b[self.col_of[k]] = scratch[k];
        }
        for eta in &self.etas {
            let xp = b[eta.pos] / eta.pivot;
            b[eta.pos] = xp;
            if xp != 0.0 {
                for &(i, a) in &eta.entries {
                    b[i] -= a * xp;
                }
            }
        }
    }

    /// Solves `B' y = c`. `c` is indexed by basis position on entry; on exit
    /// it holds `y` indexed by row.
    pub fn btran(&self, c: &mut [f64], scratch: &mut Vec<f64>) {
        let m = self.m;
        for eta in self.etas.iter().rev() {
            let mut s = c[eta.pos];
            for &(i, a) in &eta.entries {
                s -= a * c[i];
            }
            c[eta.pos] = s / eta.pivot;
        }
        scratch.clear();
        scratch.resize(m, 0.0);
        for k in 0..m {
            let mut s = c[self.col_of[k]];
            for &(j, u) in &self.u_cols[k] {
                s -= u * scratch[j];
            }
            scratch[k] = s / self.u_diag[k];
        }
        for k in (0..m).rev() {
            let mut s = scratch[k];
            for &(i, l) in &self.l_cols[k] {
                s -= l * c[i];
            }
            c[self.row_of[k]] = s;
        }
    }

    /// Records the replacement of basis position `pos` by a column whose
    /// FTRAN image is `alpha` (indexed by basis position).
    pub fn update(&mut self, pos: usize, alpha: &[f64]) {
        let entries: Vec<(usize, f64)> = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != pos && a.abs() > DROP_TOL)
            .map(|(i, &a)| (i, a))
            .collect();
        self.eta_nnz += entries.len() + 1;
        self.etas.push(Eta {
            pos,
            pivot: alpha[pos],
            entries,
        });
    }
}
