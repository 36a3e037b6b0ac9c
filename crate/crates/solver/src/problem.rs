//! Problem representation shared by the LP and MIP entry points.

use crate::SolverError;

/// Optimization direction. Maximization is handled by negating costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sense {
    #[default]
    Minimize,
    Maximize,
}

/// Compressed sparse column storage for the constraint matrix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    pub fn new(nrows: usize) -> Self {
        Self {
            nrows,
            col_ptr: vec![0],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn ncols(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Builds a CSC matrix from (row, col, value) triplets. Duplicate entries
    /// are summed; exact zeros are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; ncols];
        for &(_, c, _) in triplets {
            counts[c] += 1;
        }
        let mut buckets: Vec<Vec<(usize, f64)>> =
            counts.iter().map(|&n| Vec::with_capacity(n)).collect();
        for &(r, c, v) in triplets {
            buckets[c].push((r, v));
        }
        let mut m = CscMatrix::new(nrows);
        for mut bucket in buckets {
            bucket.sort_by_key(|&(r, _)| r);
            let mut last: Option<usize> = None;
            for (r, v) in bucket {
                if last == Some(r) {
                    *m.values.last_mut().unwrap() += v;
                } else {
                    m.row_idx.push(r);
                    m.values.push(v);
                    last = Some(r);
                }
            }
            m.col_ptr.push(m.row_idx.len());
        }
        m.drop_zeros();
        m
    }

    fn drop_zeros(&mut self) {
        let mut ptr = vec![0];
        let mut rows = Vec::with_capacity(self.row_idx.len());
        let mut vals = Vec::with_capacity(self.values.len());
        for j in 0..self.ncols() {
            for (r, v) in self.col(j) {
                if v != 0.0 {
                    rows.push(r);
                    vals.push(v);
                }
            }
            ptr.push(rows.len());
        }
        self.col_ptr = ptr;
        self.row_idx = rows;
        self.values = vals;
    }

    /// Row-major copy: for every row the list of (column, value).
    pub fn to_rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.nrows];
        for j in 0..self.ncols() {
            for (r, v) in self.col(j) {
                rows[r].push((j, v));
            }
        }
        rows
    }
}

/// A sparse row to be appended to an existing problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSpec {
    pub coefficients: Vec<(usize, f64)>,
    pub lower: f64,
    pub upper: f64,
}

impl RowSpec {
    pub fn new(coefficients: Vec<(usize, f64)>, lower: f64, upper: f64) -> Self {
        Self {
            coefficients,
            lower,
            upper,
        }
    }
}

/// `min/max c'x  s.t.  row_lower <= A x <= row_upper,  var_lower <= x <= var_upper`,
/// with an optional integrality mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub costs: Vec<f64>,
    pub columns: CscMatrix,
    pub row_lower: Vec<f64>,
    pub row_upper: Vec<f64>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
    pub integrality: Vec<bool>,
    /// Constant added to the objective value.
    pub objective_offset: f64,
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.costs.len()
    }

    pub fn num_rows(&self) -> usize {
        self.row_lower.len()
    }

    pub fn has_integers(&self) -> bool {
        self.integrality.iter().any(|&b| b)
    }

    pub fn num_integers(&self) -> usize {
        self.integrality.iter().filter(|&&b| b).count()
    }

    /// Checks dimensions, bound ordering and finiteness of costs.
    pub fn check(&self) -> Result<(), SolverError> {
        let n = self.costs.len();
        let m = self.row_lower.len();
        let bad = |msg: String| Err(SolverError::MalformedProblem(msg));
        if self.columns.ncols() != n {
            return bad(format!("matrix has {} columns, costs has {}", self.columns.ncols(), n));
        }
        if self.columns.nrows != m || self.row_upper.len() != m {
            return bad(format!(
                "row dimension mismatch: matrix {}, lower {}, upper {}",
                self.columns.nrows,
                m,
                self.row_upper.len()
            ));
        }
        if self.var_lower.len() != n || self.var_upper.len() != n || self.integrality.len() != n {
            return bad("variable bound/integrality vectors do not match cost length".into());
        }
        if self.columns.row_idx.iter().any(|&r| r >= m) {
            return bad("matrix row index out of range".into());
        }
        if let Some(j) = self.costs.iter().position(|c| !c.is_finite()) {
            return bad(format!("cost of variable {j} is not finite"));
        }
        if let Some(k) = self.columns.values.iter().position(|v| !v.is_finite()) {
            return bad(format!("matrix entry {k} is not finite"));
        }
        for j in 0..n {
            let (l, u) = (self.var_lower[j], self.var_upper[j]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return bad(format!("variable {j} has invalid bounds [{l}, {u}]"));
            }
        }
        for i in 0..m {
            let (l, u) = (self.row_lower[i], self.row_upper[i]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return bad(format!("row {i} has invalid bounds [{l}, {u}]"));
            }
        }
        Ok(())
    }

    /// Objective value of `x` in the problem's own sense, including the offset.
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.objective_offset + self.costs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Row activities `A x`.
    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.num_rows()];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (r, v) in self.columns.col(j) {
                    act[r] += v * xj;
                }
            }
        }
        act
    }

    /// Largest bound violation of `x` over rows and variables.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let act = self.row_activity(x);
        let mut worst = 0.0f64;
        for i in 0..self.num_rows() {
            worst = worst
                .max(self.row_lower[i] - act[i])
                .max(act[i] - self.row_upper[i]);
        }
        for j in 0..self.num_vars() {
            worst = worst
                .max(self.var_lower[j] - x[j])
                .max(x[j] - self.var_upper[j]);
        }
        worst
    }

    /// Appends rows in place.
    pub fn append_rows(&mut self, rows: &[RowSpec]) -> Result<(), SolverError> {
        let n = self.num_vars();
        let m0 = self.num_rows();
        let mut triplets = Vec::with_capacity(self.columns.nnz());
        for j in 0..n {
            for (r, v) in self.columns.col(j) {
                triplets.push((r, j, v));
            }
        }
        for (k, row) in rows.iter().enumerate() {
            for &(j, v) in &row.coefficients {
                if j >= n {
                    return Err(SolverError::MalformedProblem(format!(
                        "added row {k} references unknown variable {j}"
                    )));
                }
                triplets.push((m0 + k, j, v));
            }
            self.row_lower.push(row.lower);
            self.row_upper.push(row.upper);
        }
        self.columns = CscMatrix::from_triplets(m0 + rows.len(), n, &triplets);
        Ok(())
    }
}

/// Incremental builder producing a [`LinearProgram`].
#[derive(Debug, Clone, Default)]
pub struct LpBuilder {
    sense: Sense,
    costs: Vec<f64>,
    var_lower: Vec<f64>,
    var_upper: Vec<f64>,
    integrality: Vec<bool>,
    row_lower: Vec<f64>,
    row_upper: Vec<f64>,
    triplets: Vec<(usize, usize, f64)>,
    offset: f64,
}

impl LpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sense(mut self, sense: Sense) -> Self {
        self.sense = sense;
        self
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.costs.push(cost);
        self.var_lower.push(lower);
        self.var_upper.push(upper);
        self.integrality.push(false);
        self.costs.len() - 1
    }

    pub fn add_int_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        let j = self.add_var(cost, lower, upper);
        self.integrality[j] = true;
        j
    }

    pub fn set_integer(&mut self, var: usize, integer: bool) {
        self.integrality[var] = integer;
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.costs[var] = cost;
    }

    pub fn add_cost(&mut self, var: usize, cost: f64) {
        self.costs[var] += cost;
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.var_lower[var] = lower;
        self.var_upper[var] = upper;
    }

    pub fn bounds(&self, var: usize) -> (f64, f64) {
        (self.var_lower[var], self.var_upper[var])
    }

    pub fn add_offset(&mut self, value: f64) {
        self.offset += value;
    }

    pub fn add_row(&mut self, lower: f64, upper: f64, coefficients: &[(usize, f64)]) -> usize {
        let r = self.row_lower.len();
        self.row_lower.push(lower);
        self.row_upper.push(upper);
        for &(j, v) in coefficients {
            self.triplets.push((r, j, v));
        }
        r
    }

    pub fn set_row_bounds(&mut self, row: usize, lower: f64, upper: f64) {
        self.row_lower[row] = lower;
        self.row_upper[row] = upper;
    }

    pub fn row_bounds(&self, row: usize) -> (f64, f64) {
        (self.row_lower[row], self.row_upper[row])
    }

    pub fn num_vars(&self) -> usize {
        self.costs.len()
    }

    pub fn num_rows(&self) -> usize {
        self.row_lower.len()
    }

    pub fn build(self) -> LinearProgram {
        let n = self.costs.len();
        let m = self.row_lower.len();
        LinearProgram {
            sense: self.sense,
            columns: CscMatrix::from_triplets(m, n, &self.triplets),
            costs: self.costs,
            row_lower: self.row_lower,
            row_upper: self.row_upper,
            var_lower: self.var_lower,
            var_upper: self.var_upper,
            integrality: self.integrality,
            objective_offset: self.offset,
        }
    }
}
