//! Bounded revised simplex (primal and dual) over `A x - s = 0`.
//!
//! Every row `i` owns a logical variable `s_i` with column `-e_i` whose bounds
//! are the row bounds, so the initial basis is the negative identity. The
//! solver object keeps its basis between calls, which is what the cut loop and
//! branch-and-bound use for warm starts.

use crate::lu::{BasisFactor, Singular};
use crate::problem::{CscMatrix, LinearProgram, RowSpec, Sense};
use crate::{LpSolution, LpStatus, SolverError, SolverOptions};

const NONBASIC: usize = usize::MAX;

/// Position of a variable relative to the current basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    Free,
}

/// Snapshot of a basis, usable to warm-start a later solve of the same (or a
/// row-extended) problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub var_status: Vec<BasisStatus>,
    pub row_status: Vec<BasisStatus>,
}

#[derive(Debug, Clone)]
pub(crate) struct WarmStart {
    head: Vec<usize>,
    status: Vec<BasisStatus>,
    dse: Vec<f64>,
}

enum PrimalEnd {
    Optimal,
    Infeasible,
    Unbounded,
}

enum DualEnd {
    Optimal,
    Infeasible,
}

fn to_status(end: PrimalEnd) -> LpStatus {
    match end {
        PrimalEnd::Optimal => LpStatus::Optimal,
        PrimalEnd::Infeasible => LpStatus::Infeasible,
        PrimalEnd::Unbounded => LpStatus::Unbounded,
    }
}

/// Persistent simplex solver for one problem instance.
#[derive(Debug, Clone)]
pub struct SimplexSolver {
    opts: SolverOptions,
    n: usize,
    m: usize,
    sign: f64,
    offset: f64,
    cost: Vec<f64>,
    cols: CscMatrix,
    rows: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    status: Vec<BasisStatus>,
    head: Vec<usize>,
    pos_of: Vec<usize>,
    x: Vec<f64>,
    d: Vec<f64>,
    /// Dual steepest-edge weights ||e_p' B^-1||^2 per basis position; empty
    /// when they have to be reset.
    dse: Vec<f64>,
    factor: Option<BasisFactor>,
    need_xb: bool,
    since_refactor: usize,
    iterations: usize,
    work: Vec<f64>,
    work2: Vec<f64>,
    scratch: Vec<f64>,
}

impl SimplexSolver {
    pub fn new(lp: &LinearProgram, opts: SolverOptions) -> Result<Self, SolverError> {
        lp.check()?;
        let n = lp.num_vars();
        let m = lp.num_rows();
        let sign = match lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut cost: Vec<f64> = lp.costs.iter().map(|c| sign * c).collect();
        cost.extend(std::iter::repeat_n(0.0, m));
        let mut lower = lp.var_lower.clone();
        lower.extend_from_slice(&lp.row_lower);
        let mut upper = lp.var_upper.clone();
        upper.extend_from_slice(&lp.row_upper);
        let mut s = SimplexSolver {
            opts,
            n,
            m,
            sign,
            offset: lp.objective_offset,
            cost,
            rows: lp.columns.to_rows(),
            cols: lp.columns.clone(),
            lower,
            upper,
            status: vec![BasisStatus::AtLower; n + m],
            head: (n..n + m).collect(),
            pos_of: vec![NONBASIC; n + m],
            x: vec![0.0; n + m],
            d: vec![0.0; n + m],
            dse: Vec::new(),
            factor: None,
            need_xb: true,
            since_refactor: 0,
            iterations: 0,
            work: Vec::new(),
            work2: Vec::new(),
            scratch: Vec::new(),
        };
        for p in 0..m {
            s.pos_of[n + p] = p;
            s.status[n + p] = BasisStatus::Basic;
        }
        for j in 0..n {
            let st = s.dual_friendly_status(j);
            s.status[j] = st;
            s.x[j] = s.nonbasic_value(j, st);
        }
        Ok(s)
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn var_bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    fn dual_friendly_status(&self, j: usize) -> BasisStatus {
        let (l, u) = (self.lower[j], self.upper[j]);
        let c = self.cost[j];
        match (l.is_finite(), u.is_finite()) {
            (true, true) => {
                if c < 0.0 {
                    BasisStatus::AtUpper
                } else {
                    BasisStatus::AtLower
                }
            }
            (true, false) => BasisStatus::AtLower,
            (false, true) => BasisStatus::AtUpper,
            (false, false) => BasisStatus::Free,
        }
    }

    fn nonbasic_value(&self, j: usize, st: BasisStatus) -> f64 {
        match st {
            BasisStatus::AtLower => self.lower[j],
            BasisStatus::AtUpper => self.upper[j],
            _ => 0.0,
        }
    }

    /// Re-validates a nonbasic status after a bound change.
    fn fix_status(&mut self, j: usize) {
        if self.status[j] == BasisStatus::Basic {
            return;
        }
        let (l, u) = (self.lower[j], self.upper[j]);
        let st = match self.status[j] {
            BasisStatus::AtLower if l.is_finite() => BasisStatus::AtLower,
            BasisStatus::AtUpper if u.is_finite() => BasisStatus::AtUpper,
            BasisStatus::Free if !l.is_finite() && !u.is_finite() => BasisStatus::Free,
            _ => self.dual_friendly_status(j),
        };
        self.status[j] = st;
        self.x[j] = self.nonbasic_value(j, st);
    }

    pub fn set_var_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        assert!(j < self.n);
        self.set_bounds_internal(j, lower, upper);
    }

    pub fn set_row_bounds(&mut self, i: usize, lower: f64, upper: f64) {
        assert!(i < self.m);
        self.set_bounds_internal(self.n + i, lower, upper);
    }

    fn set_bounds_internal(&mut self, j: usize, lower: f64, upper: f64) {
        if self.lower[j] == lower && self.upper[j] == upper {
            return;
        }
        self.lower[j] = lower;
        self.upper[j] = upper;
        self.fix_status(j);
        self.need_xb = true;
    }

    pub fn set_cost(&mut self, j: usize, cost: f64) {
        assert!(j < self.n);
        self.cost[j] = self.sign * cost;
    }

    /// Appends rows; their logicals enter the basis so the current basis stays
    /// dual feasible.
    pub fn add_rows(&mut self, rows: &[RowSpec]) -> Result<(), SolverError> {
        let n = self.n;
        for (k, row) in rows.iter().enumerate() {
            if row.lower.is_nan() || row.upper.is_nan() || row.lower > row.upper {
                return Err(SolverError::MalformedProblem(format!("added row {k} has invalid bounds")));
            }
            for &(j, v) in &row.coefficients {
                if j >= n {
                    return Err(SolverError::MalformedProblem(format!(
                        "added row {k} references unknown variable {j}"
                    )));
                }
                if !v.is_finite() {
                    return Err(SolverError::MalformedProblem(format!("added row {k} has a non-finite coefficient")));
                }
            }
        }
        let mut triplets = Vec::with_capacity(self.cols.nnz());
        for j in 0..n {
            for (r, v) in self.cols.col(j) {
                triplets.push((r, j, v));
            }
        }
        for row in rows {
            let i = self.m;
            for &(j, v) in &row.coefficients {
                triplets.push((i, j, v));
            }
            let mut act = 0.0;
            for &(j, v) in &row.coefficients {
                act += v * self.x[j];
            }
            self.lower.push(row.lower);
            self.upper.push(row.upper);
            self.cost.push(0.0);
            self.status.push(BasisStatus::Basic);
            self.x.push(act);
            self.d.push(0.0);
            self.pos_of.push(self.m);
            self.head.push(n + self.m);
            self.m += 1;
        }
        self.cols = CscMatrix::from_triplets(self.m, n, &triplets);
        self.rows = self.cols.to_rows();
        self.dse.clear();
        self.factor = None;
        self.need_xb = true;
        Ok(())
    }

    pub fn basis(&self) -> Basis {
        Basis {
            var_status: self.status[..self.n].to_vec(),
            row_status: self.status[self.n..].to_vec(),
        }
    }

    /// Installs a basis snapshot. Rows beyond the snapshot get basic logicals;
    /// inconsistent snapshots are repaired at the next factorization.
    pub fn set_basis(&mut self, basis: &Basis) -> Result<(), SolverError> {
        if basis.var_status.len() != self.n || basis.row_status.len() > self.m {
            return Err(SolverError::MalformedProblem("basis dimensions do not match problem".into()));
        }
        let mut status = basis.var_status.clone();
        status.extend_from_slice(&basis.row_status);
        status.extend(std::iter::repeat_n(BasisStatus::Basic, self.m - basis.row_status.len()));
        let mut head: Vec<usize> = (0..self.n + self.m).filter(|&j| status[j] == BasisStatus::Basic).collect();
        // Too many basics: demote the structurals with the largest index.
        while head.len() > self.m {
            let j = head.iter().rev().copied().find(|&j| j < self.n).unwrap_or(*head.last().unwrap());
            head.retain(|&h| h != j);
            status[j] = BasisStatus::AtLower;
        }
        // Too few: promote nonbasic logicals.
        let mut i = 0;
        while head.len() < self.m && i < self.m {
            let j = self.n + i;
            if status[j] != BasisStatus::Basic {
                status[j] = BasisStatus::Basic;
                head.push(j);
            }
            i += 1;
        }
        self.install(WarmStart {
            head,
            status,
            dse: Vec::new(),
        });
        Ok(())
    }

    pub(crate) fn warm_start(&self) -> WarmStart {
        WarmStart {
            head: self.head.clone(),
            status: self.status.clone(),
            dse: self.dse.clone(),
        }
    }

    pub(crate) fn install(&mut self, ws: WarmStart) {
        self.head = ws.head;
        self.status = ws.status;
        self.dse = ws.dse;
        self.pos_of.iter_mut().for_each(|p| *p = NONBASIC);
        for (p, &j) in self.head.iter().enumerate() {
            self.pos_of[j] = p;
        }
        for j in 0..self.n + self.m {
            if self.status[j] != BasisStatus::Basic {
                self.fix_status(j);
            }
        }
        self.factor = None;
        self.need_xb = true;
    }

    fn column_of(&self, j: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        if j < self.n {
            out.extend(self.cols.col(j));
        } else {
            out.push((j - self.n, -1.0));
        }
    }

    fn scatter_column(&self, j: usize, dense: &mut [f64]) {
        if j < self.n {
            for (r, v) in self.cols.col(j) {
                dense[r] += v;
            }
        } else {
            dense[j - self.n] -= 1.0;
        }
    }

    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            self.cols.col(j).map(|(r, v)| v * y[r]).sum()
        } else {
            -y[j - self.n]
        }
    }

    fn refactor(&mut self) -> Result<(), SolverError> {
        let mut attempts = 0;
        loop {
            let mut columns = Vec::with_capacity(self.m);
            let mut buf = Vec::new();
            for &j in &self.head {
                self.column_of(j, &mut buf);
                columns.push(buf.clone());
            }
            match BasisFactor::factor(self.m, &columns) {
                Ok(f) => {
                    self.factor = Some(f);
                    self.since_refactor = 0;
                    self.need_xb = true;
                    return Ok(());
                }
                Err(Singular { positions, rows }) => {
                    attempts += 1;
                    if attempts > 3 || positions.len() != rows.len() {
                        return Err(SolverError::NumericalFailure("basis repair failed".into()));
                    }
                    for (&p, &r) in positions.iter().zip(&rows) {
                        let old = self.head[p];
                        let logical = self.n + r;
                        self.pos_of[old] = NONBASIC;
                        self.status[old] = BasisStatus::AtLower;
                        self.fix_status(old);
                        self.head[p] = logical;
                        self.pos_of[logical] = p;
                        self.status[logical] = BasisStatus::Basic;
                    }
                    self.dse.clear();
                }
            }
        }
    }

    fn ensure_factor(&mut self) -> Result<(), SolverError> {
        let stale = match &self.factor {
            None => true,
            Some(f) => f.num_updates() >= self.opts.refactor_interval || f.fill_ratio() > 3.0,
        };
        if stale {
            self.refactor()?;
        }
        if self.need_xb {
            self.compute_xb();
        }
        Ok(())
    }

    fn compute_xb(&mut self) {
        let m = self.m;
        let mut rhs = std::mem::take(&mut self.work);
        rhs.clear();
        rhs.resize(m, 0.0);
        for j in 0..self.n {
            if self.pos_of[j] == NONBASIC && self.x[j] != 0.0 {
                let xj = self.x[j];
                for (r, v) in self.cols.col(j) {
                    rhs[r] -= v * xj;
                }
            }
        }
        for i in 0..m {
            let j = self.n + i;
            if self.pos_of[j] == NONBASIC {
                rhs[i] += self.x[j];
            }
        }
        self.factor.as_ref().unwrap().ftran(&mut rhs, &mut self.scratch);
        for p in 0..m {
            self.x[self.head[p]] = rhs[p];
        }
        self.work = rhs;
        self.need_xb = false;
    }

    /// y = B^-T c_B and reduced costs for all variables.
    fn compute_duals(&mut self, phase_one: bool) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        let tol = self.opts.feasibility_tol;
        for p in 0..m {
            let j = self.head[p];
            y[p] = if phase_one {
                if self.x[j] < self.lower[j] - tol {
                    -1.0
                } else if self.x[j] > self.upper[j] + tol {
                    1.0
                } else {
                    0.0
                }
            } else {
                self.cost[j]
            };
        }
        self.factor.as_ref().unwrap().btran(&mut y, &mut self.scratch);
        for j in 0..self.n + m {
            self.d[j] = if self.pos_of[j] != NONBASIC {
                0.0
            } else {
                let c = if phase_one { 0.0 } else { self.cost[j] };
                c - self.dot_column(j, &y)
            };
        }
        y
    }

    fn primal_infeasibility(&self) -> f64 {
        let tol = self.opts.feasibility_tol;
        let mut sum = 0.0;
        for &j in &self.head {
            let x = self.x[j];
            if x < self.lower[j] - tol {
                sum += self.lower[j] - x;
            } else if x > self.upper[j] + tol {
                sum += x - self.upper[j];
            }
        }
        sum
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lower[j] == self.upper[j]
    }

    /// Flips boxed nonbasics whose reduced cost has the wrong sign. Returns
    /// true if the basis is dual feasible afterwards.
    fn make_dual_feasible(&mut self) -> bool {
        let tol = self.opts.optimality_tol;
        let mut ok = true;
        for j in 0..self.n + self.m {
            if self.pos_of[j] != NONBASIC || self.is_fixed(j) {
                continue;
            }
            let dj = self.d[j];
            match self.status[j] {
                BasisStatus::AtLower if dj < -tol => {
                    if self.upper[j].is_finite() {
                        self.status[j] = BasisStatus::AtUpper;
                        self.x[j] = self.upper[j];
                        self.need_xb = true;
                    } else {
                        ok = false;
                    }
                }
                BasisStatus::AtUpper if dj > tol => {
                    if self.lower[j].is_finite() {
                        self.status[j] = BasisStatus::AtLower;
                        self.x[j] = self.lower[j];
                        self.need_xb = true;
                    } else {
                        ok = false;
                    }
                }
                BasisStatus::Free if dj.abs() > tol => ok = false,
                _ => {}
            }
        }
        ok
    }

    fn iteration_limit(&self) -> usize {
        if self.opts.max_iterations > 0 {
            self.opts.max_iterations
        } else {
            20_000 + 50 * (self.n + self.m)
        }
    }

    fn tick(&mut self) -> Result<(), SolverError> {
        self.iterations += 1;
        self.since_refactor += 1;
        if self.iterations > self.iteration_limit() {
            return Err(SolverError::NumericalFailure(format!(
                "iteration limit {} reached",
                self.iteration_limit()
            )));
        }
        Ok(())
    }

    /// Solves the problem from the current basis.
    pub fn solve(&mut self) -> Result<LpSolution, SolverError> {
        let start_iter = self.iterations;
        self.ensure_factor()?;
        let status = if self.primal_infeasibility() == 0.0 {
            to_status(self.primal()?)
        } else {
            self.compute_duals(false);
            let dual_ok = self.make_dual_feasible();
            if dual_ok {
                if self.need_xb {
                    self.compute_xb();
                }
                match self.dual()? {
                    DualEnd::Infeasible => LpStatus::Infeasible,
                    DualEnd::Optimal => to_status(self.primal()?),
                }
            } else {
                if self.need_xb {
                    self.compute_xb();
                }
                to_status(self.primal()?)
            }
        };
        Ok(self.extract(status, self.iterations - start_iter))
    }

    fn extract(&mut self, status: LpStatus, iterations: usize) -> LpSolution {
        let n = self.n;
        let y = if status == LpStatus::Optimal {
            if self.need_xb {
                self.compute_xb();
            }
            self.compute_duals(false)
        } else {
            vec![0.0; self.m]
        };
        let primal: Vec<f64> = self.x[..n].to_vec();
        let objective = self.sign * self.cost[..n].iter().zip(&primal).map(|(c, x)| c * x).sum::<f64>() + self.offset;
        LpSolution {
            status,
            objective_value: if status == LpStatus::Optimal { objective } else { f64::NAN },
            // A basic logical's dual is zero by definition; drop roundoff.
            dual_values: y
                .iter()
                .enumerate()
                .map(|(i, v)| if self.pos_of[n + i] == NONBASIC { self.sign * v } else { 0.0 })
                .collect(),
            reduced_costs: self.d[..n].iter().map(|v| self.sign * v).collect(),
            row_activity: self.x[n..].to_vec(),
            primal_values: primal,
            iterations,
            basis: Some(self.basis()),
        }
    }

    fn primal(&mut self) -> Result<PrimalEnd, SolverError> {
        let n = self.n;
        let m = self.m;
        let ftol = self.opts.feasibility_tol;
        let otol = self.opts.optimality_tol;
        let ptol = self.opts.pivot_tol;
        let mut degenerate = 0usize;
        let mut bland = false;
        let mut alpha = vec![0.0; m];
        loop {
            self.ensure_factor()?;
            let phase_one = self.primal_infeasibility() > 0.0;
            self.compute_duals(phase_one);

            // Pricing.
            let mut entering: Option<(usize, f64)> = None;
            let mut best_score = 0.0;
            for j in 0..n + m {
                if self.pos_of[j] != NONBASIC || self.is_fixed(j) {
                    continue;
                }
                let dj = self.d[j];
                let dir = match self.status[j] {
                    BasisStatus::AtLower if dj < -otol => 1.0,
                    BasisStatus::AtUpper if dj > otol => -1.0,
                    BasisStatus::Free if dj.abs() > otol => -dj.signum(),
                    _ => continue,
                };
                if bland {
                    entering = Some((j, dir));
                    break;
                }
                if dj.abs() > best_score {
                    best_score = dj.abs();
                    entering = Some((j, dir));
                }
            }
            let Some((q, dir)) = entering else {
                return Ok(if phase_one { PrimalEnd::Infeasible } else { PrimalEnd::Optimal });
            };

            alpha.iter_mut().for_each(|a| *a = 0.0);
            self.scatter_column(q, &mut alpha);
            self.factor.as_ref().unwrap().ftran(&mut alpha, &mut self.scratch);

            // Harris ratio test: x_B(p) moves at rate -dir * alpha[p].
            let limit_of = |s: &Self, p: usize, rate: f64, slack: f64| -> Option<(f64, BasisStatus)> {
                let j = s.head[p];
                let x = s.x[j];
                let (l, u) = (s.lower[j], s.upper[j]);
                if rate < 0.0 {
                    if x > u + ftol {
                        if u.is_finite() {
                            Some(((x - u + slack) / -rate, BasisStatus::AtUpper))
                        } else {
                            None
                        }
                    } else if x >= l - ftol && l.is_finite() {
                        Some(((x - l + slack) / -rate, BasisStatus::AtLower))
                    } else {
                        None
                    }
                } else if x < l - ftol {
                    if l.is_finite() {
                        Some(((l - x + slack) / rate, BasisStatus::AtLower))
                    } else {
                        None
                    }
                } else if x <= u + ftol && u.is_finite() {
                    Some(((u - x + slack) / rate, BasisStatus::AtUpper))
                } else {
                    None
                }
            };
            let mut theta_max = f64::INFINITY;
            for p in 0..m {
                let rate = -dir * alpha[p];
                if rate.abs() <= ptol {
                    continue;
                }
                if let Some((t, _)) = limit_of(self, p, rate, ftol) {
                    theta_max = theta_max.min(t);
                }
            }
            let range = self.upper[q] - self.lower[q];
            let mut leave: Option<(usize, f64, BasisStatus)> = None;
            if theta_max.is_finite() {
                let mut best_abs = 0.0;
                for p in 0..m {
                    let rate = -dir * alpha[p];
                    if rate.abs() <= ptol {
                        continue;
                    }
                    if let Some((t, to)) = limit_of(self, p, rate, 0.0) {
                        if t <= theta_max {
                            let better = if bland {
                                match leave {
                                    None => true,
                                    Some((bp, _, _)) => self.head[p] < self.head[bp],
                                }
                            } else {
                                rate.abs() > best_abs
                            };
                            if better {
                                best_abs = rate.abs();
                                leave = Some((p, t.max(0.0), to));
                            }
                        }
                    }
                }
            }

            let flip = range.is_finite() && leave.map_or(true, |(_, t, _)| range <= t);
            if !flip && leave.is_none() {
                if phase_one {
                    return Err(SolverError::NumericalFailure("unbounded phase-one ray".into()));
                }
                return Ok(PrimalEnd::Unbounded);
            }
            self.tick()?;
            let theta = if flip { range } else { leave.unwrap().1 };
            if theta <= 1e-12 {
                degenerate += 1;
                if degenerate > self.opts.bland_after {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
            if theta > 0.0 {
                for p in 0..m {
                    if alpha[p] != 0.0 {
                        self.x[self.head[p]] -= dir * theta * alpha[p];
                    }
                }
            }
            if flip {
                let st = if dir > 0.0 { BasisStatus::AtUpper } else { BasisStatus::AtLower };
                self.status[q] = st;
                self.x[q] = self.nonbasic_value(q, st);
            } else {
                let (r, _, to) = leave.unwrap();
                self.x[q] += dir * theta;
                self.pivot(q, r, to, &alpha);
                self.dse.clear();
            }
        }
    }

    fn pivot(&mut self, entering: usize, r: usize, leaving_to: BasisStatus, alpha: &[f64]) {
        let leaving = self.head[r];
        let st = if self.is_fixed(leaving) { BasisStatus::AtLower } else { leaving_to };
        self.status[leaving] = st;
        self.x[leaving] = self.nonbasic_value(leaving, st);
        self.pos_of[leaving] = NONBASIC;
        self.head[r] = entering;
        self.pos_of[entering] = r;
        self.status[entering] = BasisStatus::Basic;
        self.factor.as_mut().unwrap().update(r, alpha);
    }

    fn dual(&mut self) -> Result<DualEnd, SolverError> {
        let n = self.n;
        let m = self.m;
        let ftol = self.opts.feasibility_tol;
        let otol = self.opts.optimality_tol;
        let ptol = self.opts.pivot_tol;
        let mut degenerate = 0usize;
        let mut bland = false;
        // Pivot row kept sparse: `row_nz` lists the touched entries.
        let mut row = vec![0.0; n + m];
        let mut in_row = vec![false; n + m];
        let mut row_nz: Vec<usize> = Vec::new();
        let mut alpha = vec![0.0; m];
        let mut tau = vec![0.0; m];
        if self.dse.len() != m {
            self.dse = vec![1.0; m];
        }
        self.compute_duals(false);
        loop {
            let refactored = self.factor.as_ref().map_or(true, |f| {
                f.num_updates() >= self.opts.refactor_interval || f.fill_ratio() > 3.0
            });
            self.ensure_factor()?;
            if refactored {
                self.compute_duals(false);
            }

            // Leaving row: largest squared violation over its steepest-edge weight.
            let mut leave: Option<(usize, f64)> = None;
            let mut worst = 0.0;
            for p in 0..m {
                let j = self.head[p];
                let x = self.x[j];
                let viol = if x < self.lower[j] - ftol {
                    self.lower[j] - x
                } else if x > self.upper[j] + ftol {
                    x - self.upper[j]
                } else {
                    continue;
                };
                if bland {
                    if leave.map_or(true, |(bp, _)| j < self.head[bp]) {
                        leave = Some((p, viol));
                    }
                } else {
                    let score = viol * viol / self.dse[p];
                    if score > worst {
                        worst = score;
                        leave = Some((p, viol));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Ok(DualEnd::Optimal);
            };
            let jr = self.head[r];
            let below = self.x[jr] < self.lower[jr];
            let target = if below { self.lower[jr] } else { self.upper[jr] };

            // Pivot row: rho = B^-T e_r, row_j = rho . a_j.
            let mut rho = std::mem::take(&mut self.work2);
            rho.clear();
            rho.resize(m, 0.0);
            rho[r] = 1.0;
            self.factor.as_ref().unwrap().btran(&mut rho, &mut self.scratch);
            tau.copy_from_slice(&rho);
            self.dse[r] = rho.iter().map(|v| v * v).sum();
            for &j in &row_nz {
                row[j] = 0.0;
                in_row[j] = false;
            }
            row_nz.clear();
            for i in 0..m {
                let ri = rho[i];
                if ri == 0.0 {
                    continue;
                }
                for &(j, a) in &self.rows[i] {
                    if !in_row[j] {
                        in_row[j] = true;
                        row_nz.push(j);
                    }
                    row[j] += ri * a;
                }
                in_row[n + i] = true;
                row_nz.push(n + i);
                row[n + i] = -ri;
            }
            // Ascending order keeps Bland's rule and tie-breaking index based.
            row_nz.sort_unstable();
            self.work2 = rho;

            // Dual ratio test (Harris two-pass).
            let eligible = |s: &Self, j: usize, a: f64| -> bool {
                if s.pos_of[j] != NONBASIC || s.is_fixed(j) || a.abs() <= ptol {
                    return false;
                }
                let want_neg = below;
                match s.status[j] {
                    BasisStatus::AtLower => (a < 0.0) == want_neg,
                    BasisStatus::AtUpper => (a > 0.0) == want_neg,
                    BasisStatus::Free => true,
                    BasisStatus::Basic => false,
                }
            };
            let mut theta_max = f64::INFINITY;
            for &j in &row_nz {
                let a = row[j];
                if eligible(self, j, a) {
                    theta_max = theta_max.min((self.d[j].abs() + otol) / a.abs());
                }
            }
            if !theta_max.is_finite() {
                return Ok(DualEnd::Infeasible);
            }
            let mut enter: Option<usize> = None;
            let mut best_abs = 0.0;
            for &j in &row_nz {
                let a = row[j];
                if !eligible(self, j, a) {
                    continue;
                }
                if self.d[j].abs() / a.abs() <= theta_max {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if a.abs() > best_abs {
                        best_abs = a.abs();
                        enter = Some(j);
                    }
                }
            }
            let q = enter.expect("ratio test found a candidate");
            self.tick()?;

            let theta_d = self.d[q] / row[q];
            if theta_d.abs() <= 1e-12 {
                degenerate += 1;
                if degenerate > self.opts.bland_after {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
            for &j in &row_nz {
                if self.pos_of[j] == NONBASIC && row[j] != 0.0 {
                    self.d[j] -= theta_d * row[j];
                }
            }
            self.d[q] = 0.0;

            alpha.iter_mut().for_each(|a| *a = 0.0);
            self.scatter_column(q, &mut alpha);
            self.factor.as_ref().unwrap().ftran(&mut alpha, &mut self.scratch);
            if alpha[r].abs() <= ptol {
                // Row and column disagree: refresh the factorization and retry.
                self.factor = None;
                self.need_xb = true;
                continue;
            }
            self.factor.as_ref().unwrap().ftran(&mut tau, &mut self.scratch);
            let ar = alpha[r];
            let wr = self.dse[r];
            for p in 0..m {
                if p != r && alpha[p] != 0.0 {
                    let k = alpha[p] / ar;
                    self.dse[p] = (self.dse[p] + k * (k * wr - 2.0 * tau[p])).max(1e-8);
                }
            }
            self.dse[r] = (wr / (ar * ar)).max(1e-8);
            let step = (self.x[jr] - target) / alpha[r];
            for p in 0..m {
                if alpha[p] != 0.0 {
                    self.x[self.head[p]] -= step * alpha[p];
                }
            }
            self.x[q] += step;
            let to = if below { BasisStatus::AtLower } else { BasisStatus::AtUpper };
            self.pivot(q, r, to, &alpha);
            self.d[jr] = -theta_d;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::LpBuilder;

    #[test]
    fn fixed_variable_problem() {
        let mut b = LpBuilder::new();
        let x = b.add_var(2.0, 1.5, 1.5);
        b.add_row(0.0, 10.0, &[(x, 1.0)]);
        let lp = b.build();
        let mut s = SimplexSolver::new(&lp, SolverOptions::default()).unwrap();
        let sol = s.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn warm_start_after_bound_change_uses_dual_simplex() {
        // max x + y, x + 2y <= 4, 3x + y <= 6
        let mut b = LpBuilder::new().sense(Sense::Maximize);
        let x = b.add_var(1.0, 0.0, f64::INFINITY);
        let y = b.add_var(1.0, 0.0, f64::INFINITY);
        b.add_row(f64::NEG_INFINITY, 4.0, &[(x, 1.0), (y, 2.0)]);
        b.add_row(f64::NEG_INFINITY, 6.0, &[(x, 3.0), (y, 1.0)]);
        let lp = b.build();
        let mut s = SimplexSolver::new(&lp, SolverOptions::default()).unwrap();
        let first = s.solve().unwrap();
        assert!((first.objective_value - 2.8).abs() < 1e-9);
        s.set_var_bounds(x, 0.0, 1.0);
        let second = s.solve().unwrap();
        // x = 1, y = 1.5
        assert!((second.objective_value - 2.5).abs() < 1e-9);
        assert!(second.iterations <= 3);
    }

    #[test]
    fn repairs_singular_warm_basis() {
        let mut b = LpBuilder::new();
        let x = b.add_var(1.0, 0.0, 10.0);
        let y = b.add_var(1.0, 0.0, 10.0);
        b.add_row(2.0, f64::INFINITY, &[(x, 1.0), (y, 1.0)]);
        b.add_row(4.0, f64::INFINITY, &[(x, 2.0), (y, 2.0)]);
        let lp = b.build();
        let mut s = SimplexSolver::new(&lp, SolverOptions::default()).unwrap();
        s.set_basis(&Basis {
            var_status: vec![BasisStatus::Basic, BasisStatus::Basic],
            row_status: vec![BasisStatus::AtLower, BasisStatus::AtLower],
        })
        .unwrap();
        let sol = s.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value - 2.0).abs() < 1e-9);
    }
}
