//! LP and MIP solving for the scheduling and policy layers.
//!
//! The LP engine is a bounded revised simplex with a sparse LU basis factor,
//! primal and dual phases, and warm starts. MIPs are solved by
//! branch-and-bound over LP relaxations that reuse the parent basis.
//!
//! ```
//! use cascadesim_solver::{solve_lp, LpBuilder, LpStatus};
//!
//! let mut b = LpBuilder::new();
//! let x = b.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
//! b.add_row(3.0, f64::INFINITY, &[(x, 1.0)]);
//! let sol = solve_lp(&b.build()).unwrap();
//! assert_eq!(sol.status, LpStatus::Optimal);
//! assert!((sol.objective_value - 3.0).abs() < 1e-12);
//! assert!((sol.dual_values[0] - 1.0).abs() < 1e-12);
//! ```

mod lu;
mod mip;
pub mod mps;
mod problem;
mod simplex;

pub use mip::{solve_mip, solve_mip_with, MipSolution};
pub use problem::{CscMatrix, LinearProgram, LpBuilder, RowSpec, Sense};
pub use simplex::{Basis, BasisStatus, SimplexSolver};

/// Errors raised by the solver entry points.
#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("malformed problem: {0}")]
    MalformedProblem(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("branch-and-bound node limit of {limit} exceeded")]
    NodeLimitExceeded {
        limit: usize,
        /// Best solution found before the limit, if any.
        incumbent: Option<Box<MipSolution>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Tolerances and limits. Defaults: feasibility 1e-7, integrality 1e-6,
/// relative MIP gap 1e-6, Bland's rule after 50 degenerate pivots.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    pub integrality_tol: f64,
    pub mip_rel_gap: f64,
    pub bland_after: usize,
    /// Simplex iteration cap per solve; 0 picks a size-dependent default.
    pub max_iterations: usize,
    pub refactor_interval: usize,
    pub node_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-7,
            optimality_tol: 1e-7,
            pivot_tol: 1e-9,
            integrality_tol: 1e-6,
            mip_rel_gap: 1e-6,
            bland_after: 50,
            max_iterations: 0,
            refactor_interval: 80,
            node_limit: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal_values: Vec<f64>,
    /// Sensitivity of the objective to each row bound, in the problem's sense.
    pub dual_values: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub row_activity: Vec<f64>,
    /// NaN unless `status` is `Optimal`.
    pub objective_value: f64,
    pub iterations: usize,
    pub basis: Option<Basis>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Solves a pure LP with default options.
pub fn solve_lp(problem: &LinearProgram) -> Result<LpSolution, SolverError> {
    solve_lp_with(problem, &SolverOptions::default())
}

pub fn solve_lp_with(problem: &LinearProgram, opts: &SolverOptions) -> Result<LpSolution, SolverError> {
    if problem.has_integers() {
        return Err(SolverError::MalformedProblem(
            "integrality mask set; use solve_mip or solve_relaxation".into(),
        ));
    }
    solve_relaxation(problem, opts)
}

/// Solves the LP relaxation, ignoring the integrality mask.
pub fn solve_relaxation(problem: &LinearProgram, opts: &SolverOptions) -> Result<LpSolution, SolverError> {
    let mut s = SimplexSolver::new(problem, opts.clone())?;
    s.solve()
}

/// Appends `new_rows` to `problem` and re-solves, warm-starting from the basis
/// of `prior`.
pub fn resolve_with_added_rows(
    problem: &mut LinearProgram,
    prior: &LpSolution,
    new_rows: &[RowSpec],
) -> Result<LpSolution, SolverError> {
    let m0 = problem.num_rows();
    problem.append_rows(new_rows)?;
    problem.check()?;
    let mut s = SimplexSolver::new(problem, SolverOptions::default())?;
    if let Some(b) = &prior.basis {
        if b.var_status.len() == problem.num_vars() && b.row_status.len() == m0 {
            s.set_basis(b)?;
        }
    }
    s.solve()
}
