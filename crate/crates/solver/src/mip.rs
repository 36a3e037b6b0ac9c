//! Branch-and-bound over LP relaxations.
//!
//! Branching uses pseudocosts: the average objective gain per unit of
//! rounding observed on earlier down and up branches of each variable, with
//! the mean over all observed variables standing in for unseen ones. The
//! candidate with the largest product of down and up estimates wins (lowest
//! index on ties). The search dives depth-first, exploring the rounding-direction child
//! first, until an incumbent exists and then switches to best-bound node
//! selection. Each open node carries its integer bounds and the parent basis.

use crate::simplex::{SimplexSolver, WarmStart};
use crate::{LinearProgram, LpStatus, Sense, SolverError, SolverOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct MipSolution {
    pub status: LpStatus,
    pub incumbent_values: Vec<f64>,
    /// NaN unless `status` is `Optimal`.
    pub objective_value: f64,
    /// Best proven bound, in the problem's sense.
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
}

struct Node {
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Parent relaxation value in minimization form.
    bound: f64,
    seq: usize,
    warm: Option<WarmStart>,
    /// Integer index, direction (0 down, 1 up) and rounding distance of the
    /// branch that created this node.
    branched: Option<(usize, usize, f64)>,
}

/// Sums and counts of per-unit objective gains, per integer and direction.
struct Pseudocosts {
    sum: Vec<[f64; 2]>,
    count: Vec<[u32; 2]>,
    total: [f64; 2],
    seen: [u32; 2],
}

impl Pseudocosts {
    fn new(n: usize) -> Self {
        Pseudocosts {
            sum: vec![[0.0; 2]; n],
            count: vec![[0; 2]; n],
            total: [0.0; 2],
            seen: [0; 2],
        }
    }

    fn record(&mut self, k: usize, dir: usize, per_unit: f64) {
        self.sum[k][dir] += per_unit;
        self.count[k][dir] += 1;
        self.total[dir] += per_unit;
        self.seen[dir] += 1;
    }

    fn estimate(&self, k: usize, dir: usize) -> f64 {
        if self.count[k][dir] > 0 {
            self.sum[k][dir] / self.count[k][dir] as f64
        } else if self.seen[dir] > 0 {
            self.total[dir] / self.seen[dir] as f64
        } else {
            1.0
        }
    }
}

pub fn solve_mip(problem: &LinearProgram) -> Result<MipSolution, SolverError> {
    solve_mip_with(problem, &SolverOptions::default())
}

pub fn solve_mip_with(problem: &LinearProgram, opts: &SolverOptions) -> Result<MipSolution, SolverError> {
    let sign = match problem.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let ints: Vec<usize> = (0..problem.num_vars()).filter(|&j| problem.integrality[j]).collect();
    let mut solver = SimplexSolver::new(problem, opts.clone())?;

    let mut root_lower = Vec::with_capacity(ints.len());
    let mut root_upper = Vec::with_capacity(ints.len());
    for &j in &ints {
        let l = problem.var_lower[j];
        let u = problem.var_upper[j];
        let l = if l.is_finite() { (l - opts.integrality_tol).ceil() } else { l };
        let u = if u.is_finite() { (u + opts.integrality_tol).floor() } else { u };
        if l > u {
            return Ok(infeasible(problem.num_vars(), 0, 0));
        }
        root_lower.push(l);
        root_upper.push(u);
    }

    let mut open: Vec<Node> = Vec::new();
    let mut next: Option<Node> = Some(Node {
        lower: root_lower,
        upper: root_upper,
        bound: f64::NEG_INFINITY,
        seq: 0,
        warm: None,
        branched: None,
    });
    let mut pseudo = Pseudocosts::new(ints.len());
    let mut seq = 1usize;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut nodes = 0usize;
    let mut lp_iterations = 0usize;
    let mut root_unbounded = false;

    let prune_level = |inc: &Option<(f64, Vec<f64>)>| -> f64 {
        match inc {
            Some((v, _)) => v - opts.mip_rel_gap * v.abs().max(1.0),
            None => f64::INFINITY,
        }
    };

    loop {
        let node = match next.take() {
            Some(n) => n,
            None => {
                if open.is_empty() {
                    break;
                }
                let idx = if incumbent.is_none() {
                    open.len() - 1
                } else {
                    let mut best = 0;
                    for (k, n) in open.iter().enumerate() {
                        let b = &open[best];
                        if n.bound < b.bound || (n.bound == b.bound && n.seq < b.seq) {
                            best = k;
                        }
                    }
                    best
                };
                open.swap_remove(idx)
            }
        };
        if node.bound >= prune_level(&incumbent) {
            continue;
        }
        nodes += 1;
        if nodes > opts.node_limit {
            let inc = incumbent.map(|(v, x)| {
                let bound = open.iter().map(|n| n.bound).fold(v, f64::min);
                Box::new(finish(sign, v, x, bound, nodes, lp_iterations))
            });
            return Err(SolverError::NodeLimitExceeded {
                limit: opts.node_limit,
                incumbent: inc,
            });
        }
        for (k, &j) in ints.iter().enumerate() {
            solver.set_var_bounds(j, node.lower[k], node.upper[k]);
        }
        if let Some(ws) = node.warm.clone() {
            solver.install(ws);
        }
        let sol = solver.solve()?;
        lp_iterations += sol.iterations;
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                if nodes == 1 {
                    root_unbounded = true;
                    break;
                }
                continue;
            }
            LpStatus::Optimal => {}
        }
        let value = sign * sol.objective_value;
        if let Some((k, dir, dist)) = node.branched {
            if node.bound.is_finite() {
                pseudo.record(k, dir, (value - node.bound).max(0.0) / dist);
            }
        }
        if value >= prune_level(&incumbent) {
            continue;
        }
        let mut branch: Option<(usize, f64)> = None;
        let mut best_score = f64::NEG_INFINITY;
        for (k, &j) in ints.iter().enumerate() {
            let x = sol.primal_values[j];
            if (x - x.round()).abs() <= opts.integrality_tol {
                continue;
            }
            let f = x - x.floor();
            let down = (pseudo.estimate(k, 0) * f).max(1e-6);
            let up = (pseudo.estimate(k, 1) * (1.0 - f)).max(1e-6);
            let score = down * up;
            if score > best_score * (1.0 + 1e-12) {
                best_score = score;
                branch = Some((k, x));
            }
        }
        match branch {
            None => {
                let mut x = sol.primal_values.clone();
                for &j in &ints {
                    x[j] = x[j].round();
                }
                let value = sign * problem.objective(&x);
                if incumbent.as_ref().is_none_or(|(v, _)| value < *v) {
                    incumbent = Some((value, x));
                }
            }
            Some((k, x)) => {
                let warm = solver.warm_start();
                let mut down = Node {
                    lower: node.lower.clone(),
                    upper: node.upper.clone(),
                    bound: value,
                    seq,
                    warm: Some(warm.clone()),
                    branched: Some((k, 0, x - x.floor())),
                };
                down.upper[k] = x.floor();
                let mut up = Node {
                    lower: node.lower,
                    upper: node.upper,
                    bound: value,
                    seq: seq + 1,
                    warm: Some(warm),
                    branched: Some((k, 1, x.ceil() - x)),
                };
                up.lower[k] = x.ceil();
                seq += 2;
                let (first, second) = if x - x.floor() >= 0.5 { (up, down) } else { (down, up) };
                open.push(second);
                next = Some(first);
            }
        }
    }

    if root_unbounded {
        return Ok(MipSolution {
            status: LpStatus::Unbounded,
            incumbent_values: vec![0.0; problem.num_vars()],
            objective_value: f64::NAN,
            bound: sign * f64::NEG_INFINITY,
            gap: f64::INFINITY,
            nodes,
            lp_iterations,
        });
    }
    match incumbent {
        None => Ok(infeasible(problem.num_vars(), nodes, lp_iterations)),
        Some((v, x)) => {
            let bound = open.iter().map(|n| n.bound).fold(v, f64::min);
            Ok(finish(sign, v, x, bound, nodes, lp_iterations))
        }
    }
}

fn finish(sign: f64, value: f64, x: Vec<f64>, bound: f64, nodes: usize, lp_iterations: usize) -> MipSolution {
    let bound = bound.min(value);
    MipSolution {
        status: LpStatus::Optimal,
        incumbent_values: x,
        objective_value: sign * value,
        bound: sign * bound,
        gap: (value - bound) / value.abs().max(1e-9),
        nodes,
        lp_iterations,
    }
}

fn infeasible(n: usize, nodes: usize, lp_iterations: usize) -> MipSolution {
    MipSolution {
        status: LpStatus::Infeasible,
        incumbent_values: vec![0.0; n],
        objective_value: f64::NAN,
        bound: f64::INFINITY,
        gap: f64::INFINITY,
        nodes,
        lp_iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::LpBuilder;

    #[test]
    fn binary_in_open_interval_is_infeasible() {
        let mut b = LpBuilder::new();
        let x = b.add_int_var(1.0, 0.0, 1.0);
        b.add_row(0.4, 0.6, &[(x, 1.0)]);
        let sol = solve_mip(&b.build()).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn small_knapsack() {
        // values 10, 13, 7, 8; weights 3, 4, 2, 3; capacity 5 -> items {0, 2}: 17
        let mut b = LpBuilder::new().sense(Sense::Maximize);
        let v = [10.0, 13.0, 7.0, 8.0];
        let w = [3.0, 4.0, 2.0, 3.0];
        let xs: Vec<usize> = v.iter().map(|&c| b.add_int_var(c, 0.0, 1.0)).collect();
        let row: Vec<(usize, f64)> = xs.iter().zip(w).map(|(&x, w)| (x, w)).collect();
        b.add_row(f64::NEG_INFINITY, 5.0, &row);
        let sol = solve_mip(&b.build()).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value - 17.0).abs() < 1e-9);
        assert!(sol.bound >= sol.objective_value - 1e-9);
    }

    #[test]
    fn node_limit_reports_incumbent() {
        let mut b = LpBuilder::new().sense(Sense::Maximize);
        let xs: Vec<usize> = (0..12).map(|k| b.add_int_var(1.0 + k as f64 * 0.01, 0.0, 1.0)).collect();
        let row: Vec<(usize, f64)> = xs.iter().map(|&x| (x, 2.0)).collect();
        b.add_row(f64::NEG_INFINITY, 11.0, &row);
        let opts = SolverOptions {
            node_limit: 2,
            ..Default::default()
        };
        match solve_mip_with(&b.build(), &opts) {
            Err(SolverError::NodeLimitExceeded { limit, .. }) => assert_eq!(limit, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
