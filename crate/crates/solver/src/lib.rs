//! Self-contained LP and binary MILP solver.
//!
//! ```
//! use presched_solver::{solve_lp, LpProblem, Sense, Status};
//!
//! let mut lp = LpProblem::new();
//! let x = lp.add_var("x", 0.0, f64::INFINITY, 1.0);
//! lp.add_constraint([(x, 1.0)], Sense::Ge, 3.0);
//! let sol = solve_lp(&lp).unwrap();
//! assert_eq!(sol.status, Status::Optimal);
//! assert!((sol.objective - 3.0).abs() < 1e-9);
//! ```

mod error;
mod lu;
mod milp;
mod problem;
mod session;
mod simplex;
mod solution;

pub use error::SolverError;
pub use milp::{Heuristic, MilpOptions, INTEGRALITY_TOL};
pub use problem::{Constraint, LpProblem, MilpProblem, Sense, VarId};
pub use session::LpSession;
pub use solution::{relative_gap, Solution, Status};

use simplex::{LpOutcome, Model, Simplex};

/// Relative violation above which an LP point is re-polished from scratch.
const POLISH_TOL: f64 = 1e-9;

/// Solves a minimization LP with the two-phase primal simplex method.
pub fn solve_lp(problem: &LpProblem) -> Result<Solution, SolverError> {
    problem.validate()?;
    let mut engine = Simplex::new(Model::new(problem));
    let mut outcome = engine.solve_primal();
    if outcome == LpOutcome::Optimal
        && problem.max_relative_violation(&engine.values()) > POLISH_TOL
    {
        // Fresh factorization from the final basis usually removes drift.
        outcome = engine.solve_primal();
    }
    let iterations = engine.iterations;
    match outcome {
        LpOutcome::Optimal => {
            let values = engine.values();
            let objective = problem.objective_value(&values);
            Ok(Solution {
                status: Status::Optimal,
                objective,
                values,
                duals: engine.duals(),
                best_bound: objective,
                gap: 0.0,
                nodes: 0,
                iterations,
            })
        }
        LpOutcome::Infeasible => Ok(Solution::without_point(Status::Infeasible, iterations)),
        LpOutcome::Unbounded => Ok(Solution::without_point(Status::Unbounded, iterations)),
        LpOutcome::Cutoff | LpOutcome::IterationLimit => Err(SolverError::Numerical(format!(
            "simplex stopped after {iterations} iterations"
        ))),
    }
}

/// Solves a MILP over binary variables by branch-and-bound.
///
/// Returns `Optimal` once the relative gap is within `options.gap_tol`;
/// otherwise `GapLimit` (node limit) or `TimeLimit` with the best incumbent.
pub fn solve_milp(
    problem: &MilpProblem,
    options: &MilpOptions<'_>,
) -> Result<Solution, SolverError> {
    problem.validate()?;
    if options.gap_tol.is_nan() || options.gap_tol < 0.0 {
        return Err(SolverError::MalformedProblem(
            "gap tolerance must be non-negative".into(),
        ));
    }
    if problem.binaries().is_empty() {
        return solve_lp(&problem.lp);
    }
    milp::branch_and_bound(problem, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_bounded_minimum() {
        let mut lp = LpProblem::new();
        let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        lp.add_constraint([(x, 1.0)], Sense::Ge, 3.0);
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - 3.0).abs() < 1e-9);
        assert!((s.value(x) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut lp = LpProblem::new();
        let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 0.0);
        lp.add_constraint([(x, 1.0)], Sense::Le, 1.0);
        lp.add_constraint([(x, 1.0)], Sense::Ge, 2.0);
        assert_eq!(solve_lp(&lp).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut lp = LpProblem::new();
        let x = lp.add_var("x", 0.0, f64::INFINITY, -1.0);
        let y = lp.add_var("y", 0.0, f64::INFINITY, 0.0);
        lp.add_constraint([(x, 1.0), (y, -1.0)], Sense::Le, 1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, Status::Unbounded);
    }

    #[test]
    fn knapsack_by_branching() {
        let mut lp = LpProblem::new();
        let a = lp.add_var("a", 0.0, 1.0, -3.0);
        let b = lp.add_var("b", 0.0, 1.0, -2.0);
        lp.add_constraint([(a, 1.0), (b, 1.0)], Sense::Le, 1.0);
        let mut milp = MilpProblem::new(lp);
        milp.mark_binary(a);
        milp.mark_binary(b);
        let s = solve_milp(&milp, &MilpOptions::default()).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective + 3.0).abs() < 1e-9);
        assert_eq!(s.value(a), 1.0);
        assert_eq!(s.value(b), 0.0);
    }

    #[test]
    fn fractional_relaxation_needs_branching() {
        // max 5a + 4b + 3c s.t. 2a + 3b + c <= 4; the LP optimum is fractional in b.
        let mut lp = LpProblem::new();
        let a = lp.add_var("a", 0.0, 1.0, -5.0);
        let b = lp.add_var("b", 0.0, 1.0, -4.0);
        let c = lp.add_var("c", 0.0, 1.0, -3.0);
        lp.add_constraint([(a, 2.0), (b, 3.0), (c, 1.0)], Sense::Le, 4.0);
        let mut milp = MilpProblem::new(lp);
        for v in [a, b, c] {
            milp.mark_binary(v);
        }
        let s = solve_milp(&milp, &MilpOptions::default()).unwrap();
        assert_eq!(s.status, Status::Optimal);
        // Best feasible subset is {a, c} with value 8.
        assert!((s.objective + 8.0).abs() < 1e-9);
        assert!(s.best_bound <= s.objective + 1e-9);
    }

    #[test]
    fn chain_propagation_respects_order() {
        // Chain u0 >= u1 >= u2 with rewards only on later members.
        let mut lp = LpProblem::new();
        let u: Vec<VarId> = (0..3)
            .map(|k| lp.add_var(format!("u{k}"), 0.0, 1.0, [1.0, 1.0, -5.0][k]))
            .collect();
        lp.add_constraint([(u[1], 1.0), (u[0], -1.0)], Sense::Le, 0.0);
        lp.add_constraint([(u[2], 1.0), (u[1], -1.0)], Sense::Le, 0.0);
        let mut milp = MilpProblem::new(lp);
        for &v in &u {
            milp.mark_binary(v);
        }
        milp.add_chain(u.clone());
        let s = solve_milp(&milp, &MilpOptions::default()).unwrap();
        assert!((s.objective + 3.0).abs() < 1e-9);
        assert_eq!(s.values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn pure_lp_milp_matches_lp() {
        let mut lp = LpProblem::new();
        let x = lp.add_var("x", 0.0, 10.0, 2.0);
        let y = lp.add_var("y", 0.0, 10.0, 3.0);
        lp.add_constraint([(x, 1.0), (y, 1.0)], Sense::Ge, 4.0);
        lp.add_constraint([(x, 1.0), (y, -1.0)], Sense::Le, 1.0);
        let a = solve_lp(&lp).unwrap();
        let b = solve_milp(&MilpProblem::new(lp), &MilpOptions::default()).unwrap();
        assert_eq!(a.status, b.status);
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn malformed_bounds_rejected() {
        let mut lp = LpProblem::new();
        lp.add_var("x", 2.0, 1.0, 0.0);
        assert!(matches!(
            solve_lp(&lp),
            Err(SolverError::MalformedProblem(_))
        ));
    }
}
