//! Repeated solves of one LP that differ only in bounds and right-hand sides.

use crate::error::SolverError;
use crate::problem::{LpProblem, VarId};
use crate::simplex::{BasisSnapshot, LpOutcome, Model, Simplex};
use crate::solution::{Solution, Status};

const VERIFY_TOL: f64 = 1e-7;

/// An LP kept in factorized form between solves.
///
/// The first solve fixes a *home* basis. Every later [`LpSession::solve`]
/// starts the dual simplex from that same basis, so a solve's result depends
/// only on the current data and never on the order of earlier solves. This
/// keeps sessions safe to pool across worker threads without giving up
/// bit-reproducibility.
pub struct LpSession {
    problem: LpProblem,
    engine: Simplex,
    home: Option<BasisSnapshot>,
}

impl LpSession {
    pub fn new(problem: LpProblem) -> Result<Self, SolverError> {
        problem.validate()?;
        let engine = Simplex::new(Model::new(&problem));
        Ok(LpSession {
            problem,
            engine,
            home: None,
        })
    }

    pub fn problem(&self) -> &LpProblem {
        &self.problem
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        self.problem.set_bounds(var, lower, upper);
        self.engine.set_bounds(var.0, lower, upper);
    }

    pub fn set_rhs(&mut self, row: usize, rhs: f64) {
        self.problem.set_rhs(row, rhs);
        self.engine.set_rhs(row, rhs);
    }

    pub fn solve(&mut self) -> Result<Solution, SolverError> {
        let before = self.engine.iterations;
        let mut outcome = match &self.home {
            Some(home) => {
                self.engine.restore(home);
                self.engine.solve_dual(f64::INFINITY)
            }
            None => self.engine.solve_primal(),
        };
        if outcome == LpOutcome::Optimal
            && self.problem.max_relative_violation(&self.engine.values()) > VERIFY_TOL
        {
            outcome = self.cold_solve();
        }
        if outcome == LpOutcome::IterationLimit {
            outcome = self.cold_solve();
        }
        let iterations = self.engine.iterations - before;
        match outcome {
            LpOutcome::Optimal => {
                if self.home.is_none() {
                    self.home = Some(self.engine.snapshot());
                }
                let values = self.engine.values();
                let objective = self.problem.objective_value(&values);
                Ok(Solution {
                    status: Status::Optimal,
                    objective,
                    values,
                    duals: self.engine.duals(),
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

    /// Primal simplex from the all-logical basis. The home basis, once set,
    /// is kept so later solves still start from the same place.
    fn cold_solve(&mut self) -> LpOutcome {
        self.engine = Simplex::new(Model::new(&self.problem));
        self.engine.solve_primal()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Sense;
    use crate::solve_lp;

    #[test]
    fn resolves_match_fresh_solves_in_any_order() {
        let mut lp = LpProblem::new();
        let a = lp.add_var("a", 0.0, 50.0, 3.0);
        let b = lp.add_var("b", 0.0, 80.0, 5.0);
        let shed = lp.add_var("shed", 0.0, f64::INFINITY, 1000.0);
        let row = lp.add_constraint([(a, 1.0), (b, 1.0), (shed, 1.0)], Sense::Eq, 10.0);
        let mut session = LpSession::new(lp.clone()).unwrap();
        let demands = [10.0, 70.0, 140.0, 0.0, 45.0, 130.0];
        let mut first = Vec::new();
        for &d in &demands {
            session.set_rhs(row, d);
            first.push(session.solve().unwrap());
        }
        for (k, &d) in demands.iter().enumerate().rev() {
            session.set_rhs(row, d);
            let again = session.solve().unwrap();
            assert_eq!(again.values, first[k].values);
            let mut fresh = lp.clone();
            fresh.set_rhs(row, d);
            let reference = solve_lp(&fresh).unwrap();
            assert!((reference.objective - again.objective).abs() < 1e-9);
        }
        // 140 exceeds capacity: 10 MW shed.
        assert!((first[2].objective - (150.0 + 400.0 + 10_000.0)).abs() < 1e-9);
    }
}
