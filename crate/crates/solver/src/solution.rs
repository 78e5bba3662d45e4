use std::fmt;

/// Termination status of a solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    /// Proven optimal; for MILPs the relative gap is within the tolerance.
    Optimal,
    Infeasible,
    Unbounded,
    /// Branch-and-bound stopped at its node limit with the gap still open.
    GapLimit,
    /// Branch-and-bound stopped at its time limit with the gap still open.
    TimeLimit,
}

impl Status {
    pub fn has_solution(self) -> bool {
        matches!(self, Status::Optimal | Status::GapLimit | Status::TimeLimit)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Optimal => "Optimal",
            Status::Infeasible => "Infeasible",
            Status::Unbounded => "Unbounded",
            Status::GapLimit => "GapLimit",
            Status::TimeLimit => "TimeLimit",
        })
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub status: Status,
    /// Objective of the returned point (`NaN` when there is none).
    pub objective: f64,
    pub values: Vec<f64>,
    /// Row multipliers of the final LP (the node LP that produced the
    /// incumbent is not tracked, so MILP solutions leave this empty).
    pub duals: Vec<f64>,
    /// Lower bound on the optimal objective.
    pub best_bound: f64,
    /// `(objective - best_bound) / max(1, |objective|)`.
    pub gap: f64,
    pub nodes: usize,
    pub iterations: usize,
}

impl Solution {
    pub(crate) fn without_point(status: Status, iterations: usize) -> Self {
        Solution {
            status,
            objective: f64::NAN,
            values: Vec::new(),
            duals: Vec::new(),
            best_bound: f64::NAN,
            gap: f64::NAN,
            nodes: 0,
            iterations,
        }
    }

    pub fn value(&self, var: crate::VarId) -> f64 {
        self.values[var.0]
    }
}

/// Relative gap used throughout: `(incumbent - bound) / max(1, |incumbent|)`.
pub fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    if !incumbent.is_finite() {
        return f64::INFINITY;
    }
    ((incumbent - bound) / incumbent.abs().max(1.0)).max(0.0)
}
