use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("malformed problem: {0}")]
    MalformedProblem(String),
    #[error("no feasible incumbent found before the time limit")]
    NoIncumbentWithinTimeLimit,
    #[error("numerical failure: {0}")]
    Numerical(String),
}
