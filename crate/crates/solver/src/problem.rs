//! Problem containers for linear and mixed-binary programs.
//!
//! Problems are built incrementally through [`LpProblem::add_var`] and
//! [`LpProblem::add_constraint`] and are immutable once handed to a solver.

use std::fmt::{self, Write as _};

use crate::error::SolverError;

/// Index of a variable inside a problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Row sense.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, a)| a * values[v.0]).sum()
    }

    /// Amount by which `values` violate this row (zero when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let act = self.activity(values);
        match self.sense {
            Sense::Le => (act - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - act).max(0.0),
            Sense::Eq => (act - self.rhs).abs(),
        }
    }
}

/// A minimization LP: `min c'x` subject to sparse rows and variable bounds.
#[derive(Clone, Debug, Default)]
pub struct LpProblem {
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    constraints: Vec<Constraint>,
    objective_offset: f64,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with bounds `[lower, upper]` (infinite values allowed)
    /// and objective coefficient `cost`.
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> VarId {
        self.names.push(name.into());
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.push(cost);
        VarId(self.names.len() - 1)
    }

    /// Adds a row. Repeated variables are merged and zero coefficients dropped.
    pub fn add_constraint(
        &mut self,
        coeffs: impl IntoIterator<Item = (VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> usize {
        let mut merged: Vec<(VarId, f64)> = Vec::new();
        for (v, a) in coeffs {
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some(entry) => entry.1 += a,
                None => merged.push((v, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        self.constraints.push(Constraint {
            coeffs: merged,
            sense,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn set_cost(&mut self, var: VarId, cost: f64) {
        self.cost[var.0] = cost;
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        self.lower[var.0] = lower;
        self.upper[var.0] = upper;
    }

    pub fn set_rhs(&mut self, row: usize, rhs: f64) {
        self.constraints[row].rhs = rhs;
    }

    /// Constant added to every reported objective value.
    pub fn set_objective_offset(&mut self, offset: f64) {
        self.objective_offset = offset;
    }

    pub fn objective_offset(&self) -> f64 {
        self.objective_offset
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn name(&self, var: VarId) -> &str {
        &self.names[var.0]
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective_offset
            + self
                .cost
                .iter()
                .zip(values)
                .map(|(c, x)| c * x)
                .sum::<f64>()
    }

    /// Largest bound or row violation of `values`, with each violation divided
    /// by `1 + |bound|`.
    pub fn max_relative_violation(&self, values: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (j, &x) in values.iter().enumerate() {
            let lo = self.lower[j];
            let hi = self.upper[j];
            if x < lo {
                worst = worst.max((lo - x) / (1.0 + lo.abs()));
            }
            if x > hi {
                worst = worst.max((x - hi) / (1.0 + hi.abs()));
            }
        }
        for row in &self.constraints {
            worst = worst.max(row.violation(values) / (1.0 + row.rhs.abs()));
        }
        worst
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let n = self.num_vars();
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan()
                || hi.is_nan()
                || lo > hi
                || lo == f64::INFINITY
                || hi == f64::NEG_INFINITY
            {
                return Err(SolverError::MalformedProblem(format!(
                    "variable {} has invalid bounds [{lo}, {hi}]",
                    self.names[j]
                )));
            }
            if !self.cost[j].is_finite() {
                return Err(SolverError::MalformedProblem(format!(
                    "variable {} has non-finite cost",
                    self.names[j]
                )));
            }
        }
        for (i, row) in self.constraints.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(SolverError::MalformedProblem(format!(
                    "row {i} has non-finite rhs"
                )));
            }
            for &(v, a) in &row.coeffs {
                if v.0 >= n {
                    return Err(SolverError::MalformedProblem(format!(
                        "row {i} references undeclared variable {}",
                        v.0
                    )));
                }
                if !a.is_finite() {
                    return Err(SolverError::MalformedProblem(format!(
                        "row {i} has a non-finite coefficient"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Renders the problem in CPLEX LP text format for cross-checking with
    /// external solvers. `binaries` lists variables to declare in a
    /// `Binaries` section.
    pub fn to_lp_format(&self, binaries: &[VarId]) -> String {
        let name = |j: usize| sanitize(&self.names[j], j);
        let mut out = String::new();
        out.push_str("Minimize\n obj:");
        let mut any = false;
        for (j, &c) in self.cost.iter().enumerate() {
            if c != 0.0 {
                write_term(&mut out, c, &name(j));
                any = true;
            }
        }
        if !any {
            out.push_str(" 0 ");
            out.push_str(&name(0));
        }
        if self.objective_offset != 0.0 {
            let _ = write!(out, " {:+}", self.objective_offset);
        }
        out.push_str("\nSubject To\n");
        for (i, row) in self.constraints.iter().enumerate() {
            let _ = write!(out, " c{i}:");
            if row.coeffs.is_empty() {
                write_term(&mut out, 0.0, &name(0));
            }
            for &(v, a) in &row.coeffs {
                write_term(&mut out, a, &name(v.0));
            }
            let _ = writeln!(out, " {} {}", row.sense, row.rhs);
        }
        out.push_str("Bounds\n");
        for j in 0..self.num_vars() {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            let n = name(j);
            match (lo.is_finite(), hi.is_finite()) {
                (false, false) => {
                    let _ = writeln!(out, " {n} free");
                }
                (true, false) => {
                    let _ = writeln!(out, " {n} >= {lo}");
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= {n} <= {hi}");
                }
                (true, true) => {
                    let _ = writeln!(out, " {lo} <= {n} <= {hi}");
                }
            }
        }
        if !binaries.is_empty() {
            out.push_str("Binaries\n");
            for v in binaries {
                let _ = writeln!(out, " {}", name(v.0));
            }
        }
        out.push_str("End\n");
        out
    }
}

fn write_term(out: &mut String, coeff: f64, name: &str) {
    if coeff < 0.0 {
        let _ = write!(out, " - {} {}", -coeff, name);
    } else {
        let _ = write!(out, " + {} {}", coeff, name);
    }
}

fn sanitize(name: &str, index: usize) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "_.[]".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    if cleaned.is_empty()
        || cleaned
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_digit() || c == '.')
    {
        format!("x{index}_{cleaned}")
    } else {
        cleaned
    }
}

/// An LP with a subset of variables restricted to {0, 1}.
///
/// `chains` are ordered groups of binaries constrained to be monotone
/// non-increasing (`u[0] >= u[1] >= ...`). The branch-and-bound uses them to
/// propagate fixings: setting `u[k] = 1` implies every earlier member is 1,
/// setting `u[k] = 0` implies every later member is 0.
#[derive(Clone, Debug, Default)]
pub struct MilpProblem {
    pub lp: LpProblem,
    binaries: Vec<VarId>,
    chains: Vec<Vec<VarId>>,
}

impl MilpProblem {
    pub fn new(lp: LpProblem) -> Self {
        Self {
            lp,
            binaries: Vec::new(),
            chains: Vec::new(),
        }
    }

    pub fn mark_binary(&mut self, var: VarId) {
        self.binaries.push(var);
    }

    /// Registers a monotone chain. The caller is expected to also add the
    /// corresponding `u[k] <= u[k-1]` rows if they are part of the model;
    /// the chain itself is only a branching hint.
    pub fn add_chain(&mut self, chain: Vec<VarId>) {
        self.chains.push(chain);
    }

    pub fn binaries(&self) -> &[VarId] {
        &self.binaries
    }

    pub fn chains(&self) -> &[Vec<VarId>] {
        &self.chains
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        self.lp.validate()?;
        let mut sorted: Vec<usize> = self.binaries.iter().map(|b| b.0).collect();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(SolverError::MalformedProblem(
                "a variable is marked binary twice".into(),
            ));
        }
        for &b in &self.binaries {
            if b.0 >= self.lp.num_vars() {
                return Err(SolverError::MalformedProblem(format!(
                    "binary {} is undeclared",
                    b.0
                )));
            }
            let (lo, hi) = (self.lp.lower[b.0], self.lp.upper[b.0]);
            if lo < 0.0 || hi > 1.0 {
                return Err(SolverError::MalformedProblem(format!(
                    "binary {} must be bounded within [0, 1], got [{lo}, {hi}]",
                    self.lp.names[b.0]
                )));
            }
        }
        let mut is_binary = vec![false; self.lp.num_vars()];
        for &b in &self.binaries {
            is_binary[b.0] = true;
        }
        for chain in &self.chains {
            for v in chain {
                if v.0 >= is_binary.len() || !is_binary[v.0] {
                    return Err(SolverError::MalformedProblem(format!(
                        "chain member {} is not binary",
                        self.lp.names[v.0]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_lp_format(&self) -> String {
        self.lp.to_lp_format(&self.binaries)
    }
}
