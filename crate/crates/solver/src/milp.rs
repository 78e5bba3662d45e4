//! Best-bound branch-and-bound over binary variables.
//!
//! Each node carries its list of binary fixings and the basis of its parent,
//! which warm starts the dual simplex after the bound change. Registered
//! monotone chains propagate every fixing to the binaries it implies.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::error::SolverError;
use crate::problem::MilpProblem;
use crate::simplex::{BasisSnapshot, LpOutcome, Model, Simplex};
use crate::solution::{relative_gap, Solution, Status};

pub const INTEGRALITY_TOL: f64 = 1e-6;
/// Relative row/bound violation accepted for externally proposed points.
const CANDIDATE_TOL: f64 = 1e-6;
/// Beyond this many open nodes children stop storing their own basis and
/// restart from the root basis instead.
const SNAPSHOT_BUDGET: usize = 4096;

/// Primal heuristic: receives the structural values of a node relaxation and
/// may return a full candidate point. The solver checks feasibility and
/// computes the objective itself.
pub type Heuristic<'a> = dyn Fn(&[f64]) -> Option<Vec<f64>> + 'a;

pub struct MilpOptions<'a> {
    pub gap_tol: f64,
    pub time_limit: Option<Duration>,
    pub node_limit: Option<usize>,
    /// Candidate starting incumbent (checked like heuristic proposals).
    pub mip_start: Option<Vec<f64>>,
    pub heuristic: Option<&'a Heuristic<'a>>,
    /// Run the heuristic at the root and then every this many nodes.
    pub heuristic_every: usize,
}

impl Default for MilpOptions<'_> {
    fn default() -> Self {
        MilpOptions {
            gap_tol: 1e-6,
            time_limit: None,
            node_limit: None,
            mip_start: None,
            heuristic: None,
            heuristic_every: 50,
        }
    }
}

struct Node {
    bound: f64,
    depth: usize,
    id: usize,
    fixings: Vec<(usize, bool)>,
    basis: Arc<BasisSnapshot>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap pops the maximum: lowest bound first, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

struct Incumbent {
    objective: f64,
    values: Vec<f64>,
}

struct Search<'p> {
    problem: &'p MilpProblem,
    is_binary: Vec<bool>,
    chain_of: Vec<Option<(usize, usize)>>,
    incumbent: Option<Incumbent>,
}

impl Search<'_> {
    /// Applies `fix` and everything it implies to `assign` (-1 free, 0, 1).
    /// Returns false on a contradiction.
    fn propagate(
        &self,
        assign: &mut [i8],
        var: usize,
        value: bool,
        out: &mut Vec<(usize, bool)>,
    ) -> bool {
        let mut stack = vec![(var, value)];
        while let Some((v, val)) = stack.pop() {
            let want = val as i8;
            if assign[v] == want {
                continue;
            }
            if assign[v] != -1 {
                return false;
            }
            assign[v] = want;
            out.push((v, val));
            if let Some((c, k)) = self.chain_of[v] {
                let chain = &self.problem.chains()[c];
                if val {
                    if k > 0 {
                        stack.push((chain[k - 1].0, true));
                    }
                } else if k + 1 < chain.len() {
                    stack.push((chain[k + 1].0, false));
                }
            }
        }
        true
    }

    /// Checks a candidate point; on success returns its objective.
    fn check(&self, values: &mut [f64]) -> Option<f64> {
        let lp = &self.problem.lp;
        if values.len() != lp.num_vars() || values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        for (j, v) in values.iter_mut().enumerate() {
            if self.is_binary[j] {
                let r = v.round();
                if (*v - r).abs() > INTEGRALITY_TOL {
                    return None;
                }
                *v = r;
            }
        }
        if lp.max_relative_violation(values) > CANDIDATE_TOL {
            return None;
        }
        Some(lp.objective_value(values))
    }

    fn offer(&mut self, mut values: Vec<f64>) -> bool {
        let Some(obj) = self.check(&mut values) else {
            return false;
        };
        let better = match &self.incumbent {
            None => true,
            Some(inc) => obj < inc.objective - 1e-12 * inc.objective.abs().max(1.0),
        };
        if better {
            log::debug!("new incumbent {obj}");
            self.incumbent = Some(Incumbent {
                objective: obj,
                values,
            });
        }
        better
    }

    fn incumbent_value(&self) -> f64 {
        self.incumbent
            .as_ref()
            .map_or(f64::INFINITY, |i| i.objective)
    }
}

pub(crate) fn branch_and_bound(
    problem: &MilpProblem,
    options: &MilpOptions<'_>,
) -> Result<Solution, SolverError> {
    let start = Instant::now();
    let lp = &problem.lp;
    let nvars = lp.num_vars();
    let mut is_binary = vec![false; nvars];
    for b in problem.binaries() {
        is_binary[b.0] = true;
    }
    let mut chain_of = vec![None; nvars];
    for (c, chain) in problem.chains().iter().enumerate() {
        for (k, v) in chain.iter().enumerate() {
            chain_of[v.0] = Some((c, k));
        }
    }
    let mut search = Search {
        problem,
        is_binary,
        chain_of,
        incumbent: None,
    };
    if let Some(start) = &options.mip_start {
        if !search.offer(start.clone()) {
            log::warn!("MIP start rejected as infeasible");
        }
    }

    let mut engine = Simplex::new(Model::new(lp));
    let root_outcome = engine.solve_dual(f64::INFINITY);
    let mut iterations = engine.iterations;
    match root_outcome {
        LpOutcome::Optimal => {}
        LpOutcome::Infeasible => {
            return Ok(Solution::without_point(Status::Infeasible, iterations))
        }
        LpOutcome::Unbounded => return Ok(Solution::without_point(Status::Unbounded, iterations)),
        LpOutcome::Cutoff | LpOutcome::IterationLimit => {
            return Err(SolverError::Numerical(
                "root relaxation did not converge".into(),
            ))
        }
    }
    let root_basis = Arc::new(engine.snapshot());

    // Original bounds of the binaries; nodes only ever tighten these.
    let base_assign: Vec<i8> = (0..nvars)
        .map(|j| {
            if !search.is_binary[j] {
                -1
            } else if lp.lower()[j] >= 1.0 {
                1
            } else if lp.upper()[j] <= 0.0 {
                0
            } else {
                -1
            }
        })
        .collect();

    let gap_ok = |inc: f64, bound: f64| relative_gap(inc, bound) <= options.gap_tol;
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: engine.objective(),
        depth: 0,
        id: 0,
        fixings: Vec::new(),
        basis: root_basis.clone(),
    });
    let mut next_id = 1usize;
    let mut nodes = 0usize;
    let mut lost_nodes = false;
    let mut stop: Option<Status> = None;
    let mut assign = base_assign.clone();
    let mut fixed_now: Vec<usize> = Vec::new();

    while let Some(node) = heap.peek() {
        let inc = search.incumbent_value();
        if inc.is_finite() && gap_ok(inc, node.bound) {
            break;
        }
        if options.time_limit.is_some_and(|t| start.elapsed() >= t) {
            stop = Some(Status::TimeLimit);
            break;
        }
        if options.node_limit.is_some_and(|n| nodes >= n) {
            stop = Some(Status::GapLimit);
            break;
        }
        let node = heap.pop().expect("peeked");
        nodes += 1;

        // Install the node's bounds.
        for &j in &fixed_now {
            engine.set_bounds(j, lp.lower()[j], lp.upper()[j]);
        }
        fixed_now.clear();
        for &(j, val) in &node.fixings {
            let v = if val { 1.0 } else { 0.0 };
            engine.set_bounds(j, v, v);
            fixed_now.push(j);
        }
        engine.restore(&node.basis);

        let cutoff = if inc.is_finite() {
            inc - options.gap_tol * inc.abs().max(1.0)
        } else {
            f64::INFINITY
        };
        let before = engine.iterations;
        let mut outcome = engine.solve_dual(cutoff);
        if outcome == LpOutcome::IterationLimit {
            engine.restore(&root_basis);
            outcome = engine.solve_primal();
        }
        iterations += engine.iterations - before;
        match outcome {
            LpOutcome::Optimal => {}
            LpOutcome::Infeasible | LpOutcome::Cutoff => continue,
            LpOutcome::Unbounded | LpOutcome::IterationLimit => {
                log::warn!("node {} relaxation failed ({outcome:?}); dropped", node.id);
                lost_nodes = true;
                continue;
            }
        }
        let bound = engine.objective().max(node.bound);
        if inc.is_finite() && (bound >= inc || gap_ok(inc, bound)) {
            continue;
        }
        let values = engine.values();

        // Most fractional free binary.
        let mut branch_var = None;
        let mut best_frac = INTEGRALITY_TOL;
        for b in problem.binaries() {
            let v = values[b.0];
            let frac = (v - v.floor()).min(v.ceil() - v);
            if frac > best_frac {
                best_frac = frac;
                branch_var = Some(b.0);
            }
        }
        let Some(bv) = branch_var else {
            search.offer(values);
            continue;
        };
        if let Some(h) = options.heuristic {
            if nodes == 1
                || (options.heuristic_every > 0 && nodes.is_multiple_of(options.heuristic_every))
            {
                if let Some(cand) = h(&values) {
                    search.offer(cand);
                }
            }
        }
        let inc = search.incumbent_value();
        if inc.is_finite() && gap_ok(inc, bound) {
            continue;
        }

        let basis = if heap.len() < SNAPSHOT_BUDGET {
            Arc::new(engine.snapshot())
        } else {
            root_basis.clone()
        };
        for value in [true, false] {
            assign.copy_from_slice(&base_assign);
            let mut ok = true;
            let mut fixings = Vec::with_capacity(node.fixings.len() + 2);
            for &(j, val) in &node.fixings {
                assign[j] = val as i8;
                fixings.push((j, val));
            }
            ok &= search.propagate(&mut assign, bv, value, &mut fixings);
            if !ok {
                continue;
            }
            heap.push(Node {
                bound,
                depth: node.depth + 1,
                id: next_id,
                fixings,
                basis: basis.clone(),
            });
            next_id += 1;
        }
    }

    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    match search.incumbent {
        None => {
            if stop == Some(Status::TimeLimit) {
                return Err(SolverError::NoIncumbentWithinTimeLimit);
            }
            if stop.is_some() || lost_nodes {
                return Err(SolverError::Numerical(
                    "search ended without a feasible point".into(),
                ));
            }
            let mut s = Solution::without_point(Status::Infeasible, iterations);
            s.nodes = nodes;
            Ok(s)
        }
        Some(inc) => {
            let best_bound = open_bound.min(inc.objective);
            let gap = relative_gap(inc.objective, best_bound);
            let status = match stop {
                Some(s) if gap > options.gap_tol => s,
                _ if lost_nodes => Status::GapLimit,
                _ => Status::Optimal,
            };
            Ok(Solution {
                status,
                objective: inc.objective,
                values: inc.values,
                duals: Vec::new(),
                best_bound,
                gap,
                nodes,
                iterations,
            })
        }
    }
}
