//! Empirical risk minimization of two-stage cost over affine rules.
//!
//! For a fixed coefficient vector the lower level is fully determined: the
//! forward schedule is the merit-order fill of `qᵀx` and balancing is an LP.
//! The MILP therefore equals `min_q F(q)` with `F(q) = Σ w_i c_i(qᵀx_i)`,
//! which suggests a cheap primal heuristic: pattern search directly in
//! q-space, scored with the real dispatch and balancing models. Those points
//! seed branch-and-bound as incumbents; the MILP supplies the bound.

use std::cell::RefCell;
use std::time::{Duration, Instant};

use presched_solver::{
    relative_gap, solve_lp, solve_milp, LpProblem, MilpOptions, MilpProblem, Sense, Solution,
    Status, VarId,
};
use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans, pam, KMEANS_RESTARTS};
use crate::dispatch::{
    forward_dispatch, BalanceResult, Balancer, DispatchResult, DEFAULT_SLACK_PENALTY,
};
use crate::error::{Error, Result};
use crate::exec::{par_map, par_map_init};
use crate::model::{AffineRule, PrescriptionModel};
use crate::sample::{normalized_weights, validate_samples, Sample};
use crate::system::PowerSystem;

/// Default branch-and-bound node budget of one training run.
pub const DEFAULT_NODE_LIMIT: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gap_tol: f64,
    /// Seconds; `None` means unlimited. Runs with a time limit are not
    /// reproducible bit for bit.
    pub time_limit: Option<f64>,
    /// Branch-and-bound nodes for the whole run. Partitioned training
    /// shares them among clusters in proportion to their training points,
    /// so the budget does not grow with the number of clusters.
    pub node_limit: Option<usize>,
    pub seed: u64,
    pub penalty: f64,
    /// Seed branch-and-bound with the q-space search.
    pub heuristic: bool,
    /// Run the heuristic every this many nodes.
    pub heuristic_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gap_tol: 1e-6,
            time_limit: None,
            node_limit: Some(DEFAULT_NODE_LIMIT),
            seed: 0,
            penalty: DEFAULT_SLACK_PENALTY,
            heuristic: true,
            heuristic_every: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gap_tol >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gap tolerance must be non-negative, got {}",
                self.gap_tol
            )));
        }
        if let Some(t) = self.time_limit {
            if !(t > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "time limit must be positive, got {t}"
                )));
            }
        }
        if !(self.penalty > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "penalty must be positive, got {}",
                self.penalty
            )));
        }
        Ok(())
    }
}

/// Column layout of the estimation problem for one sample.
#[derive(Clone, Copy, Debug)]
struct Block {
    base: usize,
    gens: usize,
    lines: usize,
    nodes: usize,
    binaries: bool,
}

impl Block {
    fn p(&self, g: usize) -> VarId {
        VarId(self.base + g)
    }
    fn up(&self, g: usize) -> VarId {
        VarId(self.base + self.gens + g)
    }
    fn down(&self, g: usize) -> VarId {
        VarId(self.base + 2 * self.gens + g)
    }
    fn flow(&self, l: usize) -> VarId {
        VarId(self.base + 3 * self.gens + l)
    }
    fn shed(&self, b: usize) -> VarId {
        VarId(self.base + 3 * self.gens + self.lines + b)
    }
    fn spill(&self, b: usize) -> VarId {
        VarId(self.base + 3 * self.gens + self.lines + self.nodes + b)
    }
    fn u(&self, g: usize) -> VarId {
        debug_assert!(self.binaries);
        VarId(self.base + 3 * self.gens + self.lines + 2 * self.nodes + g)
    }
}

/// The estimation problem together with its column layout.
///
/// Coefficients are solved in scaled form: feature `j` is divided by
/// `scale[j] = max_i |x_ij|`, so the coefficient columns are well
/// conditioned whatever the feature magnitudes.
pub struct EstimationMilp {
    pub milp: MilpProblem,
    q: Vec<VarId>,
    scale: Vec<f64>,
    blocks: Vec<Block>,
}

impl EstimationMilp {
    pub fn q_dim(&self) -> usize {
        self.q.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.milp.binaries().len()
    }

    pub fn num_chains(&self) -> usize {
        self.milp.chains().len()
    }

    pub fn feature_scale(&self) -> &[f64] {
        &self.scale
    }

    /// Coefficients in original feature units.
    pub fn coefficients(&self, values: &[f64]) -> Vec<f64> {
        self.q
            .iter()
            .zip(&self.scale)
            .map(|(&v, s)| values[v.0] / s)
            .collect()
    }

    /// Forward schedules of every sample in a solution.
    pub fn schedules(&self, values: &[f64]) -> Vec<Vec<f64>> {
        self.blocks
            .iter()
            .map(|b| (0..b.gens).map(|g| values[b.p(g).0]).collect())
            .collect()
    }

    fn scaled_q(&self, values: &[f64]) -> Vec<f64> {
        self.q.iter().map(|v| values[v.0]).collect()
    }

    /// Full MILP point for scaled coefficients and the per-sample lower-level
    /// solutions they induce.
    fn candidate(&self, q: &[f64], levels: &[(DispatchResult, BalanceResult)]) -> Vec<f64> {
        let mut x = vec![0.0; self.milp.lp.num_vars()];
        for (v, &val) in self.q.iter().zip(q) {
            x[v.0] = val;
        }
        let caps: Vec<f64> = self.milp.lp.upper()[..].to_vec();
        for (b, (fwd, bal)) in self.blocks.iter().zip(levels) {
            for g in 0..b.gens {
                x[b.p(g).0] = fwd.schedule[g];
                x[b.up(g).0] = bal.up[g];
                x[b.down(g).0] = bal.down[g];
                if b.binaries {
                    x[b.u(g).0] = if fwd.schedule[g] >= caps[b.p(g).0] {
                        1.0
                    } else {
                        0.0
                    };
                }
            }
            for l in 0..b.lines {
                x[b.flow(l).0] = bal.flows[l];
            }
            for n in 0..b.nodes {
                x[b.shed(n).0] = bal.shed[n];
                x[b.spill(n).0] = bal.spill[n];
            }
        }
        x
    }
}

fn feature_scale(samples: &[Sample], dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|j| {
            let m = samples
                .iter()
                .map(|s| s.features[j].abs())
                .fold(0.0, f64::max);
            if m > 0.0 {
                m
            } else {
                1.0
            }
        })
        .collect()
}

/// Builds the estimation MILP: per sample a forward schedule tied to the
/// affine prescription, merit-order binaries, and the balancing model; the
/// objective is the weighted two-stage cost.
pub fn build_estimation_milp(system: &PowerSystem, samples: &[Sample]) -> Result<EstimationMilp> {
    build(system, samples, DEFAULT_SLACK_PENALTY, true)
}

fn build(
    system: &PowerSystem,
    samples: &[Sample],
    penalty: f64,
    merit_order: bool,
) -> Result<EstimationMilp> {
    let nodes = system.nodes().len();
    let dim = validate_samples(samples, nodes)?;
    let weights = normalized_weights(samples);
    let scale = feature_scale(samples, dim);
    let gens = system.generators();
    let lines = system.lines();

    let mut lp = LpProblem::new();
    let q: Vec<VarId> = (0..dim)
        .map(|j| lp.add_var(format!("q{j}"), f64::NEG_INFINITY, f64::INFINITY, 0.0))
        .collect();
    let mut blocks = Vec::with_capacity(samples.len());
    let mut chains = Vec::new();
    for (i, (s, &w)) in samples.iter().zip(&weights).enumerate() {
        let block = Block {
            base: lp.num_vars(),
            gens: gens.len(),
            lines: lines.len(),
            nodes,
            binaries: merit_order,
        };
        for g in gens {
            lp.add_var(format!("p_{}_{i}", g.id), 0.0, g.capacity, w * g.cost);
        }
        for g in gens {
            lp.add_var(format!("ru_{}_{i}", g.id), 0.0, g.up_limit, w * g.up_cost);
        }
        for g in gens {
            lp.add_var(
                format!("rd_{}_{i}", g.id),
                0.0,
                g.down_limit,
                -w * g.down_cost,
            );
        }
        for l in lines {
            let cap = l.capacity.unwrap_or(f64::INFINITY);
            lp.add_var(format!("f_{}_{i}", l.id), -cap, cap, 0.0);
        }
        for n in system.nodes() {
            lp.add_var(format!("shed_{n}_{i}"), 0.0, f64::INFINITY, w * penalty);
        }
        for n in system.nodes() {
            lp.add_var(format!("spill_{n}_{i}"), 0.0, f64::INFINITY, w * penalty);
        }
        if merit_order {
            for g in gens {
                lp.add_var(format!("u_{}_{i}", g.id), 0.0, 1.0, 0.0);
            }
        }

        for (g, gen) in gens.iter().enumerate() {
            let out = [(block.p(g), 1.0), (block.up(g), 1.0), (block.down(g), -1.0)];
            lp.add_constraint(out, Sense::Ge, 0.0);
            lp.add_constraint(out, Sense::Le, gen.capacity);
        }
        for b in 0..nodes {
            let mut terms = Vec::new();
            for (g, &node) in system.generator_nodes().iter().enumerate() {
                if node == b {
                    terms.extend([(block.p(g), 1.0), (block.up(g), 1.0), (block.down(g), -1.0)]);
                }
            }
            for (l, &(from, to)) in system.line_ends().iter().enumerate() {
                if from == b {
                    terms.push((block.flow(l), -1.0));
                }
                if to == b {
                    terms.push((block.flow(l), 1.0));
                }
            }
            terms.push((block.shed(b), 1.0));
            terms.push((block.spill(b), -1.0));
            lp.add_constraint(terms, Sense::Eq, s.nodal_loads[b]);
        }
        // Σ_g p_g = qᵀx (scaled features).
        let mut terms: Vec<(VarId, f64)> = (0..gens.len()).map(|g| (block.p(g), 1.0)).collect();
        terms.extend(
            q.iter()
                .zip(&s.features)
                .zip(&scale)
                .map(|((&v, x), sc)| (v, -x / sc)),
        );
        lp.add_constraint(terms, Sense::Eq, 0.0);

        if merit_order {
            for (g, gen) in gens.iter().enumerate() {
                lp.add_constraint(
                    [(block.u(g), gen.capacity), (block.p(g), -1.0)],
                    Sense::Le,
                    0.0,
                );
                if g > 0 {
                    lp.add_constraint(
                        [(block.p(g), 1.0), (block.u(g - 1), -gen.capacity)],
                        Sense::Le,
                        0.0,
                    );
                    lp.add_constraint([(block.u(g), 1.0), (block.u(g - 1), -1.0)], Sense::Le, 0.0);
                }
            }
            chains.push((0..gens.len()).map(|g| block.u(g)).collect::<Vec<_>>());
        }
        blocks.push(block);
    }
    let mut milp = MilpProblem::new(lp);
    for chain in chains {
        for &u in &chain {
            milp.mark_binary(u);
        }
        milp.add_chain(chain);
    }
    Ok(EstimationMilp {
        milp,
        q,
        scale,
        blocks,
    })
}

/// `F(q)` in scaled coefficients, scored with the actual dispatch and
/// balancing models.
struct Scorer<'a> {
    system: &'a PowerSystem,
    features: Vec<Vec<f64>>,
    loads: Vec<&'a [f64]>,
    weights: Vec<f64>,
    penalty: f64,
}

impl<'a> Scorer<'a> {
    fn new(system: &'a PowerSystem, samples: &'a [Sample], scale: &[f64], penalty: f64) -> Self {
        Scorer {
            system,
            features: samples
                .iter()
                .map(|s| s.features.iter().zip(scale).map(|(x, sc)| x / sc).collect())
                .collect(),
            loads: samples.iter().map(|s| s.nodal_loads.as_slice()).collect(),
            weights: normalized_weights(samples),
            penalty,
        }
    }

    fn prescriptions(&self, q: &[f64]) -> Option<Vec<f64>> {
        let cap = self.system.total_capacity();
        let tol = 1e-9 * (1.0 + cap);
        self.features
            .iter()
            .map(|z| {
                let v: f64 = q.iter().zip(z).map(|(a, b)| a * b).sum();
                (v >= -tol && v <= cap + tol).then(|| v.clamp(0.0, cap))
            })
            .collect()
    }

    fn levels(&self, q: &[f64]) -> Option<Vec<(DispatchResult, BalanceResult)>> {
        let pres = self.prescriptions(q)?;
        let idx: Vec<usize> = (0..pres.len()).collect();
        let out = par_map_init(
            &idx,
            || Balancer::with_penalty(self.system, self.penalty),
            |bal, &i| -> Result<(DispatchResult, BalanceResult)> {
                let bal = bal
                    .as_mut()
                    .map_err(|e| Error::SolverFailure(e.to_string()))?;
                let fwd = forward_dispatch(self.system, pres[i])?;
                let res = bal.balance(&fwd, self.loads[i])?;
                Ok((fwd, res))
            },
        );
        out.into_iter().collect::<Result<Vec<_>>>().ok()
    }

    /// `+∞` when some prescription leaves the dispatchable range.
    fn value(&self, q: &[f64]) -> f64 {
        match self.levels(q) {
            Some(levels) => levels
                .iter()
                .zip(&self.weights)
                .map(|((_, b), w)| w * b.total_cost)
                .sum(),
            None => f64::INFINITY,
        }
    }
}

/// Poll directions: coordinate axes and pairwise diagonals.
fn directions(dim: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for j in 0..dim {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; dim];
            d[j] = s;
            dirs.push(d);
        }
    }
    for j in 0..dim {
        for k in j + 1..dim {
            for (a, b) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut d = vec![0.0; dim];
                d[j] = a;
                d[k] = b;
                dirs.push(d);
            }
        }
    }
    dirs
}

/// Opportunistic compass search; the step doubles after a success and
/// halves after a failed poll.
fn compass(
    scorer: &Scorer<'_>,
    mut q: Vec<f64>,
    mut f: f64,
    step: f64,
    min_step: f64,
    budget: usize,
) -> (Vec<f64>, f64) {
    let dirs = directions(q.len());
    let mut step = step;
    let mut evals = 0;
    let max_step = step * 64.0;
    while step >= min_step && evals < budget {
        let mut moved = false;
        for d in &dirs {
            let trial: Vec<f64> = q.iter().zip(d).map(|(a, b)| a + step * b).collect();
            let ft = scorer.value(&trial);
            evals += 1;
            if ft < f - 1e-12 * f.abs().max(1.0) {
                q = trial;
                f = ft;
                moved = true;
                break;
            }
            if evals >= budget {
                break;
            }
        }
        step = if moved {
            (step * 2.0).min(max_step)
        } else {
            step / 2.0
        };
    }
    (q, f)
}

/// Weighted least squares of `L` on the scaled features (ridge-stabilized).
fn least_squares(scorer: &Scorer<'_>, loads: &[f64]) -> Vec<f64> {
    let dim = scorer.features[0].len();
    let mut a = vec![vec![0.0; dim]; dim];
    let mut b = vec![0.0; dim];
    for ((z, &l), &w) in scorer.features.iter().zip(loads).zip(&scorer.weights) {
        for r in 0..dim {
            b[r] += w * z[r] * l;
            for c in 0..dim {
                a[r][c] += w * z[r] * z[c];
            }
        }
    }
    for (r, row) in a.iter_mut().enumerate() {
        row[r] += 1e-9;
    }
    for c in 0..dim {
        let p = (c..dim)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .expect("non-empty");
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..dim {
            if r != c && a[c][c] != 0.0 {
                let f = a[r][c] / a[c][c];
                for t in c..dim {
                    a[r][t] -= f * a[c][t];
                }
                b[r] -= f * b[c];
            }
        }
    }
    (0..dim)
        .map(|i| if a[i][i] != 0.0 { b[i] / a[i][i] } else { 0.0 })
        .collect()
}

struct Search {
    q: Vec<f64>,
    f: f64,
}

/// Multistart q-space search: forecast identity, weighted mean, least squares.
fn q_space_search(scorer: &Scorer<'_>, samples: &[Sample], scale: &[f64]) -> Option<Search> {
    let dim = scale.len();
    let mean_load: f64 = samples
        .iter()
        .zip(&scorer.weights)
        .map(|(s, w)| w * s.load)
        .sum();
    let size = samples.iter().map(|s| s.load.abs()).fold(1.0, f64::max);
    let mut starts = Vec::new();
    if dim >= 2 && samples.iter().all(|s| s.features[1] == s.forecast) {
        let mut q = vec![0.0; dim];
        q[1] = scale[1];
        starts.push(q);
    }
    let mut constant = vec![0.0; dim];
    constant[0] = mean_load;
    starts.push(constant);
    let loads: Vec<f64> = samples.iter().map(|s| s.load).collect();
    starts.push(least_squares(scorer, &loads));

    let mut best: Option<Search> = None;
    for q in starts {
        let f = scorer.value(&q);
        if !f.is_finite() {
            continue;
        }
        let (q, f) = compass(scorer, q, f, 0.05 * size, 1e-7 * size, 400);
        if best.as_ref().is_none_or(|b| f < b.f) {
            best = Some(Search { q, f });
        }
    }
    best
}

fn status_rule(
    q: Vec<f64>,
    objective: f64,
    best_bound: f64,
    status: Status,
    nodes: usize,
    samples: &[Sample],
) -> AffineRule {
    let dim = q.len();
    let best_bound = if best_bound.is_finite() {
        best_bound.min(objective)
    } else {
        objective
    };
    AffineRule {
        q,
        objective,
        best_bound,
        gap: relative_gap(objective, best_bound),
        status: status.to_string(),
        nodes,
        samples: samples.len(),
        degenerate: samples.len() < dim,
    }
}

/// Solves the estimation MILP for one (weighted) sample set.
pub fn train_affine(
    system: &PowerSystem,
    samples: &[Sample],
    config: &TrainConfig,
) -> Result<AffineRule> {
    config.validate()?;
    let est = build(system, samples, config.penalty, true)?;
    let scorer = Scorer::new(system, samples, &est.scale, config.penalty);
    let size = samples.iter().map(|s| s.load.abs()).fold(1.0, f64::max);

    let start = if config.heuristic {
        q_space_search(&scorer, samples, &est.scale)
    } else {
        None
    };
    let mip_start = start
        .as_ref()
        .and_then(|s| scorer.levels(&s.q).map(|lv| est.candidate(&s.q, &lv)));

    let best_seen = RefCell::new(start.as_ref().map_or(f64::INFINITY, |s| s.f));
    let tried: RefCell<Vec<Vec<f64>>> = RefCell::new(Vec::new());
    let heuristic = |values: &[f64]| -> Option<Vec<f64>> {
        let q = est.scaled_q(values);
        let close = |a: &Vec<f64>| a.iter().zip(&q).all(|(x, y)| (x - y).abs() <= 1e-6 * size);
        if tried.borrow().iter().any(close) {
            return None;
        }
        tried.borrow_mut().push(q.clone());
        let f = scorer.value(&q);
        if !f.is_finite() {
            return None;
        }
        let (q, f) = compass(&scorer, q, f, 0.01 * size, 1e-7 * size, 60);
        if f < *best_seen.borrow() {
            *best_seen.borrow_mut() = f;
            scorer.levels(&q).map(|lv| est.candidate(&q, &lv))
        } else {
            None
        }
    };

    let options = MilpOptions {
        gap_tol: config.gap_tol,
        time_limit: config.time_limit.map(Duration::from_secs_f64),
        node_limit: config.node_limit,
        mip_start,
        heuristic: if config.heuristic {
            Some(&heuristic)
        } else {
            None
        },
        heuristic_every: config.heuristic_every.max(1),
    };
    let sol = solve_milp(&est.milp, &options)?;
    finish(&est, &scorer, sol, samples, config.heuristic, size)
}

fn finish(
    est: &EstimationMilp,
    scorer: &Scorer<'_>,
    sol: Solution,
    samples: &[Sample],
    polish: bool,
    size: f64,
) -> Result<AffineRule> {
    if !sol.status.has_solution() {
        return Err(Error::SolverFailure(format!(
            "estimation problem ended {}",
            sol.status
        )));
    }
    let mut q = est.scaled_q(&sol.values);
    let mut objective = sol.objective;
    if polish {
        // A node LP may have produced the incumbent; a last local search
        // from it can only lower the objective.
        let f = scorer.value(&q);
        if f.is_finite() {
            let (qp, fp) = compass(scorer, q.clone(), f, 0.01 * size, 1e-7 * size, 100);
            if fp < objective {
                q = qp;
                objective = fp;
            }
        }
    }
    let unscaled = q.iter().zip(&est.scale).map(|(v, s)| v / s).collect();
    Ok(status_rule(
        unscaled,
        objective,
        sol.best_bound,
        sol.status,
        sol.nodes,
        samples,
    ))
}

/// The estimation problem without the merit-order constraints: an LP whose
/// optimum bounds the MILP from below but whose schedules need not be
/// merit-order dispatches.
pub fn train_relaxed(system: &PowerSystem, samples: &[Sample]) -> Result<AffineRule> {
    train_relaxed_with(system, samples, DEFAULT_SLACK_PENALTY)
}

pub fn train_relaxed_with(
    system: &PowerSystem,
    samples: &[Sample],
    penalty: f64,
) -> Result<AffineRule> {
    let est = build(system, samples, penalty, false)?;
    let sol = solve_lp(&est.milp.lp)?;
    if sol.status != Status::Optimal {
        return Err(Error::SolverFailure(format!(
            "relaxed estimation LP ended {}",
            sol.status
        )));
    }
    let q = est.coefficients(&sol.values);
    Ok(status_rule(
        q,
        sol.objective,
        sol.objective,
        sol.status,
        0,
        samples,
    ))
}

/// Which estimation problem to solve per cluster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainerKind {
    Milp,
    Relaxed,
}

impl TrainerKind {
    pub fn name(self) -> &'static str {
        match self {
            TrainerKind::Milp => "milp",
            TrainerKind::Relaxed => "relaxed",
        }
    }
}

/// Per-cluster wall-clock training times.
#[derive(Clone, Debug, Default)]
pub struct TrainStats {
    pub cluster_seconds: Vec<f64>,
    pub cluster_sizes: Vec<usize>,
    pub medoids: Vec<usize>,
}

impl TrainStats {
    pub fn total_seconds(&self) -> f64 {
        self.cluster_seconds.iter().sum()
    }
}

/// `⌈budget · part / whole⌉`, at least one.
fn share(budget: usize, part: usize, whole: usize) -> usize {
    ((budget as u128 * part as u128).div_ceil(whole.max(1) as u128) as usize).max(1)
}

/// K-means on the non-constant features, PAM reduction to
/// `⌈r/100 · |N_k|⌉` weighted medoids per cluster, one rule per cluster.
pub fn train_partitioned(
    system: &PowerSystem,
    samples: &[Sample],
    k: usize,
    reduction: f64,
    config: &TrainConfig,
) -> Result<PrescriptionModel> {
    train_partitioned_with(system, samples, k, reduction, config, TrainerKind::Milp).map(|(m, _)| m)
}

pub fn train_partitioned_with(
    system: &PowerSystem,
    samples: &[Sample],
    k: usize,
    reduction: f64,
    config: &TrainConfig,
    kind: TrainerKind,
) -> Result<(PrescriptionModel, TrainStats)> {
    config.validate()?;
    if !(reduction > 0.0 && reduction <= 100.0) {
        return Err(Error::InvalidConfig(format!(
            "reduction must be in (0, 100], got {reduction}"
        )));
    }
    let dim = validate_samples(samples, system.nodes().len())?;
    let points: Vec<Vec<f64>> = samples.iter().map(|s| s.features[1..].to_vec()).collect();
    let km = kmeans(&points, k, config.seed, KMEANS_RESTARTS)?;

    let mut groups: Vec<Vec<Sample>> = vec![Vec::new(); k];
    for (s, &l) in samples.iter().zip(&km.labels) {
        let mut s = s.clone();
        s.weight = 1.0;
        groups[l].push(s);
    }
    let mut sizes = Vec::with_capacity(k);
    let mut reduced = Vec::with_capacity(k);
    for (c, group) in groups.into_iter().enumerate() {
        if group.is_empty() {
            return Err(Error::InsufficientData(format!("cluster {c} is empty")));
        }
        if group.len() < dim {
            log::warn!(
                "cluster {c} has {} points for {dim} features; its rule may be underdetermined",
                group.len()
            );
        }
        sizes.push(group.len());
        reduced.push(if reduction < 100.0 {
            let m =
                ((reduction / 100.0 * group.len() as f64).ceil() as usize).clamp(1, group.len());
            let pts: Vec<Vec<f64>> = group.iter().map(|s| s.features[1..].to_vec()).collect();
            let med = pam(&pts, m)?;
            med.indices
                .iter()
                .zip(&med.weights)
                .map(|(&i, &w)| Sample {
                    weight: w,
                    ..group[i].clone()
                })
                .collect()
        } else {
            group
        });
    }

    let points: usize = reduced.iter().map(Vec::len).sum();
    let configs: Vec<TrainConfig> = reduced
        .iter()
        .map(|r| TrainConfig {
            node_limit: config.node_limit.map(|n| share(n, r.len(), points)),
            ..config.clone()
        })
        .collect();
    let jobs: Vec<usize> = (0..k).collect();
    let results = par_map(&jobs, |&c| {
        let t = Instant::now();
        let rule = match kind {
            TrainerKind::Milp => train_affine(system, &reduced[c], &configs[c]),
            TrainerKind::Relaxed => train_relaxed_with(system, &reduced[c], config.penalty),
        };
        rule.map(|r| (r, t.elapsed().as_secs_f64()))
    });
    let mut rules = Vec::with_capacity(k);
    let mut stats = TrainStats {
        cluster_sizes: sizes,
        medoids: reduced.iter().map(Vec::len).collect(),
        ..Default::default()
    };
    for r in results {
        let (rule, secs) = r?;
        rules.push(rule);
        stats.cluster_seconds.push(secs);
    }
    let model = PrescriptionModel {
        k,
        feature_dim: dim,
        centroids: km.centroids,
        rules,
        clamp: [0.0, system.total_capacity()],
        seed: config.seed,
        reduction,
        trainer: kind.name().to_string(),
    };
    Ok((model, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{sample_dataset, three_bus_fixture, ThreeBusVariant, THREE_BUS_LOAD_NODE};
    use crate::dispatch::two_stage_cost;
    use crate::system::Generator;

    fn small_set(variant: ThreeBusVariant, n: usize, seed: u64) -> (PowerSystem, Vec<Sample>) {
        let (sys, mut cfg) = three_bus_fixture(variant);
        cfg.n = n;
        cfg.seed = seed;
        let data = sample_dataset(&sys, THREE_BUS_LOAD_NODE, &cfg).unwrap();
        (sys, data)
    }

    fn forecast_cost(sys: &PowerSystem, data: &[Sample]) -> f64 {
        data.iter()
            .map(|s| {
                two_stage_cost(sys, s.forecast, &s.nodal_loads)
                    .unwrap()
                    .1
                    .total_cost
            })
            .sum::<f64>()
            / data.len() as f64
    }

    #[test]
    fn counting() {
        let (sys, data) = small_set(ThreeBusVariant::Base, 1, 0);
        let est = build_estimation_milp(&sys, &data).unwrap();
        assert_eq!(
            (est.num_binaries(), est.num_chains(), est.q_dim()),
            (2, 1, 2)
        );
        let (sys, data) = small_set(ThreeBusVariant::Base, 500, 0);
        let est = build_estimation_milp(&sys, &data).unwrap();
        assert_eq!((est.num_binaries(), est.num_chains()), (1000, 500));
        assert!(matches!(
            build_estimation_milp(&sys, &[]),
            Err(Error::EmptySampleSet)
        ));
        let mut bad = data[..2].to_vec();
        bad[1].features.push(3.0);
        assert!(matches!(
            build_estimation_milp(&sys, &bad),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn unweighted_objective_uses_uniform_mass() {
        let (sys, data) = small_set(ThreeBusVariant::Base, 4, 1);
        let est = build_estimation_milp(&sys, &data).unwrap();
        // First generator's forward cost coefficient in sample 0 is C/N.
        assert_eq!(est.milp.lp.cost()[est.blocks[0].p(0).0], 5.0 / 4.0);
    }

    #[test]
    fn exact_fit_for_single_generator() {
        let g = Generator {
            id: "g".into(),
            node: "a".into(),
            cost: 7.0,
            up_cost: 9.0,
            down_cost: 1.0,
            capacity: 100.0,
            up_limit: 100.0,
            down_limit: 100.0,
        };
        let sys = PowerSystem::new(vec![g], vec![]).unwrap();
        let s = Sample::with_features(vec![1.0], 40.0, vec![37.0]);
        let rule = train_affine(&sys, std::slice::from_ref(&s), &TrainConfig::default()).unwrap();
        assert!((rule.q[0] - 37.0).abs() < 1e-6, "{:?}", rule.q);
        assert!((rule.objective - 7.0 * 37.0).abs() < 1e-6);
        assert_eq!(rule.status, "Optimal");
        let relaxed = train_relaxed(&sys, &[s]).unwrap();
        assert!((relaxed.q[0] - 37.0).abs() < 1e-6);
        assert!((relaxed.objective - rule.objective).abs() < 1e-6);
    }

    #[test]
    fn ordering_relaxed_milp_forecast() {
        for (variant, seed) in [
            (ThreeBusVariant::Base, 3),
            (ThreeBusVariant::Congested, 4),
            (ThreeBusVariant::FreeDown, 5),
        ] {
            let (sys, data) = small_set(variant, 12, seed);
            let milp = train_affine(&sys, &data, &TrainConfig::default()).unwrap();
            let relaxed = train_relaxed(&sys, &data).unwrap();
            let fsc = forecast_cost(&sys, &data);
            assert!(
                relaxed.objective <= milp.objective + 1e-6 * milp.objective.abs(),
                "{variant}"
            );
            assert!(
                milp.objective <= fsc + 1e-9 * fsc.abs(),
                "{variant}: {} > {fsc}",
                milp.objective
            );
            assert!(milp.best_bound <= milp.objective + 1e-9);
        }
    }

    #[test]
    fn milp_solution_is_merit_order_dispatch() {
        let (sys, data) = small_set(ThreeBusVariant::Base, 6, 9);
        let est = build_estimation_milp(&sys, &data).unwrap();
        let sol = solve_milp(&est.milp, &MilpOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        let q = est.coefficients(&sol.values);
        for (sched, s) in est.schedules(&sol.values).iter().zip(&data) {
            let pres: f64 = q.iter().zip(&s.features).map(|(a, b)| a * b).sum();
            assert!(pres >= -1e-6 && pres <= sys.total_capacity() + 1e-6);
            let greedy = forward_dispatch(&sys, pres.clamp(0.0, sys.total_capacity())).unwrap();
            for (a, b) in sched.iter().zip(&greedy.schedule) {
                assert!((a - b).abs() < 1e-5, "{sched:?} vs {:?}", greedy.schedule);
            }
        }
        // The heuristic path reaches the same optimum.
        let rule = train_affine(&sys, &data, &TrainConfig::default()).unwrap();
        assert!((rule.objective - sol.objective).abs() <= 1e-6 * sol.objective.abs());
    }

    #[test]
    fn partitioned_single_cluster_matches_plain_training() {
        let (sys, data) = small_set(ThreeBusVariant::Base, 15, 2);
        let cfg = TrainConfig::default();
        let model = train_partitioned(&sys, &data, 1, 100.0, &cfg).unwrap();
        let rule = train_affine(&sys, &data, &cfg).unwrap();
        assert_eq!(model.rules[0], rule);
        assert_eq!(model.clamp, [0.0, 210.0]);
        let (m2, stats) =
            train_partitioned_with(&sys, &data, 2, 40.0, &cfg, TrainerKind::Relaxed).unwrap();
        assert_eq!(m2.k, 2);
        assert_eq!(stats.cluster_sizes.iter().sum::<usize>(), 15);
        assert!(stats
            .medoids
            .iter()
            .zip(&stats.cluster_sizes)
            .all(|(&m, &n)| m <= (0.4 * n as f64).ceil() as usize));
        assert!(train_partitioned(&sys, &data, 1, 0.0, &cfg).is_err());
    }
}
