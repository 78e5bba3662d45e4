//! Independent oracles and random instance generators shared by the
//! integration tests.
#![allow(dead_code)]

use presched::{Generator, Line, PowerSystem, Sample};
use presched_solver::{solve_lp, LpProblem, Sense, Status, VarId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const PENALTY: f64 = presched::DEFAULT_SLACK_PENALTY;

/// A small random system: up to `max_gens` units on up to `max_nodes`
/// nodes joined in a chain. Costs are drawn on a coarse grid so that ties
/// occur.
pub fn random_system(rng: &mut ChaCha8Rng, max_gens: usize, max_nodes: usize) -> PowerSystem {
    let nodes = rng.random_range(1..=max_nodes);
    let gens = rng.random_range(1..=max_gens);
    let generators = (0..gens)
        .map(|g| {
            let cost = rng.random_range(-4..=12) as f64 * 5.0;
            let capacity = rng.random_range(5.0..100.0);
            Generator {
                id: format!("g{g}"),
                node: format!("n{}", rng.random_range(0..nodes)),
                cost,
                up_cost: cost + rng.random_range(0.5..25.0),
                down_cost: cost - rng.random_range(0.5..25.0),
                capacity,
                up_limit: capacity * rng.random_range(0.2..1.0),
                down_limit: capacity * rng.random_range(0.2..1.0),
            }
        })
        .collect();
    let lines = (1..nodes)
        .map(|b| Line {
            id: format!("l{b}"),
            from: format!("n{}", b - 1),
            to: format!("n{b}"),
            capacity: if rng.random_bool(0.3) {
                None
            } else {
                Some(rng.random_range(5.0..60.0))
            },
        })
        .collect();
    let names = (0..nodes).map(|b| format!("n{b}")).collect();
    PowerSystem::with_nodes(names, generators, lines).expect("valid random system")
}

/// Random samples with features `(1, L^F)` whose actual loads scatter around
/// the forecast.
pub fn random_samples(rng: &mut ChaCha8Rng, system: &PowerSystem, n: usize) -> Vec<Sample> {
    let cap = system.total_capacity();
    let nodes = system.nodes().len();
    (0..n)
        .map(|_| {
            let forecast = rng.random_range(0.05..0.95) * cap;
            let actual = (forecast * rng.random_range(0.7..1.3)).min(1.1 * cap);
            let mut shares: Vec<f64> = (0..nodes).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = shares.iter().sum();
            shares.iter_mut().for_each(|s| *s *= actual / total);
            Sample::new(forecast, shares)
        })
        .collect()
}

/// Cumulative capacity before each unit in merit order, plus the total.
fn staircase(system: &PowerSystem) -> Vec<f64> {
    let mut steps = vec![0.0];
    for g in system.generators() {
        steps.push(steps.last().unwrap() + g.capacity);
    }
    steps
}

/// Best weighted mean two-stage cost over all affine rules `q0 + q1 L^F`,
/// found by enumerating which unit is marginal for every sample. Each
/// pattern fixes the forward schedule as an affine function of `q`, which
/// leaves an LP in `q` and the balancing variables.
///
/// With the sign of `q1` fixed, prescriptions are monotone in `L^F`, so only
/// patterns monotone in that order can be feasible; the enumeration covers
/// exactly those, once per sign.
pub fn staircase_enumeration(system: &PowerSystem, samples: &[Sample]) -> f64 {
    let gens = system.generators().len();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[a].features[1].total_cmp(&samples[b].features[1]));
    let mut best = f64::INFINITY;
    for increasing in [true, false] {
        // Non-decreasing level sequences along `order`.
        let mut levels = vec![0usize; samples.len()];
        loop {
            let mut pattern = vec![0usize; samples.len()];
            for (pos, &i) in order.iter().enumerate() {
                pattern[i] = if increasing {
                    levels[pos]
                } else {
                    gens - 1 - levels[pos]
                };
            }
            if let Some(v) = pattern_lp(system, samples, &pattern, increasing) {
                best = best.min(v);
            }
            // Next non-decreasing sequence.
            let Some(i) = (0..levels.len()).rev().find(|&i| levels[i] + 1 < gens) else {
                break;
            };
            let v = levels[i] + 1;
            levels[i..].iter_mut().for_each(|l| *l = v);
        }
    }
    best
}

fn pattern_lp(
    system: &PowerSystem,
    samples: &[Sample],
    pattern: &[usize],
    increasing: bool,
) -> Option<f64> {
    let steps = staircase(system);
    let gens = system.generators();
    let w = 1.0 / samples.len() as f64;
    let mut lp = LpProblem::new();
    let q0 = lp.add_var("q0", f64::NEG_INFINITY, f64::INFINITY, 0.0);
    let q1 = if increasing {
        lp.add_var("q1", 0.0, f64::INFINITY, 0.0)
    } else {
        lp.add_var("q1", f64::NEG_INFINITY, 0.0, 0.0)
    };
    let mut offset = 0.0;
    let mut q_cost = [0.0, 0.0];
    for (i, s) in samples.iter().enumerate() {
        let k = pattern[i];
        let lf = s.features[1];
        // steps[k] <= q0 + q1 lf <= steps[k+1]
        lp.add_constraint([(q0, 1.0), (q1, lf)], Sense::Ge, steps[k]);
        lp.add_constraint([(q0, 1.0), (q1, lf)], Sense::Le, steps[k + 1]);
        // Forward output of unit g as constant + coefficient * (q0 + q1 lf).
        let forward = |g: usize| -> (f64, f64) {
            if g < k {
                (gens[g].capacity, 0.0)
            } else if g == k {
                (-steps[k], 1.0)
            } else {
                (0.0, 0.0)
            }
        };
        for (g, gen) in gens.iter().enumerate() {
            let (c, a) = forward(g);
            offset += w * gen.cost * c;
            q_cost[0] += w * gen.cost * a;
            q_cost[1] += w * gen.cost * a * lf;
        }
        let up: Vec<VarId> = gens
            .iter()
            .map(|g| lp.add_var("ru", 0.0, g.up_limit, w * g.up_cost))
            .collect();
        let down: Vec<VarId> = gens
            .iter()
            .map(|g| lp.add_var("rd", 0.0, g.down_limit, -w * g.down_cost))
            .collect();
        for (g, gen) in gens.iter().enumerate() {
            let (c, a) = forward(g);
            // ru + p <= Pmax and rd <= p.
            lp.add_constraint(
                [(up[g], 1.0), (q0, a), (q1, a * lf)],
                Sense::Le,
                gen.capacity - c,
            );
            lp.add_constraint([(down[g], 1.0), (q0, -a), (q1, -a * lf)], Sense::Le, c);
        }
        let flows: Vec<VarId> = system
            .lines()
            .iter()
            .map(|l| {
                let cap = l.capacity.unwrap_or(f64::INFINITY);
                lp.add_var("f", -cap, cap, 0.0)
            })
            .collect();
        for b in 0..system.nodes().len() {
            let shed = lp.add_var("shed", 0.0, f64::INFINITY, w * PENALTY);
            let spill = lp.add_var("spill", 0.0, f64::INFINITY, w * PENALTY);
            let mut terms = vec![(shed, 1.0), (spill, -1.0)];
            let mut rhs = s.nodal_loads[b];
            let (mut t0, mut t1) = (0.0, 0.0);
            for (g, &node) in system.generator_nodes().iter().enumerate() {
                if node == b {
                    let (c, a) = forward(g);
                    rhs -= c;
                    t0 += a;
                    t1 += a * lf;
                    terms.push((up[g], 1.0));
                    terms.push((down[g], -1.0));
                }
            }
            terms.push((q0, t0));
            terms.push((q1, t1));
            for (l, &(from, to)) in system.line_ends().iter().enumerate() {
                if from == b {
                    terms.push((flows[l], -1.0));
                }
                if to == b {
                    terms.push((flows[l], 1.0));
                }
            }
            lp.add_constraint(terms, Sense::Eq, rhs);
        }
    }
    lp.set_cost(q0, q_cost[0]);
    lp.set_cost(q1, q_cost[1]);
    let sol = solve_lp(&lp).ok()?;
    (sol.status == Status::Optimal).then_some(sol.objective + offset)
}

/// Largest nodal imbalance of a balancing result (MW).
pub fn conservation_error(
    system: &PowerSystem,
    schedule: &[f64],
    bal: &presched::BalanceResult,
    nodal_loads: &[f64],
) -> f64 {
    let mut net: Vec<f64> = nodal_loads.iter().map(|l| -l).collect();
    for (g, &b) in system.generator_nodes().iter().enumerate() {
        net[b] += schedule[g] + bal.up[g] - bal.down[g];
    }
    for (l, &(from, to)) in system.line_ends().iter().enumerate() {
        net[from] -= bal.flows[l];
        net[to] += bal.flows[l];
    }
    for b in 0..net.len() {
        net[b] += bal.shed[b] - bal.spill[b];
    }
    net.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Mean and variance of `Beta(α, β)` from the closed forms.
pub fn beta_moments(alpha: f64, beta: f64) -> (f64, f64) {
    let s = alpha + beta;
    (alpha / s, alpha * beta / (s * s * (s + 1.0)))
}
