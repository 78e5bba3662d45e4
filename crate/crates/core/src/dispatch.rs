//! Forward merit-order dispatch and real-time network balancing.

use presched_solver::{solve_lp, LpProblem, LpSession, Sense, Status, VarId};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::system::PowerSystem;

/// Default price of shed or spilled energy (currency/MWh).
pub const DEFAULT_SLACK_PENALTY: f64 = 10_000.0;

/// Relative slack on the `[0, total_capacity]` range before a prescription
/// counts as out of range; values inside it are clamped.
const RANGE_TOL: f64 = 1e-9;

/// Anything above this is reported as active shedding or spilling.
const SLACK_ACTIVE: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DispatchResult {
    /// Forward schedule per generator, merit order.
    pub schedule: Vec<f64>,
    pub forward_cost: f64,
    /// The partially loaded unit, if any.
    pub marginal_position: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BalanceResult {
    pub up: Vec<f64>,
    pub down: Vec<f64>,
    /// Signed flow per line, positive from origin to end.
    pub flows: Vec<f64>,
    pub shed: Vec<f64>,
    pub spill: Vec<f64>,
    /// Regulation cost plus slack penalties; excludes the forward cost.
    pub balancing_cost: f64,
    pub total_cost: f64,
    pub slack_active: bool,
}

fn check_range(system: &PowerSystem, prescribed: f64) -> Result<f64> {
    let cap = system.total_capacity();
    let tol = RANGE_TOL * (1.0 + cap);
    if !prescribed.is_finite() || prescribed < -tol || prescribed > cap + tol {
        return Err(Error::PrescriptionOutOfRange {
            value: prescribed,
            capacity: cap,
        });
    }
    Ok(prescribed.clamp(0.0, cap))
}

fn dispatch_from_schedule(system: &PowerSystem, schedule: Vec<f64>) -> DispatchResult {
    let gens = system.generators();
    let forward_cost = gens.iter().zip(&schedule).map(|(g, p)| g.cost * p).sum();
    let marginal_position = schedule
        .iter()
        .zip(gens)
        .position(|(&p, g)| p > 0.0 && p < g.capacity);
    DispatchResult {
        schedule,
        forward_cost,
        marginal_position,
    }
}

/// Greedy merit-order fill: each unit, in order, is loaded to capacity until
/// the prescribed demand is met. Optimal for the copper-plate forward problem.
pub fn forward_dispatch(system: &PowerSystem, prescribed: f64) -> Result<DispatchResult> {
    let mut residual = check_range(system, prescribed)?;
    let schedule = system
        .generators()
        .iter()
        .map(|g| {
            let p = residual.min(g.capacity);
            residual -= p;
            p
        })
        .collect();
    Ok(dispatch_from_schedule(system, schedule))
}

/// The forward problem solved as an LP (test oracle for [`forward_dispatch`]).
///
/// Units with equal marginal cost are interchangeable in the LP; their total
/// is redistributed in merit order so the schedule is canonical.
pub fn forward_dispatch_lp(system: &PowerSystem, prescribed: f64) -> Result<DispatchResult> {
    let demand = check_range(system, prescribed)?;
    let gens = system.generators();
    let mut lp = LpProblem::new();
    let p: Vec<VarId> = gens
        .iter()
        .map(|g| lp.add_var(format!("p_{}", g.id), 0.0, g.capacity, g.cost))
        .collect();
    lp.add_constraint(p.iter().map(|&v| (v, 1.0)), Sense::Eq, demand);
    let sol = solve_lp(&lp)?;
    if sol.status != Status::Optimal {
        return Err(Error::SolverFailure(format!(
            "forward LP ended {}",
            sol.status
        )));
    }
    let mut schedule: Vec<f64> = p
        .iter()
        .map(|&v| sol.value(v).clamp(0.0, gens[v.0].capacity))
        .collect();
    let mut start = 0;
    while start < gens.len() {
        let mut end = start + 1;
        while end < gens.len() && gens[end].cost == gens[start].cost {
            end += 1;
        }
        if end - start > 1 {
            let mut total: f64 = schedule[start..end].iter().sum();
            for g in start..end {
                schedule[g] = total.min(gens[g].capacity);
                total -= schedule[g];
            }
        }
        start = end;
    }
    Ok(dispatch_from_schedule(system, schedule))
}

/// Real-time balancing LP over the pipeline network, kept factorized so it
/// can be re-solved cheaply for many (schedule, load) pairs.
///
/// Regulation of each unit is bounded by its limits and by the room the
/// forward schedule leaves (`r_u <= Pmax - p`, `r_d <= p`). Because the
/// up-cost exceeds the down-cost, an optimum never regulates one unit both
/// ways, so these bounds describe the same optima as the row form
/// `0 <= p + r_u - r_d <= Pmax`.
pub struct Balancer<'s> {
    system: &'s PowerSystem,
    session: LpSession,
    up: Vec<VarId>,
    down: Vec<VarId>,
    flows: Vec<VarId>,
    shed: Vec<VarId>,
    spill: Vec<VarId>,
    penalty: f64,
}

impl<'s> Balancer<'s> {
    pub fn new(system: &'s PowerSystem) -> Result<Self> {
        Self::with_penalty(system, DEFAULT_SLACK_PENALTY)
    }

    pub fn with_penalty(system: &'s PowerSystem, penalty: f64) -> Result<Self> {
        if !(penalty > 0.0 && penalty.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "slack penalty must be positive, got {penalty}"
            )));
        }
        let gens = system.generators();
        let mut lp = LpProblem::new();
        let up: Vec<VarId> = gens
            .iter()
            .map(|g| lp.add_var(format!("ru_{}", g.id), 0.0, 0.0, g.up_cost))
            .collect();
        let down: Vec<VarId> = gens
            .iter()
            .map(|g| lp.add_var(format!("rd_{}", g.id), 0.0, 0.0, -g.down_cost))
            .collect();
        let flows: Vec<VarId> = system
            .lines()
            .iter()
            .map(|l| {
                let cap = l.capacity.unwrap_or(f64::INFINITY);
                lp.add_var(format!("f_{}", l.id), -cap, cap, 0.0)
            })
            .collect();
        let shed: Vec<VarId> = system
            .nodes()
            .iter()
            .map(|n| lp.add_var(format!("shed_{n}"), 0.0, f64::INFINITY, penalty))
            .collect();
        let spill: Vec<VarId> = system
            .nodes()
            .iter()
            .map(|n| lp.add_var(format!("spill_{n}"), 0.0, f64::INFINITY, penalty))
            .collect();
        for b in 0..system.nodes().len() {
            lp.add_constraint(
                nodal_terms(system, b, &up, &down, &flows, shed[b], spill[b]),
                Sense::Eq,
                0.0,
            );
        }
        let mut session = LpSession::new(lp)?;
        // Solve once on the all-zero data so the warm-start basis is the same
        // for every balancer, whatever it is asked to solve first.
        session.solve()?;
        Ok(Balancer {
            system,
            session,
            up,
            down,
            flows,
            shed,
            spill,
            penalty,
        })
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    /// Solves the balancing problem for a forward schedule and nodal actual
    /// net loads (indexed like [`PowerSystem::nodes`]).
    pub fn balance(
        &mut self,
        forward: &DispatchResult,
        nodal_loads: &[f64],
    ) -> Result<BalanceResult> {
        let system = self.system;
        let nodes = system.nodes().len();
        if nodal_loads.len() != nodes {
            return Err(Error::DimensionMismatch {
                expected: nodes,
                found: nodal_loads.len(),
            });
        }
        let gens = system.generators();
        if forward.schedule.len() != gens.len() {
            return Err(Error::DimensionMismatch {
                expected: gens.len(),
                found: forward.schedule.len(),
            });
        }
        let mut rhs = nodal_loads.to_vec();
        for (g, gen) in gens.iter().enumerate() {
            let p = forward.schedule[g];
            rhs[system.generator_nodes()[g]] -= p;
            self.session
                .set_bounds(self.up[g], 0.0, gen.up_limit.min(gen.capacity - p).max(0.0));
            self.session
                .set_bounds(self.down[g], 0.0, gen.down_limit.min(p).max(0.0));
        }
        for (b, &r) in rhs.iter().enumerate() {
            self.session.set_rhs(b, r);
        }
        let sol = self.session.solve()?;
        if sol.status != Status::Optimal {
            return Err(Error::SolverFailure(format!(
                "balancing LP ended {}",
                sol.status
            )));
        }
        let pick =
            |vars: &[VarId]| -> Vec<f64> { vars.iter().map(|&v| sol.value(v).max(0.0)).collect() };
        let up = pick(&self.up);
        let down = pick(&self.down);
        let shed = pick(&self.shed);
        let spill = pick(&self.spill);
        let flows = self.flows.iter().map(|&v| sol.value(v)).collect();
        let balancing_cost = sol.objective;
        let slack_active = shed.iter().chain(&spill).any(|&s| s > SLACK_ACTIVE);
        Ok(BalanceResult {
            up,
            down,
            flows,
            shed,
            spill,
            balancing_cost,
            total_cost: forward.forward_cost + balancing_cost,
            slack_active,
        })
    }

    /// Forward dispatch of `prescribed` followed by balancing against `nodal_loads`.
    pub fn two_stage_cost(
        &mut self,
        prescribed: f64,
        nodal_loads: &[f64],
    ) -> Result<(DispatchResult, BalanceResult)> {
        let forward = forward_dispatch(self.system, prescribed)?;
        let balance = self.balance(&forward, nodal_loads)?;
        Ok((forward, balance))
    }
}

/// Left-hand side of the balance row at node `b`, with the forward schedule
/// moved to the right-hand side.
fn nodal_terms(
    system: &PowerSystem,
    b: usize,
    up: &[VarId],
    down: &[VarId],
    flows: &[VarId],
    shed: VarId,
    spill: VarId,
) -> Vec<(VarId, f64)> {
    let mut terms = Vec::new();
    for (g, &node) in system.generator_nodes().iter().enumerate() {
        if node == b {
            terms.push((up[g], 1.0));
            terms.push((down[g], -1.0));
        }
    }
    for (l, &(from, to)) in system.line_ends().iter().enumerate() {
        if from == b {
            terms.push((flows[l], -1.0));
        }
        if to == b {
            terms.push((flows[l], 1.0));
        }
    }
    terms.push((shed, 1.0));
    terms.push((spill, -1.0));
    terms
}

/// One-off balancing solve (builds a fresh [`Balancer`]).
pub fn balance(
    system: &PowerSystem,
    forward: &DispatchResult,
    nodal_loads: &[f64],
) -> Result<BalanceResult> {
    Balancer::new(system)?.balance(forward, nodal_loads)
}

/// Forward dispatch then balancing, for a single case.
pub fn two_stage_cost(
    system: &PowerSystem,
    prescribed: f64,
    nodal_loads: &[f64],
) -> Result<(DispatchResult, BalanceResult)> {
    Balancer::new(system)?.two_stage_cost(prescribed, nodal_loads)
}

/// Cost of the best single-shot operation for these loads: forward output
/// free within capacity (no merit order, no forward balance), then the same
/// regulation, network and slack model. Every two-stage policy costs at
/// least this much.
pub fn system_optimum(system: &PowerSystem, nodal_loads: &[f64], penalty: f64) -> Result<f64> {
    let nodes = system.nodes().len();
    if nodal_loads.len() != nodes {
        return Err(Error::DimensionMismatch {
            expected: nodes,
            found: nodal_loads.len(),
        });
    }
    let gens = system.generators();
    let mut lp = LpProblem::new();
    let p: Vec<VarId> = gens
        .iter()
        .map(|g| lp.add_var(format!("p_{}", g.id), 0.0, g.capacity, g.cost))
        .collect();
    let up: Vec<VarId> = gens
        .iter()
        .map(|g| lp.add_var(format!("ru_{}", g.id), 0.0, g.up_limit, g.up_cost))
        .collect();
    let down: Vec<VarId> = gens
        .iter()
        .map(|g| lp.add_var(format!("rd_{}", g.id), 0.0, g.down_limit, -g.down_cost))
        .collect();
    let flows: Vec<VarId> = system
        .lines()
        .iter()
        .map(|l| {
            let cap = l.capacity.unwrap_or(f64::INFINITY);
            lp.add_var(format!("f_{}", l.id), -cap, cap, 0.0)
        })
        .collect();
    let shed: Vec<VarId> = (0..nodes)
        .map(|b| lp.add_var(format!("shed_{b}"), 0.0, f64::INFINITY, penalty))
        .collect();
    let spill: Vec<VarId> = (0..nodes)
        .map(|b| lp.add_var(format!("spill_{b}"), 0.0, f64::INFINITY, penalty))
        .collect();
    for (g, gen) in gens.iter().enumerate() {
        let out = [(p[g], 1.0), (up[g], 1.0), (down[g], -1.0)];
        lp.add_constraint(out, Sense::Ge, 0.0);
        lp.add_constraint(out, Sense::Le, gen.capacity);
    }
    for b in 0..nodes {
        let mut terms = nodal_terms(system, b, &up, &down, &flows, shed[b], spill[b]);
        for (g, &node) in system.generator_nodes().iter().enumerate() {
            if node == b {
                terms.push((p[g], 1.0));
            }
        }
        lp.add_constraint(terms, Sense::Eq, nodal_loads[b]);
    }
    let sol = solve_lp(&lp)?;
    if sol.status != Status::Optimal {
        return Err(Error::SolverFailure(format!(
            "system-optimum LP ended {}",
            sol.status
        )));
    }
    Ok(sol.objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{three_bus_fixture, ThreeBusVariant};

    fn loads_at_bus3(sys: &PowerSystem, l: f64) -> Vec<f64> {
        let mut v = vec![0.0; sys.nodes().len()];
        v[sys.node_index("3").unwrap()] = l;
        v
    }

    #[test]
    fn greedy_fill_examples() {
        let (sys, _) = three_bus_fixture(ThreeBusVariant::Base);
        let d = forward_dispatch(&sys, 100.0).unwrap();
        assert_eq!(d.schedule, vec![60.0, 40.0]);
        assert_eq!(d.forward_cost, 900.0);
        assert_eq!(d.marginal_position, Some(1));
        let zero = forward_dispatch(&sys, 0.0).unwrap();
        assert_eq!(zero.schedule, vec![0.0, 0.0]);
        assert_eq!(zero.forward_cost, 0.0);
        assert!(matches!(
            forward_dispatch(&sys, 211.0),
            Err(Error::PrescriptionOutOfRange { .. })
        ));
        assert!(matches!(
            forward_dispatch(&sys, -1.0),
            Err(Error::PrescriptionOutOfRange { .. })
        ));
    }

    #[test]
    fn lp_oracle_examples() {
        let (sys, _) = three_bus_fixture(ThreeBusVariant::Base);
        assert_eq!(
            forward_dispatch_lp(&sys, 100.0).unwrap(),
            forward_dispatch(&sys, 100.0).unwrap()
        );
        assert_eq!(
            forward_dispatch_lp(&sys, 60.0).unwrap().schedule,
            vec![60.0, 0.0]
        );
        assert_eq!(
            forward_dispatch_lp(&sys, 210.0).unwrap().schedule,
            vec![60.0, 150.0]
        );
    }

    #[test]
    fn balancing_examples() {
        let (sys, _) = three_bus_fixture(ThreeBusVariant::Base);
        let fwd = forward_dispatch(&sys, 100.0).unwrap();
        let b = balance(&sys, &fwd, &loads_at_bus3(&sys, 120.0)).unwrap();
        assert_eq!(b.up, vec![0.0, 20.0]);
        assert!((b.balancing_cost - 400.0).abs() < 1e-9);
        assert!((b.total_cost - 1300.0).abs() < 1e-9);

        let b = balance(&sys, &fwd, &loads_at_bus3(&sys, 80.0)).unwrap();
        assert_eq!(b.down, vec![0.0, 20.0]);
        assert!((b.balancing_cost + 200.0).abs() < 1e-9);
        assert!((b.total_cost - 700.0).abs() < 1e-9);

        let b = balance(&sys, &fwd, &loads_at_bus3(&sys, 100.0)).unwrap();
        assert_eq!(b.balancing_cost, 0.0);
        assert!(b.up.iter().chain(&b.down).all(|&r| r == 0.0));
        assert!(!b.slack_active);
    }

    #[test]
    fn congested_line_forces_redispatch() {
        let (sys, _) = three_bus_fixture(ThreeBusVariant::Congested);
        let (_, b) = two_stage_cost(&sys, 100.0, &loads_at_bus3(&sys, 100.0)).unwrap();
        assert!((b.down[0] - 30.0).abs() < 1e-9);
        assert!((b.up[1] - 30.0).abs() < 1e-9);
        assert!((b.balancing_cost - 1200.0).abs() < 1e-9);
        assert!((b.total_cost - 2100.0).abs() < 1e-9);
    }

    #[test]
    fn shortfall_beyond_capacity_is_shed() {
        let (sys, _) = three_bus_fixture(ThreeBusVariant::Base);
        let (_, b) = two_stage_cost(&sys, 210.0, &loads_at_bus3(&sys, 215.0)).unwrap();
        assert!(b.slack_active);
        assert!((b.shed.iter().sum::<f64>() - 5.0).abs() < 1e-9);
        assert!((b.balancing_cost - 5.0 * DEFAULT_SLACK_PENALTY).abs() < 1e-6);
    }

    #[test]
    fn reused_balancer_matches_fresh_solves() {
        let (sys, _) = three_bus_fixture(ThreeBusVariant::Congested);
        let mut balancer = Balancer::new(&sys).unwrap();
        for k in 0..40 {
            let pres = (k * 37 % 200) as f64;
            let load = (k * 53 % 190) as f64;
            let (_, reused) = balancer
                .two_stage_cost(pres, &loads_at_bus3(&sys, load))
                .unwrap();
            let (_, fresh) = two_stage_cost(&sys, pres, &loads_at_bus3(&sys, load)).unwrap();
            assert_eq!(
                reused.total_cost, fresh.total_cost,
                "prescribed {pres} load {load}"
            );
        }
    }

    #[test]
    fn floor_is_below_forecast_cost() {
        let (sys, _) = three_bus_fixture(ThreeBusVariant::Congested);
        let loads = loads_at_bus3(&sys, 100.0);
        let floor = system_optimum(&sys, &loads, DEFAULT_SLACK_PENALTY).unwrap();
        let (_, b) = two_stage_cost(&sys, 100.0, &loads).unwrap();
        assert!(floor <= b.total_cost + 1e-9);
        // G1 limited to 30 MW by line 1, the rest from G2: 30*5 + 70*15.
        assert!((floor - 1200.0).abs() < 1e-9);
    }
}
