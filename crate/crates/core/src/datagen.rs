//! Synthetic net-demand scenarios and the bundled test systems.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::Sample;
use crate::system::{Generator, Line, PowerSystem};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }
}

/// Shape parameters of the Beta law with the given mean and standard
/// deviation (both per unit). A solution exists iff `sigma^2 < mean (1 - mean)`.
pub fn solve_beta_params(mean: f64, sigma: f64) -> Result<BetaParams> {
    let disc = mean * mean - mean + sigma * sigma;
    if !(mean > 0.0 && mean < 1.0 && sigma > 0.0) || !(disc < 0.0) {
        return Err(Error::NoRealSolution { mean, sigma });
    }
    let s2 = sigma * sigma;
    Ok(BetaParams {
        alpha: -disc * mean / s2,
        beta: disc * (mean - 1.0) / s2,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// Peak net demand `L̄` (MW).
    pub peak: f64,
    /// Per-unit support `[a, b]` of the uniform forecast draw.
    pub a: f64,
    pub b: f64,
    /// Per-unit standard deviation of the actual around the forecast.
    pub sigma: f64,
    pub n: usize,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak > 0.0 && self.peak.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "peak must be positive, got {}",
                self.peak
            )));
        }
        if !(0.0 < self.a && self.a < self.b && self.b < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < a < b < 1, got a={} b={}",
                self.a, self.b
            )));
        }
        // x^2 - x + sigma^2 is convex in x, so checking the endpoints covers [a, b].
        solve_beta_params(self.a, self.sigma)?;
        solve_beta_params(self.b, self.sigma)?;
        Ok(())
    }
}

/// Draws from `Beta(p)`, rejecting the endpoints so the outcome lies in the
/// open unit interval (floating-point underflow can otherwise produce 0).
fn open_beta(rng: &mut ChaCha8Rng, p: BetaParams) -> f64 {
    let dist = Beta::new(p.alpha, p.beta).expect("shape parameters are positive");
    loop {
        let v = dist.sample(rng);
        if v > 0.0 && v < 1.0 {
            return v;
        }
    }
}

/// `n` samples with forecast `L̄ U(a, b)` and actual `L̄ Beta(α, β)` centred
/// on it, all load at `load_node`. Features are `(1, L^F)`.
pub fn sample_dataset(
    system: &PowerSystem,
    load_node: &str,
    config: &SyntheticConfig,
) -> Result<Vec<Sample>> {
    config.validate()?;
    let node = system
        .node_index(load_node)
        .ok_or_else(|| Error::DanglingNodeReference("load".into(), load_node.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.n)
        .map(|_| {
            let u = rng.random_range(config.a..=config.b);
            let params = solve_beta_params(u, config.sigma)?;
            let actual = config.peak * open_beta(&mut rng, params);
            let mut loads = vec![0.0; system.nodes().len()];
            loads[node] = actual;
            Ok(Sample::new(config.peak * u, loads))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ThreeBusVariant {
    Base,
    /// Cheaper upward regulation of G2 (`C^u = 15`).
    CheapUp,
    /// Costlier downward regulation of G2 (`C^d = 15`).
    FreeDown,
    /// Line 1 limited to 30 MW.
    Congested,
    Peak50,
    Peak150,
    /// Forecasts in the lower half of the range.
    LowRegime,
    /// Forecasts in the upper half of the range.
    HighRegime,
}

impl ThreeBusVariant {
    pub const ALL: [ThreeBusVariant; 8] = [
        Self::Base,
        Self::CheapUp,
        Self::FreeDown,
        Self::Congested,
        Self::Peak50,
        Self::Peak150,
        Self::LowRegime,
        Self::HighRegime,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Base => "base",
            Self::CheapUp => "cheap_up",
            Self::FreeDown => "free_down",
            Self::Congested => "congested",
            Self::Peak50 => "peak50",
            Self::Peak150 => "peak150",
            Self::LowRegime => "low_regime",
            Self::HighRegime => "high_regime",
        }
    }
}

impl fmt::Display for ThreeBusVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ThreeBusVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

/// Node carrying all demand in the three-bus system.
pub const THREE_BUS_LOAD_NODE: &str = "3";

/// The three-bus system and its scenario settings (seed 0, N = 750).
pub fn three_bus_fixture(variant: ThreeBusVariant) -> (PowerSystem, SyntheticConfig) {
    let unit = |id: &str, node: &str, c: f64, cu: f64, cd: f64, cap: f64| Generator {
        id: id.into(),
        node: node.into(),
        cost: c,
        up_cost: cu,
        down_cost: cd,
        capacity: cap,
        up_limit: cap,
        down_limit: cap,
    };
    let g1 = unit("G1", "1", 5.0, 30.0, -20.0, 60.0);
    let mut g2 = unit("G2", "2", 15.0, 20.0, 10.0, 150.0);
    let mut l1 = Line {
        id: "L1".into(),
        from: "1".into(),
        to: "3".into(),
        capacity: None,
    };
    let l2 = Line {
        id: "L2".into(),
        from: "2".into(),
        to: "3".into(),
        capacity: None,
    };
    let mut config = SyntheticConfig {
        peak: 100.0,
        a: 0.03,
        b: 0.97,
        sigma: 0.075,
        n: 750,
        seed: 0,
    };
    match variant {
        ThreeBusVariant::Base => {}
        ThreeBusVariant::CheapUp => g2.up_cost = 15.0,
        ThreeBusVariant::FreeDown => g2.down_cost = 15.0,
        ThreeBusVariant::Congested => l1.capacity = Some(30.0),
        ThreeBusVariant::Peak50 => config.peak = 50.0,
        ThreeBusVariant::Peak150 => config.peak = 150.0,
        ThreeBusVariant::LowRegime => config.b = 0.5,
        ThreeBusVariant::HighRegime => config.a = 0.5,
    }
    let system = PowerSystem::new(vec![g1, g2], vec![l1, l2]).expect("fixture is valid");
    (system, config)
}

const EU_CAPACITIES: &str = include_str!("../data/europe/capacities.csv");
const EU_LINES: &str = include_str!("../data/europe/lines.csv");
const EU_PEAK_DEMAND: &str = include_str!("../data/europe/peak_demand.csv");

#[derive(Deserialize)]
struct CapacityRow {
    node: String,
    base_gw: f64,
    peak_gw: f64,
}

#[derive(Deserialize)]
struct LineRow {
    from: String,
    to: String,
    gw: f64,
}

#[derive(Deserialize)]
struct PeakRow {
    node: String,
    peak_gw: f64,
}

fn parse_rows<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    Ok(csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<T>, _>>()?)
}

/// Cost ranges `(C, C^u, C^d)` of the base and peak technologies.
const BASE_COSTS: [(f64, f64); 3] = [(8.0, 12.0), (60.0, 70.0), (-50.0, -40.0)];
const PEAK_COSTS: [(f64, f64); 3] = [(36.0, 44.0), (45.0, 50.0), (30.0, 35.0)];

fn build_european(capacities: &str, lines: &str, cost_seed: u64) -> Result<PowerSystem> {
    let caps: Vec<CapacityRow> = parse_rows(capacities)?;
    let lines: Vec<LineRow> = parse_rows(lines)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cost_seed);
    let mut gens = Vec::new();
    for row in &caps {
        for (tech, gw, ranges) in [
            ("base", row.base_gw, BASE_COSTS),
            ("peak", row.peak_gw, PEAK_COSTS),
        ] {
            // Costs are drawn for every unit so the stream does not depend on
            // which capacities happen to be zero.
            let [c, cu, cd] = ranges.map(|(lo, hi)| rng.random_range(lo..hi));
            if gw > 0.0 {
                let mw = gw * 1000.0;
                gens.push(Generator {
                    id: format!("{}-{tech}", row.node),
                    node: row.node.clone(),
                    cost: c,
                    up_cost: cu,
                    down_cost: cd,
                    capacity: mw,
                    up_limit: mw,
                    down_limit: mw,
                });
            }
        }
    }
    let lines = lines
        .into_iter()
        .map(|l| Line {
            id: format!("{}-{}", l.from, l.to),
            from: l.from,
            to: l.to,
            capacity: Some(l.gw * 1000.0),
        })
        .collect();
    let nodes = caps.into_iter().map(|r| r.node).collect();
    PowerSystem::with_nodes(nodes, gens, lines)
}

/// 28-node European system: a base and a peak unit per country (zero
/// capacities dropped), costs drawn once under `cost_seed`.
pub fn european_fixture(cost_seed: u64) -> PowerSystem {
    build_european(EU_CAPACITIES, EU_LINES, cost_seed).expect("bundled data is valid")
}

/// As [`european_fixture`], reading `capacities.csv` and `lines.csv` from `dir`.
pub fn european_fixture_from_dir(dir: &Path, cost_seed: u64) -> Result<PowerSystem> {
    let read = |name: &str| {
        let path = dir.join(name);
        std::fs::read_to_string(&path).map_err(|_| Error::MissingCapacityFile(path))
    };
    build_european(&read("capacities.csv")?, &read("lines.csv")?, cost_seed)
}

/// Peak net demand per node (MW), in the fixture's node order.
pub fn european_peak_demand(system: &PowerSystem) -> Result<Vec<f64>> {
    let rows: Vec<PeakRow> = parse_rows(EU_PEAK_DEMAND)?;
    let mut peaks = vec![0.0; system.nodes().len()];
    for r in rows {
        let b = system
            .node_index(&r.node)
            .ok_or_else(|| Error::DanglingNodeReference("peak demand".into(), r.node.clone()))?;
        peaks[b] = r.peak_gw * 1000.0;
    }
    Ok(peaks)
}

/// Settings for hourly European scenarios: one per-unit level `u ~ U(a, b)`
/// per hour shared by all nodes, and independent Beta noise per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EuropeanDataConfig {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub n: usize,
    pub seed: u64,
}

impl Default for EuropeanDataConfig {
    fn default() -> Self {
        EuropeanDataConfig {
            a: 0.375,
            b: 0.75,
            sigma: 0.075,
            n: 1500,
            seed: 0,
        }
    }
}

pub fn european_dataset(system: &PowerSystem, config: &EuropeanDataConfig) -> Result<Vec<Sample>> {
    let check = SyntheticConfig {
        peak: 1.0,
        a: config.a,
        b: config.b,
        sigma: config.sigma,
        n: config.n,
        seed: 0,
    };
    check.validate()?;
    let peaks = european_peak_demand(system)?;
    let start: NaiveDateTime = NaiveDate::from_ymd_opt(2020, 1, 1)
        .expect("valid date")
        .into();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.n)
        .map(|t| {
            let u = rng.random_range(config.a..=config.b);
            let params = solve_beta_params(u, config.sigma)?;
            let loads: Vec<f64> = peaks
                .iter()
                .map(|&p| p * open_beta(&mut rng, params))
                .collect();
            let forecast = peaks.iter().sum::<f64>() * u;
            let mut s = Sample::new(forecast, loads);
            s.timestamp = Some(
                (start + Duration::hours(t as i64))
                    .format("%Y-%m-%dT%H:%M:%S")
                    .to_string(),
            );
            Ok(s)
        })
        .collect()
}
