//! Generators, nodes and the pipeline network.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: String,
    pub node: String,
    /// Marginal cost of forward production.
    #[serde(rename = "C")]
    pub cost: f64,
    /// Marginal cost of upward regulation.
    #[serde(rename = "Cu")]
    pub up_cost: f64,
    /// Marginal value of downward regulation (may be negative: the unit must
    /// then be paid to reduce output).
    #[serde(rename = "Cd")]
    pub down_cost: f64,
    #[serde(rename = "Pmax")]
    pub capacity: f64,
    #[serde(rename = "Ru")]
    pub up_limit: f64,
    #[serde(rename = "Rd")]
    pub down_limit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: String,
    pub from: String,
    pub to: String,
    /// `None` means unbounded.
    #[serde(rename = "Fmax")]
    pub capacity: Option<f64>,
}

/// Immutable system with generators in merit order (cost, then id).
#[derive(Clone, Debug)]
pub struct PowerSystem {
    generators: Vec<Generator>,
    lines: Vec<Line>,
    nodes: Vec<String>,
    gen_node: Vec<usize>,
    line_ends: Vec<(usize, usize)>,
    total_capacity: f64,
}

impl PowerSystem {
    /// Builds a system whose node set is every node mentioned by a generator
    /// or line, sorted by name.
    pub fn new(generators: Vec<Generator>, lines: Vec<Line>) -> Result<Self> {
        let nodes: BTreeSet<String> = generators
            .iter()
            .map(|g| g.node.clone())
            .chain(lines.iter().flat_map(|l| [l.from.clone(), l.to.clone()]))
            .collect();
        Self::with_nodes(nodes.into_iter().collect(), generators, lines)
    }

    /// Builds a system over an explicit node list (kept in the given order).
    pub fn with_nodes(
        nodes: Vec<String>,
        mut generators: Vec<Generator>,
        lines: Vec<Line>,
    ) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::EmptySystem);
        }
        let mut seen = HashSet::new();
        for n in &nodes {
            if !seen.insert(n.as_str()) {
                return Err(Error::DuplicateId(n.clone()));
            }
        }
        let node_index = |owner: &str, name: &str| {
            nodes
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::DanglingNodeReference(owner.to_string(), name.to_string()))
        };

        let mut ids = HashSet::new();
        for g in &generators {
            if !ids.insert(g.id.as_str()) {
                return Err(Error::DuplicateId(g.id.clone()));
            }
            let finite = [
                g.cost,
                g.up_cost,
                g.down_cost,
                g.capacity,
                g.up_limit,
                g.down_limit,
            ]
            .iter()
            .all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidComponent(
                    g.id.clone(),
                    "non-finite parameter".into(),
                ));
            }
            if g.capacity <= 0.0 {
                return Err(Error::NonPositiveCapacity(g.id.clone()));
            }
            if g.up_limit < 0.0 || g.down_limit < 0.0 {
                return Err(Error::InvalidComponent(
                    g.id.clone(),
                    "negative regulation limit".into(),
                ));
            }
            if g.up_cost <= g.down_cost {
                return Err(Error::UpCostNotAboveDownCost(g.id.clone()));
            }
        }
        let mut line_ids = HashSet::new();
        for l in &lines {
            if !line_ids.insert(l.id.as_str()) {
                return Err(Error::DuplicateId(l.id.clone()));
            }
            if l.from == l.to {
                return Err(Error::InvalidComponent(
                    l.id.clone(),
                    "line connects a node to itself".into(),
                ));
            }
            if let Some(c) = l.capacity {
                if !(c > 0.0) {
                    return Err(Error::NonPositiveCapacity(l.id.clone()));
                }
            }
        }

        generators.sort_by(|a, b| a.cost.total_cmp(&b.cost).then_with(|| a.id.cmp(&b.id)));
        let gen_node = generators
            .iter()
            .map(|g| node_index(&g.id, &g.node))
            .collect::<Result<Vec<_>>>()?;
        let line_ends = lines
            .iter()
            .map(|l| Ok((node_index(&l.id, &l.from)?, node_index(&l.id, &l.to)?)))
            .collect::<Result<Vec<_>>>()?;
        let total_capacity = generators.iter().map(|g| g.capacity).sum();
        Ok(PowerSystem {
            generators,
            lines,
            nodes,
            gen_node,
            line_ends,
            total_capacity,
        })
    }

    /// Generators in merit order.
    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    /// Node index of each generator (merit order).
    pub fn generator_nodes(&self) -> &[usize] {
        &self.gen_node
    }

    /// `(origin, end)` node indices of each line.
    pub fn line_ends(&self) -> &[(usize, usize)] {
        &self.line_ends
    }

    pub fn total_capacity(&self) -> f64 {
        self.total_capacity
    }

    /// Reads `generators.csv` and `lines.csv` (the latter optional) from `dir`.
    pub fn load_csv(dir: &Path) -> Result<Self> {
        let gpath = dir.join("generators.csv");
        let bytes = fs::read(&gpath).map_err(|e| Error::io(&gpath, e))?;
        let generators = csv::Reader::from_reader(bytes.as_slice())
            .deserialize()
            .collect::<Result<Vec<Generator>, _>>()?;
        let lpath = dir.join("lines.csv");
        let lines = if lpath.exists() {
            let bytes = fs::read(&lpath).map_err(|e| Error::io(&lpath, e))?;
            csv::Reader::from_reader(bytes.as_slice())
                .deserialize()
                .collect::<Result<Vec<Line>, _>>()?
        } else {
            Vec::new()
        };
        PowerSystem::new(generators, lines)
    }

    /// Writes `generators.csv` and `lines.csv` into `dir` (created if needed).
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut w = csv::Writer::from_path(dir.join("generators.csv"))?;
        for g in &self.generators {
            w.serialize(g)?;
        }
        w.flush()
            .map_err(|e| Error::io(dir.join("generators.csv"), e))?;
        let mut w = csv::Writer::from_path(dir.join("lines.csv"))?;
        w.write_record(["id", "from", "to", "Fmax"])?;
        for l in &self.lines {
            let cap = l.capacity.map(|c| c.to_string()).unwrap_or_default();
            w.write_record([l.id.as_str(), l.from.as_str(), l.to.as_str(), cap.as_str()])?;
        }
        w.flush().map_err(|e| Error::io(dir.join("lines.csv"), e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(id: &str, node: &str, c: f64, cap: f64) -> Generator {
        Generator {
            id: id.into(),
            node: node.into(),
            cost: c,
            up_cost: c + 10.0,
            down_cost: c - 5.0,
            capacity: cap,
            up_limit: cap,
            down_limit: cap,
        }
    }

    #[test]
    fn merit_order_with_id_tie_break() {
        let sys = PowerSystem::new(
            vec![
                gen("b", "n", 10.0, 5.0),
                gen("z", "n", 3.0, 5.0),
                gen("a", "n", 10.0, 5.0),
            ],
            vec![],
        )
        .unwrap();
        let order: Vec<&str> = sys.generators().iter().map(|g| g.id.as_str()).collect();
        assert_eq!(order, ["z", "a", "b"]);
        assert_eq!(sys.total_capacity(), 15.0);
    }

    #[test]
    fn rebuilding_preserves_order() {
        let sys = PowerSystem::new(
            vec![gen("g2", "2", 15.0, 150.0), gen("g1", "1", 5.0, 60.0)],
            vec![],
        )
        .unwrap();
        let again = PowerSystem::new(sys.generators().to_vec(), vec![]).unwrap();
        assert_eq!(sys.generators(), again.generators());
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            PowerSystem::new(vec![], vec![]),
            Err(Error::EmptySystem)
        ));
        assert!(matches!(
            PowerSystem::new(vec![gen("g", "1", 1.0, 0.0)], vec![]),
            Err(Error::NonPositiveCapacity(_))
        ));
        let mut bad = gen("g", "1", 1.0, 1.0);
        bad.up_cost = bad.down_cost;
        assert!(matches!(
            PowerSystem::new(vec![bad], vec![]),
            Err(Error::UpCostNotAboveDownCost(_))
        ));
        assert!(matches!(
            PowerSystem::new(
                vec![gen("g", "1", 1.0, 1.0), gen("g", "2", 1.0, 1.0)],
                vec![]
            ),
            Err(Error::DuplicateId(_))
        ));
        let dangling =
            PowerSystem::with_nodes(vec!["1".into()], vec![gen("g", "9", 1.0, 1.0)], vec![]);
        assert!(matches!(dangling, Err(Error::DanglingNodeReference(..))));
        let self_loop = Line {
            id: "l".into(),
            from: "1".into(),
            to: "1".into(),
            capacity: None,
        };
        assert!(PowerSystem::new(vec![gen("g", "1", 1.0, 1.0)], vec![self_loop]).is_err());
    }

    #[test]
    fn csv_round_trip_keeps_unbounded_lines() {
        let dir = tempfile::tempdir().unwrap();
        let lines = vec![
            Line {
                id: "l1".into(),
                from: "1".into(),
                to: "3".into(),
                capacity: Some(30.0),
            },
            Line {
                id: "l2".into(),
                from: "2".into(),
                to: "3".into(),
                capacity: None,
            },
        ];
        let sys = PowerSystem::new(
            vec![gen("g1", "1", 5.0, 60.0), gen("g2", "2", 15.0, 150.0)],
            lines,
        )
        .unwrap();
        sys.write_csv(dir.path()).unwrap();
        let back = PowerSystem::load_csv(dir.path()).unwrap();
        assert_eq!(back.generators(), sys.generators());
        assert_eq!(back.lines(), sys.lines());
        assert_eq!(back.nodes(), ["1", "2", "3"]);
    }
}
