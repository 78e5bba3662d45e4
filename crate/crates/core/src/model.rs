//! Learned prescription rules and their JSON model file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::nearest;
use crate::error::{Error, Result};

/// One affine rule `L̂ = qᵀx` with the statistics of the solve that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineRule {
    pub q: Vec<f64>,
    /// Training objective (weighted mean two-stage cost).
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub status: String,
    pub nodes: usize,
    /// Number of (possibly weighted) training points.
    pub samples: usize,
    /// Fewer points than features: the rule may be underdetermined.
    pub degenerate: bool,
}

impl AffineRule {
    pub fn apply(&self, x: &[f64]) -> f64 {
        self.q.iter().zip(x).map(|(q, x)| q * x).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrescriptionModel {
    pub k: usize,
    pub feature_dim: usize,
    /// Cluster centres over the non-constant features.
    pub centroids: Vec<Vec<f64>>,
    pub rules: Vec<AffineRule>,
    pub clamp: [f64; 2],
    pub seed: u64,
    /// Percentage of each cluster kept as medoids.
    pub reduction: f64,
    /// `"milp"` or `"relaxed"`.
    pub trainer: String,
}

impl PrescriptionModel {
    pub fn single(rule: AffineRule, feature_dim: usize, capacity: f64, trainer: &str) -> Self {
        PrescriptionModel {
            k: 1,
            feature_dim,
            centroids: vec![vec![0.0; feature_dim.saturating_sub(1)]],
            rules: vec![rule],
            clamp: [0.0, capacity],
            seed: 0,
            reduction: 100.0,
            trainer: trainer.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.rules.len() != self.k || self.centroids.len() != self.k {
            return Err(Error::InvalidConfig(format!(
                "model has k = {} but {} rules and {} centroids",
                self.k,
                self.rules.len(),
                self.centroids.len()
            )));
        }
        for r in &self.rules {
            if r.q.len() != self.feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.feature_dim,
                    found: r.q.len(),
                });
            }
        }
        for c in &self.centroids {
            if c.len() + 1 != self.feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.feature_dim - 1,
                    found: c.len(),
                });
            }
        }
        if !(self.clamp[0] <= self.clamp[1]) {
            return Err(Error::InvalidConfig("clamp bounds out of order".into()));
        }
        Ok(())
    }

    /// Cluster whose centroid is nearest to `x` (constant feature ignored).
    pub fn cluster_of(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                found: x.len(),
            });
        }
        Ok(nearest(&self.centroids, &x[1..]))
    }

    /// Prescribed net demand for context `x`, clamped to the dispatchable range.
    pub fn prescribe(&self, x: &[f64]) -> Result<f64> {
        let k = self.cluster_of(x)?;
        Ok(self.rules[k].apply(x).clamp(self.clamp[0], self.clamp[1]))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: PrescriptionModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// `x ↦ prescribe(model, x)`.
pub fn prescribe(model: &PrescriptionModel, x: &[f64]) -> Result<f64> {
    model.prescribe(x)
}
