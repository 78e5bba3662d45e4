//! Feature/outcome samples and their CSV form.
//!
//! Columns: `timestamp,LF,L,<one per node>` followed by optional extra
//! features named `x:<name>`. The feature vector is `(1, LF, extras...)`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack (MW) between the aggregate and the nodal sum.
const AGGREGATE_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub timestamp: Option<String>,
    /// Context `x`; the first entry is the constant 1.
    pub features: Vec<f64>,
    /// System point forecast `L^F`.
    pub forecast: f64,
    /// Actual net load per node, aligned with [`crate::PowerSystem::nodes`].
    pub nodal_loads: Vec<f64>,
    /// Actual aggregate net demand `L`.
    pub load: f64,
    /// Relative probability mass; normalized over the set by the trainer.
    pub weight: f64,
}

impl Sample {
    /// Sample with features `(1, forecast)` and unit weight.
    pub fn new(forecast: f64, nodal_loads: Vec<f64>) -> Self {
        Self::with_features(vec![1.0, forecast], forecast, nodal_loads)
    }

    pub fn with_features(features: Vec<f64>, forecast: f64, nodal_loads: Vec<f64>) -> Self {
        let load = nodal_loads.iter().sum();
        Sample {
            timestamp: None,
            features,
            forecast,
            nodal_loads,
            load,
            weight: 1.0,
        }
    }

    pub fn validate(&self, nodes: usize) -> Result<()> {
        if self.features.first() != Some(&1.0) {
            return Err(Error::InvalidSample(
                "first feature must be the constant 1".into(),
            ));
        }
        if self.nodal_loads.len() != nodes {
            return Err(Error::DimensionMismatch {
                expected: nodes,
                found: self.nodal_loads.len(),
            });
        }
        let values = self
            .features
            .iter()
            .chain(&self.nodal_loads)
            .chain([&self.forecast, &self.load]);
        if values.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSample("non-finite value".into()));
        }
        let sum: f64 = self.nodal_loads.iter().sum();
        if (sum - self.load).abs() > AGGREGATE_TOL * (1.0 + sum.abs()) {
            return Err(Error::InvalidSample(format!(
                "aggregate {} differs from nodal sum {sum}",
                self.load
            )));
        }
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(Error::InvalidSample(format!(
                "weight {} must be positive",
                self.weight
            )));
        }
        Ok(())
    }
}

/// Checks a whole set: non-empty, consistent feature dimension, valid rows.
pub fn validate_samples(samples: &[Sample], nodes: usize) -> Result<usize> {
    let first = samples.first().ok_or(Error::EmptySampleSet)?;
    let dim = first.features.len();
    for s in samples {
        if s.features.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: s.features.len(),
            });
        }
        s.validate(nodes)?;
    }
    Ok(dim)
}

/// Weights normalized to sum to one.
pub fn normalized_weights(samples: &[Sample]) -> Vec<f64> {
    let total: f64 = samples.iter().map(|s| s.weight).sum();
    samples.iter().map(|s| s.weight / total).collect()
}

pub fn write_samples(
    path: &Path,
    nodes: &[String],
    samples: &[Sample],
    extra_features: &[String],
) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["timestamp".to_string(), "LF".into(), "L".into()];
    header.extend(nodes.iter().cloned());
    header.extend(extra_features.iter().map(|f| format!("x:{f}")));
    w.write_record(&header)?;
    for s in samples {
        if s.nodal_loads.len() != nodes.len() {
            return Err(Error::DimensionMismatch {
                expected: nodes.len(),
                found: s.nodal_loads.len(),
            });
        }
        if s.features.len() != 2 + extra_features.len() {
            return Err(Error::DimensionMismatch {
                expected: 2 + extra_features.len(),
                found: s.features.len(),
            });
        }
        let mut row = vec![
            s.timestamp.clone().unwrap_or_default(),
            s.forecast.to_string(),
            s.load.to_string(),
        ];
        row.extend(s.nodal_loads.iter().map(f64::to_string));
        row.extend(s.features[2..].iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a sample file, mapping node columns onto `nodes` by name.
pub fn read_samples(path: &Path, nodes: &[String]) -> Result<Vec<Sample>> {
    let file = path.display().to_string();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let header = r.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                file: file.clone(),
                column: name.to_string(),
            })
    };
    let ts = col("timestamp")?;
    let lf = col("LF")?;
    let l = col("L")?;
    let node_cols = nodes.iter().map(|n| col(n)).collect::<Result<Vec<_>>>()?;
    let extra: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("x:"))
        .map(|(i, _)| i)
        .collect();
    for (i, h) in header.iter().enumerate() {
        if ![ts, lf, l].contains(&i) && !node_cols.contains(&i) && !extra.contains(&i) {
            return Err(Error::InvalidSample(format!(
                "{file}: column `{h}` is not a node of the system"
            )));
        }
    }

    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i].trim().parse().map_err(|_| {
                Error::InvalidSample(format!(
                    "{file}: row {}: `{}` is not a number",
                    row + 1,
                    &rec[i]
                ))
            })
        };
        let forecast = num(lf)?;
        let mut features = vec![1.0, forecast];
        for &c in &extra {
            features.push(num(c)?);
        }
        let nodal_loads = node_cols
            .iter()
            .map(|&c| num(c))
            .collect::<Result<Vec<_>>>()?;
        let mut s = Sample::with_features(features, forecast, nodal_loads);
        let load = num(l)?;
        if (load - s.load).abs() > AGGREGATE_TOL * (1.0 + load.abs()) {
            return Err(Error::InvalidSample(format!(
                "{file}: row {}: L = {load} but nodal loads sum to {}",
                row + 1,
                s.load
            )));
        }
        s.load = load;
        s.timestamp = Some(rec[ts].to_string()).filter(|t| !t.is_empty());
        out.push(s);
    }
    if out.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    Ok(out)
}
