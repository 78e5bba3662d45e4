//! Hourly per-node series (transparency-platform style exports) and their
//! conversion into net-demand samples.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, TimeDelta, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::sample::Sample;

/// Column order of a node file after the timestamp.
pub const FIELDS: [&str; 7] = [
    "load_actual",
    "load_forecast",
    "wind_actual",
    "wind_forecast",
    "solar_actual",
    "solar_forecast",
    "hydro_actual",
];

const LOAD_A: usize = 0;
const LOAD_F: usize = 1;
const WIND_A: usize = 2;
const WIND_F: usize = 3;
const SOLAR_A: usize = 4;
const SOLAR_F: usize = 5;
const HYDRO_A: usize = 6;

/// Warn when more than this share of cells had to be filled.
pub const DEFAULT_MAX_IMPUTED_FRACTION: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct NodeSeries {
    pub node: String,
    pub timestamps: Vec<NaiveDateTime>,
    /// `None` marks a gap.
    pub values: Vec<[Option<f64>; 7]>,
    pub imputed: Vec<[bool; 7]>,
}

impl NodeSeries {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn gaps(&self) -> usize {
        self.values.iter().flatten().filter(|v| v.is_none()).count()
    }

    pub fn imputed_cells(&self) -> usize {
        self.imputed.iter().flatten().filter(|&&b| b).count()
    }

    pub fn cells(&self) -> usize {
        self.len() * FIELDS.len()
    }
}

fn parse_timestamp(text: &str) -> Option<NaiveDateTime> {
    let t = text.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(t) {
        return Some(dt.naive_utc());
    }
    let t = t.strip_suffix('Z').unwrap_or(t);
    [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ]
    .iter()
    .find_map(|f| NaiveDateTime::parse_from_str(t, f).ok())
}

/// Parses one node file.
pub fn read_node_series(path: &Path, node: &str) -> Result<NodeSeries> {
    let file = path.display().to_string();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let header = r.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn {
                file: file.clone(),
                column: name.to_string(),
            })
    };
    let ts_col = col("timestamp")?;
    let cols = FIELDS.iter().map(|f| col(f)).collect::<Result<Vec<_>>>()?;

    let mut series = NodeSeries {
        node: node.to_string(),
        timestamps: Vec::new(),
        values: Vec::new(),
        imputed: Vec::new(),
    };
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let raw = rec.get(ts_col).unwrap_or("");
        let ts = parse_timestamp(raw).ok_or_else(|| Error::UnparseableTimestamp {
            file: file.clone(),
            value: raw.to_string(),
        })?;
        if let Some(&prev) = series.timestamps.last() {
            if ts - prev != TimeDelta::hours(1) {
                return Err(Error::NonHourlyCadence {
                    file: file.clone(),
                    row: row + 1,
                });
            }
        }
        let mut values = [None; 7];
        for (v, &c) in values.iter_mut().zip(&cols) {
            let cell = rec.get(c).unwrap_or("").trim();
            if !cell.is_empty() {
                let x: f64 = cell.parse().map_err(|_| {
                    Error::InvalidSample(format!(
                        "{file}: row {}: `{cell}` is not a number",
                        row + 1
                    ))
                })?;
                *v = Some(x).filter(|x| x.is_finite());
            }
        }
        series.timestamps.push(ts);
        series.values.push(values);
        series.imputed.push([false; 7]);
    }
    Ok(series)
}

/// Reads every `*.csv` in `dir`; the file stem names the node.
pub fn load_timeseries(dir: &Path) -> Result<BTreeMap<String, NodeSeries>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                files.push((stem.to_string(), path.clone()));
            }
        }
    }
    if files.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no node files in {}",
            dir.display()
        )));
    }
    files.sort();
    let parsed = par_map(&files, |(node, path)| read_node_series(path, node));
    let mut out = BTreeMap::new();
    for s in parsed {
        let s = s?;
        out.insert(s.node.clone(), s);
    }
    Ok(out)
}

/// Linear interpolation between the nearest present neighbours; leading and
/// trailing gaps take the nearest present value.
pub fn interpolate_gaps(series: &NodeSeries) -> Result<NodeSeries> {
    let mut out = series.clone();
    for f in 0..FIELDS.len() {
        let present: Vec<usize> = (0..series.len())
            .filter(|&t| series.values[t][f].is_some())
            .collect();
        let (Some(&first), Some(&last)) = (present.first(), present.last()) else {
            if series.is_empty() {
                continue;
            }
            return Err(Error::AllMissingField {
                node: series.node.clone(),
                field: FIELDS[f].to_string(),
            });
        };
        let value = |t: usize| series.values[t][f].unwrap_or(0.0);
        for t in 0..first {
            out.values[t][f] = Some(value(first));
            out.imputed[t][f] = true;
        }
        for t in last + 1..series.len() {
            out.values[t][f] = Some(value(last));
            out.imputed[t][f] = true;
        }
        for w in present.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (va, vb) = (value(a), value(b));
            for t in a + 1..b {
                let s = (t - a) as f64 / (b - a) as f64;
                out.values[t][f] = Some(va + s * (vb - va));
                out.imputed[t][f] = true;
            }
        }
    }
    Ok(out)
}

/// Optional features appended after `(1, L^F)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSpec {
    /// Hour of day, 0–23.
    pub hour_of_day: bool,
    /// The forecast net load of every node, in node order.
    pub nodal_forecasts: bool,
}

impl FeatureSpec {
    pub fn names(&self, nodes: &[String]) -> Vec<String> {
        let mut names = Vec::new();
        if self.hour_of_day {
            names.push("hour".to_string());
        }
        if self.nodal_forecasts {
            names.extend(nodes.iter().map(|n| format!("LF:{n}")));
        }
        names
    }
}

/// Share of repaired cells over a set of series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputationSummary {
    pub cells: usize,
    pub imputed: usize,
    pub fraction: f64,
}

pub fn imputation_summary<'a>(
    series: impl IntoIterator<Item = &'a NodeSeries>,
    max_fraction: f64,
) -> ImputationSummary {
    let (mut cells, mut imputed) = (0, 0);
    for s in series {
        cells += s.cells();
        imputed += s.imputed_cells();
    }
    let fraction = if cells == 0 {
        0.0
    } else {
        imputed as f64 / cells as f64
    };
    if fraction > max_fraction {
        log::warn!(
            "{:.2}% of cells were imputed (threshold {:.2}%)",
            100.0 * fraction,
            100.0 * max_fraction
        );
    }
    ImputationSummary {
        cells,
        imputed,
        fraction,
    }
}

/// One sample per hour. Nodal actual net load subtracts actual wind, solar
/// and hydro; the forecast side uses forecast load, wind and solar but the
/// actual hydro production. `nodes` fixes the column order; every node must
/// have a series.
pub fn to_samples(
    series: &BTreeMap<String, NodeSeries>,
    nodes: &[String],
    spec: &FeatureSpec,
) -> Result<Vec<Sample>> {
    let ordered = nodes
        .iter()
        .map(|n| {
            series
                .get(n)
                .ok_or_else(|| Error::InsufficientData(format!("no series for node `{n}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(extra) = series.keys().find(|k| !nodes.contains(k)) {
        return Err(Error::InsufficientData(format!(
            "series `{extra}` is not a node of the system"
        )));
    }
    let first = ordered.first().ok_or(Error::EmptySampleSet)?;
    for s in &ordered {
        if s.timestamps != first.timestamps {
            return Err(Error::TimestampMisalignment(format!(
                "`{}` and `{}` differ",
                first.node, s.node
            )));
        }
        if s.gaps() > 0 {
            return Err(Error::InvalidSample(format!(
                "`{}` still has {} gaps",
                s.node,
                s.gaps()
            )));
        }
    }

    let mut out = Vec::with_capacity(first.len());
    for (t, ts) in first.timestamps.iter().enumerate() {
        let mut actual = Vec::with_capacity(nodes.len());
        let mut forecast = Vec::with_capacity(nodes.len());
        for s in &ordered {
            let v = s.values[t].map(|x| x.unwrap_or(0.0));
            actual.push(v[LOAD_A] - v[WIND_A] - v[SOLAR_A] - v[HYDRO_A]);
            forecast.push(v[LOAD_F] - v[WIND_F] - v[SOLAR_F] - v[HYDRO_A]);
        }
        let lf: f64 = forecast.iter().sum();
        let mut features = vec![1.0, lf];
        if spec.hour_of_day {
            features.push(ts.hour() as f64);
        }
        if spec.nodal_forecasts {
            features.extend(&forecast);
        }
        let mut sample = Sample::with_features(features, lf, actual);
        sample.timestamp = Some(ts.format("%Y-%m-%dT%H:%M:%S").to_string());
        out.push(sample);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(field: usize, vals: &[Option<f64>]) -> NodeSeries {
        let start = parse_timestamp("2020-01-01T00:00:00").unwrap();
        NodeSeries {
            node: "A".into(),
            timestamps: (0..vals.len())
                .map(|i| start + TimeDelta::hours(i as i64))
                .collect(),
            values: vals
                .iter()
                .map(|&v| {
                    let mut row = [Some(1.0); 7];
                    row[field] = v;
                    row
                })
                .collect(),
            imputed: vec![[false; 7]; vals.len()],
        }
    }

    fn field(s: &NodeSeries, f: usize) -> Vec<f64> {
        s.values.iter().map(|r| r[f].unwrap()).collect()
    }

    #[test]
    fn interpolation_rules() {
        let s = interpolate_gaps(&series(WIND_A, &[Some(10.0), None, Some(30.0)])).unwrap();
        assert_eq!(field(&s, WIND_A), vec![10.0, 20.0, 30.0]);
        assert!(s.imputed[1][WIND_A] && !s.imputed[0][WIND_A]);
        let s = interpolate_gaps(&series(WIND_A, &[None, Some(5.0), Some(7.0)])).unwrap();
        assert_eq!(field(&s, WIND_A), vec![5.0, 5.0, 7.0]);
        let s =
            interpolate_gaps(&series(LOAD_A, &[Some(0.0), None, None, None, Some(8.0)])).unwrap();
        assert_eq!(field(&s, LOAD_A), vec![0.0, 2.0, 4.0, 6.0, 8.0]);
        assert_eq!(s.imputed_cells(), 3);
        let full = series(LOAD_A, &[Some(1.0), Some(2.0)]);
        assert_eq!(interpolate_gaps(&full).unwrap(), full);
        assert!(matches!(
            interpolate_gaps(&series(SOLAR_F, &[None, None])),
            Err(Error::AllMissingField { .. })
        ));
    }

    #[test]
    fn net_load_arithmetic() {
        let ts = parse_timestamp("2020-01-01 05:00:00").unwrap();
        let row = [
            Some(100.0),
            Some(100.0),
            Some(20.0),
            Some(30.0),
            Some(5.0),
            Some(0.0),
            Some(10.0),
        ];
        let s = NodeSeries {
            node: "A".into(),
            timestamps: vec![ts],
            values: vec![row],
            imputed: vec![[false; 7]],
        };
        let map = BTreeMap::from([("A".to_string(), s)]);
        let spec = FeatureSpec {
            hour_of_day: true,
            nodal_forecasts: false,
        };
        let out = to_samples(&map, &["A".into()], &spec).unwrap();
        assert_eq!(out[0].nodal_loads, vec![65.0]);
        assert_eq!(out[0].forecast, 60.0);
        assert_eq!(out[0].features, vec![1.0, 60.0, 5.0]);
        assert_eq!(out[0].timestamp.as_deref(), Some("2020-01-01T05:00:00"));
    }

    #[test]
    fn negative_net_load_is_kept() {
        let ts = parse_timestamp("2020-01-01T00:00").unwrap();
        let row = [
            Some(10.0),
            Some(10.0),
            Some(50.0),
            Some(50.0),
            Some(0.0),
            Some(0.0),
            Some(0.0),
        ];
        let s = NodeSeries {
            node: "A".into(),
            timestamps: vec![ts],
            values: vec![row],
            imputed: vec![[false; 7]],
        };
        let out = to_samples(
            &BTreeMap::from([("A".to_string(), s)]),
            &["A".into()],
            &FeatureSpec::default(),
        )
        .unwrap();
        assert_eq!(out[0].load, -40.0);
    }

    #[test]
    fn misaligned_series_are_rejected() {
        let a = series(LOAD_A, &[Some(1.0), Some(2.0)]);
        let mut b = a.clone();
        b.node = "B".into();
        b.timestamps[0] -= TimeDelta::hours(1);
        b.timestamps[1] -= TimeDelta::hours(1);
        let map = BTreeMap::from([("A".to_string(), a), ("B".to_string(), b)]);
        let nodes = ["A".to_string(), "B".to_string()];
        assert!(matches!(
            to_samples(&map, &nodes, &FeatureSpec::default()),
            Err(Error::TimestampMisalignment(_))
        ));
    }

    #[test]
    fn parses_files_and_flags_problems() {
        let dir = tempfile::tempdir().unwrap();
        let header = FIELDS.join(",");
        let good = format!("timestamp,{header}\n2020-01-01T00:00:00,1,1,,1,1,1,1\n2020-01-01T01:00:00,2,2,2,2,2,2,2\n");
        fs::write(dir.path().join("DE.csv"), &good).unwrap();
        let map = load_timeseries(dir.path()).unwrap();
        assert_eq!(map["DE"].gaps(), 1);
        assert_eq!(map["DE"].values[0][WIND_A], None);

        let bad = good.replace("01:00:00", "03:00:00");
        fs::write(dir.path().join("DE.csv"), bad).unwrap();
        assert!(matches!(
            load_timeseries(dir.path()),
            Err(Error::NonHourlyCadence { row: 2, .. })
        ));

        let bad = good.replace("2020-01-01T00:00:00", "yesterday");
        fs::write(dir.path().join("DE.csv"), bad).unwrap();
        assert!(matches!(
            load_timeseries(dir.path()),
            Err(Error::UnparseableTimestamp { .. })
        ));

        let bad = good.replace(",hydro_actual", "").replace(",1\n", "\n");
        fs::write(dir.path().join("DE.csv"), bad).unwrap();
        assert!(matches!(
            load_timeseries(dir.path()),
            Err(Error::MissingColumn { .. })
        ));
    }

    #[test]
    fn imputed_share() {
        let s =
            interpolate_gaps(&series(LOAD_A, &[Some(0.0), None, Some(2.0), Some(3.0)])).unwrap();
        let sum = imputation_summary([&s], DEFAULT_MAX_IMPUTED_FRACTION);
        assert_eq!((sum.cells, sum.imputed), (28, 1));
    }
}
