//! Out-of-sample benchmarking of prescription methods.
//!
//! Every method is simulated the same way: the prescription is dispatched in
//! merit order, the actual nodal loads are revealed, and the balancing LP
//! settles the difference. Methods differ only in how they map a context to
//! a prescription.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dispatch::{system_optimum, Balancer};
use crate::error::{Error, Result};
use crate::exec::{par_map, par_map_init};
use crate::model::PrescriptionModel;
use crate::sample::{validate_samples, Sample};
use crate::system::PowerSystem;
use crate::trainer::{train_partitioned_with, TrainConfig, TrainerKind};

/// Relative slack for the per-sample floor check.
const FLOOR_TOL: f64 = 1e-7;

/// Rolling-window layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Protocol {
    pub window_length: usize,
    pub windows: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub subsample_seed: u64,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            window_length: 150,
            windows: 10,
            train_size: 100,
            test_size: 50,
            subsample_seed: 0,
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if self.windows == 0 || self.train_size == 0 || self.test_size == 0 {
            return Err(Error::InvalidConfig(
                "windows, train and test sizes must be positive".into(),
            ));
        }
        if self.train_size + self.test_size > self.window_length {
            return Err(Error::InvalidConfig(format!(
                "train ({}) + test ({}) exceed the window length {}",
                self.train_size, self.test_size, self.window_length
            )));
        }
        Ok(())
    }

    /// First index of each window: non-overlapping, evenly spread over a
    /// series of `len` points, the first at 0 and the last flush with the end.
    pub fn window_starts(&self, len: usize) -> Result<Vec<usize>> {
        self.validate()?;
        let need = self.windows * self.window_length;
        if len < need {
            return Err(Error::InsufficientData(format!(
                "{} windows of {} points need {need} samples, got {len}",
                self.windows, self.window_length
            )));
        }
        if self.windows == 1 {
            return Ok(vec![0]);
        }
        let span = len - self.window_length;
        Ok((0..self.windows)
            .map(|w| w * span / (self.windows - 1))
            .collect())
    }

    /// Train and test indices (into the full series) for window `w`.
    pub fn split(&self, start: usize, w: usize) -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (start..start + self.window_length).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.subsample_seed ^ (w as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        idx.shuffle(&mut rng);
        let mut train = idx[..self.train_size].to_vec();
        let mut test = idx[self.train_size..self.train_size + self.test_size].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        (train, test)
    }
}

/// A way of producing prescriptions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    /// The point forecast, clamped (F-SC).
    Forecast,
    /// Affine rules from the bilevel estimation problem (P-SC).
    Prescribed { k: usize, reduction: f64 },
    /// Affine rules from the estimation LP without merit order (L-SC).
    Relaxed { k: usize, reduction: f64 },
    /// The realized load, clamped (perfect information).
    Perfect,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Forecast => "F-SC".into(),
            Method::Perfect => "PI".into(),
            Method::Prescribed { k, reduction } => labelled("P-SC", *k, *reduction),
            Method::Relaxed { k, reduction } => labelled("L-SC", *k, *reduction),
        }
    }

    /// Parses `fsc`, `pi`, `psc`, `lsc`, optionally followed by `:K` and
    /// `:r` (e.g. `psc:5:50`).
    pub fn parse(text: &str) -> Result<Method> {
        let mut parts = text.split(':');
        let head = parts.next().unwrap_or("").to_ascii_lowercase();
        let k = parts.next().map(|v| v.parse::<usize>()).transpose();
        let r = parts.next().map(|v| v.parse::<f64>()).transpose();
        let bad = || Error::InvalidConfig(format!("unknown method `{text}`"));
        let (k, r) = match (k, r) {
            (Ok(k), Ok(r)) if parts.next().is_none() => (k.unwrap_or(1), r.unwrap_or(100.0)),
            _ => return Err(bad()),
        };
        match head.replace('-', "").as_str() {
            "fsc" | "forecast" => Ok(Method::Forecast),
            "pi" | "perfect" => Ok(Method::Perfect),
            "psc" => Ok(Method::Prescribed { k, reduction: r }),
            "lsc" => Ok(Method::Relaxed { k, reduction: r }),
            _ => Err(bad()),
        }
    }

    fn trainer(&self) -> Option<(usize, f64, TrainerKind)> {
        match *self {
            Method::Prescribed { k, reduction } => Some((k, reduction, TrainerKind::Milp)),
            Method::Relaxed { k, reduction } => Some((k, reduction, TrainerKind::Relaxed)),
            _ => None,
        }
    }
}

fn labelled(name: &str, k: usize, reduction: f64) -> String {
    if k == 1 && reduction == 100.0 {
        name.to_string()
    } else {
        format!("{name} K={k} r={reduction}%")
    }
}

/// Two-stage outcome of one test sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    /// Position in the evaluated sequence.
    pub index: usize,
    pub prescription: f64,
    pub forward_cost: f64,
    pub balancing_cost: f64,
    pub total_cost: f64,
    pub slack_active: bool,
}

/// Simulates forward dispatch and balancing for every sample. Failures are
/// reported per row.
pub fn evaluate_method<P>(
    system: &PowerSystem,
    prescriber: P,
    test: &[Sample],
) -> Vec<Result<CostRow>>
where
    P: Fn(&Sample) -> Result<f64> + Sync,
{
    let items: Vec<(usize, &Sample)> = test.iter().enumerate().collect();
    par_map_init(
        &items,
        || Balancer::new(system),
        |balancer, &(index, s)| {
            let balancer = balancer
                .as_mut()
                .map_err(|e| Error::SolverFailure(e.to_string()))?;
            let prescription = prescriber(s)?;
            let (fwd, bal) = balancer.two_stage_cost(prescription, &s.nodal_loads)?;
            Ok(CostRow {
                index,
                prescription,
                forward_cost: fwd.forward_cost,
                balancing_cost: bal.balancing_cost,
                total_cost: bal.total_cost,
                slack_active: bal.slack_active,
            })
        },
    )
}

pub fn forecast_prescriber(system: &PowerSystem) -> impl Fn(&Sample) -> Result<f64> + Sync {
    let cap = system.total_capacity();
    move |s: &Sample| Ok(s.forecast.clamp(0.0, cap))
}

pub fn perfect_prescriber(system: &PowerSystem) -> impl Fn(&Sample) -> Result<f64> + Sync {
    let cap = system.total_capacity();
    move |s: &Sample| Ok(s.load.clamp(0.0, cap))
}

pub fn model_prescriber(model: &PrescriptionModel) -> impl Fn(&Sample) -> Result<f64> + Sync + '_ {
    move |s: &Sample| model.prescribe(&s.features)
}

/// Mean two-stage cost when the realized load is prescribed.
pub fn perfect_information_cost(system: &PowerSystem, test: &[Sample]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let rows = collect_rows(evaluate_method(system, perfect_prescriber(system), test))?;
    Ok(mean(rows.iter().map(|r| r.total_cost)))
}

/// `100 · (baseline − method) / baseline`.
pub fn delta_cost(baseline_mean: f64, method_mean: f64) -> Result<f64> {
    if !(baseline_mean > 0.0) {
        return Err(Error::NonPositiveBaseline(baseline_mean));
    }
    Ok(100.0 * (baseline_mean - method_mean) / baseline_mean)
}

fn collect_rows(rows: Vec<Result<CostRow>>) -> Result<Vec<CostRow>> {
    rows.into_iter().collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// One per-sample line of the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub window: usize,
    pub method: String,
    /// Index of the sample in the input series.
    pub sample: usize,
    pub timestamp: String,
    pub forecast: f64,
    pub load: f64,
    pub cluster: Option<usize>,
    pub prescription: f64,
    pub forward_cost: f64,
    pub balancing_cost: f64,
    pub total_cost: f64,
    /// System-optimal cost of the sample: no method can do better.
    pub floor: f64,
    pub slack_active: bool,
}

/// Training outcome of one method in one window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub window: usize,
    pub method: String,
    pub model: PrescriptionModel,
    /// Worst relative gap over the clusters.
    pub max_gap: f64,
    /// Training objective against the in-sample forecast cost.
    pub in_sample_objective: f64,
    pub in_sample_forecast_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub window_means: Vec<f64>,
    /// Average of the window means.
    pub mean: f64,
    /// Average over all evaluated samples.
    pub pooled_mean: f64,
    /// Relative saving against the forecast baseline, from `mean`.
    pub delta_percent: f64,
    pub pooled_delta_percent: f64,
    pub samples: usize,
    pub slack_samples: usize,
    pub floor_violations: usize,
}

/// Deterministic part of an evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub protocol: Option<Protocol>,
    pub window_starts: Vec<usize>,
    pub methods: Vec<MethodSummary>,
    pub fits: Vec<FitSummary>,
    #[serde(skip)]
    pub rows: Vec<ReportRow>,
    /// Wall-clock training seconds per (window, method); kept out of the
    /// summary file because it varies between runs.
    #[serde(skip)]
    pub timings: Vec<Timing>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub window: usize,
    pub method: String,
    pub seconds: f64,
}

impl EvaluationReport {
    pub fn method(&self, label: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == label)
    }

    /// Total training seconds of a method over all windows.
    pub fn training_seconds(&self, label: &str) -> f64 {
        self.timings
            .iter()
            .filter(|t| t.method == label)
            .map(|t| t.seconds)
            .sum()
    }

    /// Writes `rows.csv`, `summary.json`, `plot.csv` and `timings.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut w = csv::Writer::from_path(dir.join("rows.csv"))?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(dir.join("rows.csv"), e))?;

        let mut w = csv::Writer::from_path(dir.join("plot.csv"))?;
        w.write_record(["window", "method", "cluster", "LF", "prescription"])?;
        for row in self.rows.iter().filter(|r| r.cluster.is_some()) {
            w.write_record([
                row.window.to_string(),
                row.method.clone(),
                row.cluster.unwrap_or_default().to_string(),
                row.forecast.to_string(),
                row.prescription.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(dir.join("plot.csv"), e))?;

        let summary = dir.join("summary.json");
        fs::write(&summary, serde_json::to_string_pretty(self)? + "\n")
            .map_err(|e| Error::io(&summary, e))?;
        let timings = dir.join("timings.json");
        fs::write(
            &timings,
            serde_json::to_string_pretty(&self.timings)? + "\n",
        )
        .map_err(|e| Error::io(&timings, e))
    }

    /// Plain-text table of the method summaries.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<24} {:>14} {:>9} {:>14} {:>9} {:>6}\n",
            "method", "mean", "Δ%", "pooled", "Δ%", "slack"
        );
        for m in &self.methods {
            out += &format!(
                "{:<24} {:>14.3} {:>9.3} {:>14.3} {:>9.3} {:>6}\n",
                m.method,
                m.mean,
                m.delta_percent,
                m.pooled_mean,
                m.pooled_delta_percent,
                m.slack_samples
            );
        }
        out
    }
}

/// Evaluation of one window's test set (training already done).
struct WindowResult {
    rows: Vec<ReportRow>,
    fits: Vec<FitSummary>,
    timings: Vec<Timing>,
}

fn run_window(
    system: &PowerSystem,
    samples: &[Sample],
    window: usize,
    train: &[usize],
    test: &[usize],
    methods: &[Method],
    config: &TrainConfig,
) -> Result<WindowResult> {
    let train_set: Vec<Sample> = train.iter().map(|&i| samples[i].clone()).collect();
    let test_set: Vec<Sample> = test.iter().map(|&i| samples[i].clone()).collect();
    let floors = par_map(&test_set, |s| {
        system_optimum(system, &s.nodal_loads, config.penalty)
    });
    let floors = floors.into_iter().collect::<Result<Vec<_>>>()?;

    let mut out = WindowResult {
        rows: Vec::new(),
        fits: Vec::new(),
        timings: Vec::new(),
    };
    let mut in_sample_forecast = None;
    for method in methods {
        let label = method.label();
        let (rows, model) = match method.trainer() {
            None => {
                let rows = match method {
                    Method::Perfect => {
                        evaluate_method(system, perfect_prescriber(system), &test_set)
                    }
                    _ => evaluate_method(system, forecast_prescriber(system), &test_set),
                };
                (rows, None)
            }
            Some((k, reduction, kind)) => {
                let t = Instant::now();
                let (model, _) =
                    train_partitioned_with(system, &train_set, k, reduction, config, kind)?;
                out.timings.push(Timing {
                    window,
                    method: label.clone(),
                    seconds: t.elapsed().as_secs_f64(),
                });
                let forecast_cost = match in_sample_forecast {
                    Some(c) => c,
                    None => {
                        let rows = collect_rows(evaluate_method(
                            system,
                            forecast_prescriber(system),
                            &train_set,
                        ))?;
                        let c = mean(rows.iter().map(|r| r.total_cost));
                        in_sample_forecast = Some(c);
                        c
                    }
                };
                let weights: Vec<usize> = train_set
                    .iter()
                    .map(|s| model.cluster_of(&s.features))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .fold(vec![0; model.k], |mut acc, c| {
                        acc[c] += 1;
                        acc
                    });
                // Cluster objectives are means over their members; recombine by size.
                let objective = model
                    .rules
                    .iter()
                    .zip(&weights)
                    .map(|(r, &w)| r.objective * w as f64)
                    .sum::<f64>()
                    / train_set.len() as f64;
                out.fits.push(FitSummary {
                    window,
                    method: label.clone(),
                    max_gap: model.rules.iter().map(|r| r.gap).fold(0.0, f64::max),
                    in_sample_objective: objective,
                    in_sample_forecast_cost: forecast_cost,
                    model: model.clone(),
                });
                (
                    evaluate_method(system, model_prescriber(&model), &test_set),
                    Some(model),
                )
            }
        };
        for (row, (&i, floor)) in rows.into_iter().zip(test.iter().zip(&floors)) {
            let row = row.map_err(|e| {
                Error::SolverFailure(format!("window {window}, sample {i}, {label}: {e}"))
            })?;
            let s = &samples[i];
            out.rows.push(ReportRow {
                window,
                method: label.clone(),
                sample: i,
                timestamp: s.timestamp.clone().unwrap_or_default(),
                forecast: s.forecast,
                load: s.load,
                cluster: model
                    .as_ref()
                    .map(|m| m.cluster_of(&s.features))
                    .transpose()?,
                prescription: row.prescription,
                forward_cost: row.forward_cost,
                balancing_cost: row.balancing_cost,
                total_cost: row.total_cost,
                floor: *floor,
                slack_active: row.slack_active,
            });
        }
    }
    Ok(out)
}

/// Places the forecast baseline first and drops repeated methods.
fn normalize_methods(methods: &[Method]) -> Vec<Method> {
    let mut out = vec![Method::Forecast];
    for m in methods {
        if !out.contains(m) {
            out.push(m.clone());
        }
    }
    out
}

fn assemble(
    protocol: Option<Protocol>,
    window_starts: Vec<usize>,
    labels: &[String],
    results: Vec<WindowResult>,
) -> Result<EvaluationReport> {
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    let mut timings = Vec::new();
    for r in results {
        rows.extend(r.rows);
        fits.extend(r.fits);
        timings.extend(r.timings);
    }
    let windows = window_starts.len();
    let mut summaries = Vec::with_capacity(labels.len());
    for label in labels {
        let mine: Vec<&ReportRow> = rows.iter().filter(|r| &r.method == label).collect();
        let window_means: Vec<f64> = (0..windows)
            .map(|w| mean(mine.iter().filter(|r| r.window == w).map(|r| r.total_cost)))
            .collect();
        summaries.push(MethodSummary {
            method: label.clone(),
            mean: mean(window_means.iter().copied()),
            window_means,
            pooled_mean: mean(mine.iter().map(|r| r.total_cost)),
            delta_percent: 0.0,
            pooled_delta_percent: 0.0,
            samples: mine.len(),
            slack_samples: mine.iter().filter(|r| r.slack_active).count(),
            floor_violations: mine
                .iter()
                .filter(|r| r.total_cost < r.floor - FLOOR_TOL * (1.0 + r.floor.abs()))
                .count(),
        });
    }
    let (base, pooled_base) = (summaries[0].mean, summaries[0].pooled_mean);
    for s in &mut summaries {
        s.delta_percent = delta_cost(base, s.mean)?;
        s.pooled_delta_percent = delta_cost(pooled_base, s.pooled_mean)?;
    }
    Ok(EvaluationReport {
        protocol,
        window_starts,
        methods: summaries,
        fits,
        rows,
        timings,
    })
}

/// Rolling-window benchmark over a time-ordered series. The forecast
/// baseline is always included and listed first.
pub fn rolling_evaluation(
    system: &PowerSystem,
    samples: &[Sample],
    protocol: &Protocol,
    methods: &[Method],
    config: &TrainConfig,
) -> Result<EvaluationReport> {
    validate_samples(samples, system.nodes().len())?;
    let starts = protocol.window_starts(samples.len())?;
    let methods = normalize_methods(methods);
    let jobs: Vec<(usize, usize)> = starts.iter().copied().enumerate().collect();
    let results = par_map(&jobs, |&(w, start)| {
        let (train, test) = protocol.split(start, w);
        run_window(system, samples, w, &train, &test, &methods, config)
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let labels: Vec<String> = methods.iter().map(Method::label).collect();
    assemble(Some(protocol.clone()), starts, &labels, results)
}

/// Forecast baseline, a fitted model and perfect information on one test set.
pub fn evaluate_model(
    system: &PowerSystem,
    test: &[Sample],
    model: &PrescriptionModel,
    label: &str,
    penalty: f64,
) -> Result<EvaluationReport> {
    validate_samples(test, system.nodes().len())?;
    let floors = par_map(test, |s| system_optimum(system, &s.nodal_loads, penalty));
    let floors = floors.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let runs: [(&str, Vec<Result<CostRow>>, bool); 3] = [
        (
            "F-SC",
            evaluate_method(system, forecast_prescriber(system), test),
            false,
        ),
        (
            label,
            evaluate_method(system, model_prescriber(model), test),
            true,
        ),
        (
            "PI",
            evaluate_method(system, perfect_prescriber(system), test),
            false,
        ),
    ];
    for (name, results, is_model) in runs {
        for (row, (s, floor)) in results.into_iter().zip(test.iter().zip(&floors)) {
            let row = row.map_err(|e| Error::SolverFailure(format!("{name}: {e}")))?;
            rows.push(ReportRow {
                window: 0,
                method: name.to_string(),
                sample: row.index,
                timestamp: s.timestamp.clone().unwrap_or_default(),
                forecast: s.forecast,
                load: s.load,
                cluster: if is_model {
                    Some(model.cluster_of(&s.features)?)
                } else {
                    None
                },
                prescription: row.prescription,
                forward_cost: row.forward_cost,
                balancing_cost: row.balancing_cost,
                total_cost: row.total_cost,
                floor: *floor,
                slack_active: row.slack_active,
            });
        }
    }
    let labels = ["F-SC".to_string(), label.to_string(), "PI".to_string()];
    let result = WindowResult {
        rows,
        fits: Vec::new(),
        timings: Vec::new(),
    };
    assemble(None, vec![0], &labels, vec![result])
}
