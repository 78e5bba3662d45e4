//! The `presched` command line.
//!
//! Settings resolve in three layers: built-in defaults, then flags, then the
//! optional `--config` TOML file, whose values win.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::datagen::{
    european_dataset, european_fixture, sample_dataset, three_bus_fixture, EuropeanDataConfig,
    SyntheticConfig, ThreeBusVariant, THREE_BUS_LOAD_NODE,
};
use crate::error::{Error, Result};
use crate::evaluate::{evaluate_model, rolling_evaluation, Method, Protocol};
use crate::exec::init_threads;
use crate::ingest::{
    imputation_summary, interpolate_gaps, load_timeseries, to_samples, FeatureSpec,
};
use crate::model::PrescriptionModel;
use crate::sample::{read_samples, write_samples};
use crate::system::PowerSystem;
use crate::trainer::{train_partitioned_with, TrainConfig, TrainerKind};

/// Describes how `generate` should draw data for a fixture directory.
pub const FIXTURE_FILE: &str = "fixture.json";

#[derive(Parser, Debug)]
#[command(
    name = "presched",
    version,
    about = "Cost-aware net-demand prescriptions for two-stage scheduling"
)]
pub struct Cli {
    /// Worker threads (defaults to PRESCHED_THREADS, then all cores).
    #[arg(long, global = true, env = "PRESCHED_THREADS")]
    pub threads: Option<usize>,
    /// TOML file whose settings override the flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a bundled test system (and its data settings) to a directory.
    Fixture(FixtureArgs),
    /// Draw synthetic samples for a fixture directory.
    Generate(GenerateArgs),
    /// Turn per-node hourly series into a sample file.
    Ingest(IngestArgs),
    /// Fit a prescription model.
    Train(TrainArgs),
    /// Score a model against the forecast and perfect information.
    Evaluate(EvaluateArgs),
    /// Rolling-window benchmark of several methods.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct FixtureArgs {
    /// `three-bus` or `europe`.
    pub kind: String,
    /// Three-bus variant (base, cheap_up, free_down, congested, peak50, peak150, low_regime, high_regime).
    #[arg(long, default_value = "base")]
    pub variant: String,
    /// Seed of the European cost draw.
    #[arg(long, default_value_t = 0)]
    pub cost_seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Directory with one CSV per node.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub system: PathBuf,
    /// Append the hour of day as a feature.
    #[arg(long)]
    pub hour_of_day: bool,
    /// Append every node's forecast as a feature.
    #[arg(long)]
    pub nodal_forecasts: bool,
    #[arg(long, default_value_t = crate::ingest::DEFAULT_MAX_IMPUTED_FRACTION)]
    pub max_imputed: f64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct TrainerFlags {
    /// Number of clusters.
    #[arg(long)]
    pub k: Option<usize>,
    /// Percentage of each cluster kept as medoids.
    #[arg(long)]
    pub reduce: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub gap_tol: Option<f64>,
    /// Seconds per estimation problem.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Branch-and-bound node budget for the whole run, shared among clusters (0 = unlimited).
    #[arg(long)]
    pub node_limit: Option<usize>,
    /// Solve the estimation LP without merit-order constraints.
    #[arg(long)]
    pub relaxed: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub trainer: TrainerFlags,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Baseline for Δcost; only `forecast` is supported.
    #[arg(long, default_value = "forecast")]
    pub baseline: String,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated methods: fsc, pi, psc[:K[:r]], lsc[:K[:r]].
    #[arg(long, default_value = "fsc,psc,pi")]
    pub methods: String,
    #[arg(long)]
    pub windows: Option<usize>,
    #[arg(long)]
    pub window_length: Option<usize>,
    #[arg(long)]
    pub train_size: Option<usize>,
    #[arg(long)]
    pub test_size: Option<usize>,
    #[arg(long)]
    pub subsample_seed: Option<u64>,
    #[command(flatten)]
    pub trainer: TrainerFlags,
    #[arg(long)]
    pub report: PathBuf,
}

/// Contents of a `--config` file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub train: TrainSection,
    pub generate: GenerateSection,
    pub protocol: ProtocolSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub k: Option<usize>,
    pub reduce: Option<f64>,
    pub seed: Option<u64>,
    pub gap_tol: Option<f64>,
    pub time_limit: Option<f64>,
    pub node_limit: Option<usize>,
    pub penalty: Option<f64>,
    pub heuristic: Option<bool>,
    pub relaxed: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub n: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub windows: Option<usize>,
    pub window_length: Option<usize>,
    pub train_size: Option<usize>,
    pub test_size: Option<usize>,
    pub subsample_seed: Option<u64>,
    pub methods: Option<String>,
}

/// Data settings stored next to a fixture system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FixtureData {
    ThreeBus {
        variant: String,
        load_node: String,
        config: SyntheticConfig,
    },
    Europe {
        cost_seed: u64,
        config: EuropeanDataConfig,
    },
}

/// Fully resolved trainer settings.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainerSettings {
    pub k: usize,
    pub reduce: f64,
    pub relaxed: bool,
    pub config: TrainConfig,
}

impl TrainerSettings {
    fn resolve(flags: &TrainerFlags, file: &TrainSection) -> Result<TrainerSettings> {
        let mut config = TrainConfig::default();
        let mut s = TrainerSettings {
            k: 1,
            reduce: 100.0,
            relaxed: false,
            config: TrainConfig::default(),
        };
        // Flags over defaults.
        if let Some(v) = flags.k {
            s.k = v;
        }
        if let Some(v) = flags.reduce {
            s.reduce = v;
        }
        s.relaxed = flags.relaxed;
        if let Some(v) = flags.seed {
            config.seed = v;
        }
        if let Some(v) = flags.gap_tol {
            config.gap_tol = v;
        }
        if flags.time_limit.is_some() {
            config.time_limit = flags.time_limit;
        }
        if let Some(v) = flags.node_limit {
            config.node_limit = (v > 0).then_some(v);
        }
        // File over flags.
        s.k = file.k.unwrap_or(s.k);
        s.reduce = file.reduce.unwrap_or(s.reduce);
        s.relaxed = file.relaxed.unwrap_or(s.relaxed);
        config.seed = file.seed.unwrap_or(config.seed);
        config.gap_tol = file.gap_tol.unwrap_or(config.gap_tol);
        config.time_limit = file.time_limit.or(config.time_limit);
        if let Some(v) = file.node_limit {
            config.node_limit = (v > 0).then_some(v);
        }
        config.penalty = file.penalty.unwrap_or(config.penalty);
        config.heuristic = file.heuristic.unwrap_or(config.heuristic);
        config.validate()?;
        if s.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        s.config = config;
        Ok(s)
    }

    fn kind(&self) -> TrainerKind {
        if self.relaxed {
            TrainerKind::Relaxed
        } else {
            TrainerKind::Milp
        }
    }
}

/// Record written next to every output so the run can be repeated.
#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    settings: T,
}

fn write_manifest<T: Serialize>(path: &Path, command: &str, settings: T) -> Result<()> {
    let m = Manifest {
        tool: "presched",
        version: env!("CARGO_PKG_VERSION"),
        command,
        settings,
    };
    let text = serde_json::to_string_pretty(&m)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `out.csv` → `out.manifest.json`; directories get `manifest.json`.
fn manifest_path(output: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        return output.join("manifest.json");
    }
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into());
    output.with_file_name(format!("{stem}.manifest.json"))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        None => Ok(()),
    }
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn fixture(args: &FixtureArgs) -> Result<()> {
    let (system, data) = match args.kind.as_str() {
        "three-bus" => {
            let variant: ThreeBusVariant = args.variant.parse()?;
            let (system, config) = three_bus_fixture(variant);
            let data = FixtureData::ThreeBus {
                variant: variant.name().into(),
                load_node: THREE_BUS_LOAD_NODE.into(),
                config,
            };
            (system, data)
        }
        "europe" => {
            let data = FixtureData::Europe {
                cost_seed: args.cost_seed,
                config: EuropeanDataConfig::default(),
            };
            (european_fixture(args.cost_seed), data)
        }
        other => return Err(Error::UnknownVariant(other.to_string())),
    };
    system.write_csv(&args.output)?;
    let path = args.output.join(FIXTURE_FILE);
    fs::write(&path, serde_json::to_string_pretty(&data)? + "\n")
        .map_err(|e| Error::io(&path, e))?;
    write_manifest(&manifest_path(&args.output, true), "fixture", &data)
}

fn generate(args: &GenerateArgs, file: &GenerateSection) -> Result<()> {
    let system = PowerSystem::load_csv(&args.system)?;
    let path = args.system.join(FIXTURE_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut data: FixtureData = serde_json::from_str(&text)?;
    let n = file.n.or(args.n);
    let seed = file.seed.or(args.seed);
    let samples = match &mut data {
        FixtureData::ThreeBus {
            load_node, config, ..
        } => {
            config.n = n.unwrap_or(config.n);
            config.seed = seed.unwrap_or(config.seed);
            sample_dataset(&system, load_node, config)?
        }
        FixtureData::Europe { config, .. } => {
            config.n = n.unwrap_or(config.n);
            config.seed = seed.unwrap_or(config.seed);
            european_dataset(&system, config)?
        }
    };
    write_samples(&args.output, system.nodes(), &samples, &[])?;
    write_manifest(&manifest_path(&args.output, false), "generate", &data)
}

fn ingest(args: &IngestArgs) -> Result<()> {
    let system = PowerSystem::load_csv(&args.system)?;
    let raw = load_timeseries(&args.input)?;
    let mut repaired = std::collections::BTreeMap::new();
    for (node, s) in &raw {
        repaired.insert(node.clone(), interpolate_gaps(s)?);
    }
    let summary = imputation_summary(repaired.values(), args.max_imputed);
    log::info!("imputed {} of {} cells", summary.imputed, summary.cells);
    let spec = FeatureSpec {
        hour_of_day: args.hour_of_day,
        nodal_forecasts: args.nodal_forecasts,
    };
    let samples = to_samples(&repaired, system.nodes(), &spec)?;
    write_samples(
        &args.output,
        system.nodes(),
        &samples,
        &spec.names(system.nodes()),
    )?;
    #[derive(Serialize)]
    struct IngestRecord<'a> {
        features: &'a FeatureSpec,
        imputation: crate::ingest::ImputationSummary,
        samples: usize,
    }
    let record = IngestRecord {
        features: &spec,
        imputation: summary,
        samples: samples.len(),
    };
    write_manifest(&manifest_path(&args.output, false), "ingest", record)
}

fn train(args: &TrainArgs, file: &TrainSection) -> Result<()> {
    let settings = TrainerSettings::resolve(&args.trainer, file)?;
    let system = PowerSystem::load_csv(&args.system)?;
    let samples = read_samples(&args.data, system.nodes())?;
    let (model, stats) = train_partitioned_with(
        &system,
        &samples,
        settings.k,
        settings.reduce,
        &settings.config,
        settings.kind(),
    )?;
    for (c, rule) in model.rules.iter().enumerate() {
        log::info!(
            "cluster {c}: {} points, q = {:?}, {} (gap {:.2e}, {:.2}s)",
            stats.cluster_sizes[c],
            rule.q,
            rule.status,
            rule.gap,
            stats.cluster_seconds[c]
        );
    }
    ensure_parent(&args.output)?;
    model.save(&args.output)?;
    write_manifest(&manifest_path(&args.output, false), "train", &settings)
}

fn evaluate(args: &EvaluateArgs, file: &FileConfig) -> Result<()> {
    if args.baseline != "forecast" {
        return Err(Error::InvalidConfig(format!(
            "unsupported baseline `{}`",
            args.baseline
        )));
    }
    let system = PowerSystem::load_csv(&args.system)?;
    let samples = read_samples(&args.data, system.nodes())?;
    let model = PrescriptionModel::load(&args.model)?;
    let penalty = file.train.penalty.unwrap_or(crate::DEFAULT_SLACK_PENALTY);
    let label = if model.trainer == TrainerKind::Relaxed.name() {
        "L-SC"
    } else {
        "P-SC"
    };
    let report = evaluate_model(&system, &samples, &model, label, penalty)?;
    report.write(&args.report)?;
    print!("{}", report.table());
    write_manifest(
        &manifest_path(&args.report, true),
        "evaluate",
        ("forecast", penalty),
    )
}

fn report(args: &ReportArgs, file: &FileConfig) -> Result<()> {
    let settings = TrainerSettings::resolve(&args.trainer, &file.train)?;
    let p = &file.protocol;
    let mut protocol = Protocol::default();
    let pick =
        |file: Option<usize>, flag: Option<usize>, default: usize| file.or(flag).unwrap_or(default);
    protocol.windows = pick(p.windows, args.windows, protocol.windows);
    protocol.window_length = pick(p.window_length, args.window_length, protocol.window_length);
    protocol.train_size = pick(p.train_size, args.train_size, protocol.train_size);
    protocol.test_size = pick(p.test_size, args.test_size, protocol.test_size);
    protocol.subsample_seed = p
        .subsample_seed
        .or(args.subsample_seed)
        .unwrap_or(protocol.subsample_seed);
    let methods_text = p.methods.clone().unwrap_or_else(|| args.methods.clone());
    let methods = methods_text
        .split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(Method::parse)
        .collect::<Result<Vec<_>>>()?;

    let system = PowerSystem::load_csv(&args.system)?;
    let samples = read_samples(&args.data, system.nodes())?;
    let report = rolling_evaluation(&system, &samples, &protocol, &methods, &settings.config)?;
    report.write(&args.report)?;
    print!("{}", report.table());
    write_manifest(
        &manifest_path(&args.report, true),
        "report",
        (&protocol, &methods, &settings),
    )
}

fn execute(cli: &Cli) -> Result<()> {
    init_threads(cli.threads);
    let file = load_file_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Fixture(a) => fixture(a),
        Command::Generate(a) => generate(a, &file.generate),
        Command::Ingest(a) => ingest(a),
        Command::Train(a) => train(a, &file.train),
        Command::Evaluate(a) => evaluate(a, &file),
        Command::Report(a) => report(a, &file),
    }
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 2 for usage errors, 1 for any other failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_settings_override_flags() {
        let flags = TrainerFlags {
            k: Some(3),
            reduce: Some(50.0),
            seed: Some(7),
            gap_tol: None,
            time_limit: None,
            node_limit: Some(0),
            relaxed: false,
        };
        let s = TrainerSettings::resolve(&flags, &TrainSection::default()).unwrap();
        assert_eq!(
            (s.k, s.reduce, s.config.seed, s.config.node_limit),
            (3, 50.0, 7, None)
        );
        let file: FileConfig = toml::from_str("[train]\nk = 5\nnode_limit = 10\n").unwrap();
        let s = TrainerSettings::resolve(&flags, &file.train).unwrap();
        assert_eq!((s.k, s.reduce, s.config.node_limit), (5, 50.0, Some(10)));
        assert!(toml::from_str::<FileConfig>("[train]\nbogus = 1\n").is_err());
    }

    #[test]
    fn manifest_names() {
        assert_eq!(
            manifest_path(Path::new("out/model.json"), false),
            Path::new("out/model.manifest.json")
        );
        assert_eq!(
            manifest_path(Path::new("rep"), true),
            Path::new("rep/manifest.json")
        );
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["presched", "no-such-command"]), 2);
        assert_eq!(
            run([
                "presched",
                "train",
                "--system",
                "/nonexistent",
                "--data",
                "x.csv",
                "-o",
                "m.json"
            ]),
            1
        );
    }
}
