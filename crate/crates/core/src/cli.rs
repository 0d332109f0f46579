//! Command-line front end: `simulate`, `audit`, `train`, `coverage`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid flags or input schema,
//! 3 hacking flags raised under `--strict`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::audit::{self, AuditConfig, AuditError, CorrectionScope, Manifest};
use crate::data::{self, AttributeSelection, CsvSchema, DataError, Dataset, SyntheticConfig};
use crate::metrics::{MetricId, DEFAULT_NEIGHBORS};
use crate::model::{self, LogisticModel, ModelError, TrainConfig};
use crate::report::{self, AuditReport, RenderError};
use crate::stats::{self, BootstrapConfig, CoverageConfig, StatsError, DEFAULT_BOOTSTRAP_REPLICATES};

#[derive(Debug, Parser)]
#[command(name = "fairaudit", version, about = "Fairness audits with corrected confidence intervals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic data, audit it, and write report + plots.
    Simulate(SimulateArgs),
    /// Audit a CSV file of labels, predictions and binary attributes.
    Audit(AuditArgs),
    /// Train a logistic-regression model on a CSV file.
    Train(TrainArgs),
    /// Monte Carlo coverage of the Wald interval.
    Coverage(CoverageArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Markdown,
    Both,
}

#[derive(Debug, Args, Serialize)]
pub struct SharedArgs {
    /// Seed for every random stream of the run.
    #[arg(long, env = "FAIRAUDIT_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Nominal significance level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Both)]
    pub format: OutputFormat,
    /// Family for the headline corrected table.
    #[arg(long, value_enum, default_value_t = CorrectionScope::Combined)]
    pub correction_scope: CorrectionScope,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalysisArgs {
    /// Comma-separated metric ids, or `all`.
    #[arg(long, default_value = "all")]
    pub metrics: String,
    /// Neighbour count for consistency.
    #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
    pub neighbors: usize,
    /// Bootstrap replicates for theil and consistency.
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_REPLICATES)]
    pub bootstrap_replicates: usize,
    /// Flag significant effects smaller than this (proportion scale).
    #[arg(long)]
    pub effect_threshold: Option<f64>,
    /// Count theil and consistency in the inter-metric Bonferroni family.
    #[arg(long)]
    pub individual_in_family: bool,
    /// Maximum number of per-attribute forest plots to write.
    #[arg(long, default_value_t = 25)]
    pub max_forest_plots: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 100)]
    pub participants: usize,
    #[arg(long, default_value_t = 1000)]
    pub attributes: usize,
    /// Accuracy of both groups.
    #[arg(long, default_value_t = 0.75)]
    pub accuracy: f64,
    /// Accuracy of group 0 of the first attribute (overrides --accuracy).
    #[arg(long)]
    pub accuracy0: Option<f64>,
    /// Accuracy of group 1 of the first attribute (overrides --accuracy).
    #[arg(long)]
    pub accuracy1: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub base_rate: f64,
    #[arg(long, default_value_t = 0.5)]
    pub attribute_probability: f64,
    /// Omit the Gaussian feature (consistency becomes not estimable).
    #[arg(long)]
    pub no_feature: bool,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[command(flatten)]
    pub shared: SharedArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct AuditArgs {
    /// Input CSV with a header row
    #[arg(long)]
    pub csv: PathBuf,
    /// Column holding the 0/1 ground truth
    #[arg(long, default_value = data::TRUTH_COLUMN)]
    pub truth_column: String,
    /// Column holding the 0/1 model prediction
    #[arg(long, default_value = data::PREDICTION_COLUMN)]
    pub prediction_column: String,
    /// Comma-separated attribute columns, or `auto` for every remaining binary column.
    #[arg(long, default_value = "auto")]
    pub attributes: String,
    /// Comma-separated feature columns.
    #[arg(long, default_value = "")]
    pub features: String,
    /// Pre-registration manifest (JSON).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Model JSON used to produce predictions instead of the prediction column.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Exit with status 3 when any hacking flag fires.
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[command(flatten)]
    pub shared: SharedArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Input CSV with a header row
    #[arg(long)]
    pub csv: PathBuf,
    /// Column holding the 0/1 ground truth
    #[arg(long, default_value = data::TRUTH_COLUMN)]
    pub truth_column: String,
    /// Comma-separated feature columns, or `auto` for every column except
    /// the label and prediction columns.
    #[arg(long, default_value = "auto")]
    pub features: String,
    /// Training fraction.
    #[arg(long, default_value_t = 0.9)]
    pub split: f64,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    #[command(flatten)]
    pub shared: SharedArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CoverageArgs {
    #[arg(long)]
    pub p1: f64,
    #[arg(long)]
    pub p2: f64,
    /// Size of both groups.
    #[arg(long, default_value_t = 50)]
    pub n: u64,
    #[arg(long)]
    pub n1: Option<u64>,
    #[arg(long)]
    pub n2: Option<u64>,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[command(flatten)]
    pub shared: SharedArgs,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Data(DataError),
    #[error(transparent)]
    Audit(AuditError),
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Data(DataError::Io(_)) => 1,
            CliError::Audit(AuditError::Io(_)) => 1,
            CliError::Model(ModelError::Io(_)) => 1,
            _ => 2,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e)
    }
}

impl From<AuditError> for CliError {
    fn from(e: AuditError) -> Self {
        CliError::Audit(e)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Data(d) => CliError::Data(d),
            other => CliError::Model(other),
        }
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::Io(io) => CliError::Io(io),
            RenderError::Empty => CliError::Usage("nothing to plot".into()),
        }
    }
}

/// Parses arguments and runs the subcommand; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<i32, CliError> {
    match command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Train(a) => cmd_train(a),
        Command::Coverage(a) => cmd_coverage(a),
    }
}

fn parse_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_metrics(s: &str) -> Result<Vec<MetricId>, CliError> {
    if s.trim() == "all" {
        return Ok(MetricId::ALL.to_vec());
    }
    let metrics: Vec<MetricId> = parse_list(s)
        .iter()
        .map(|m| m.parse().map_err(|e: crate::metrics::MetricError| CliError::Usage(e.to_string())))
        .collect::<Result<_, _>>()?;
    if metrics.is_empty() {
        return Err(CliError::Usage("no metrics given".into()));
    }
    Ok(metrics)
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--alpha {alpha} outside (0, 1)")))
    }
}

/// Flattens the parsed flags into the string map stored in report metadata.
fn invocation<T: Serialize>(command: &str, args: &T) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    map.insert("command".to_string(), command.to_string());
    fn walk(key: &str, v: &serde_json::Value, map: &mut BTreeMap<String, String>) {
        let s = match v {
            // flattened groups (`analysis`, `shared`)
            serde_json::Value::Object(o) => {
                for (k, v) in o {
                    walk(k, v, map);
                }
                return;
            }
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Null => "none".to_string(),
            other => other.to_string(),
        };
        map.insert(key.to_string(), s);
    }
    if let Ok(serde_json::Value::Object(o)) = serde_json::to_value(args) {
        for (k, v) in &o {
            walk(k, v, &mut map);
        }
    }
    map
}

fn audit_config(
    attributes: Vec<String>,
    analysis: &AnalysisArgs,
    shared: &SharedArgs,
) -> Result<AuditConfig, CliError> {
    check_alpha(shared.alpha)?;
    let mut cfg = AuditConfig::new(attributes, parse_metrics(&analysis.metrics)?);
    cfg.alpha = shared.alpha;
    cfg.scope = shared.correction_scope;
    cfg.effect_size_threshold = analysis.effect_threshold;
    cfg.individual_in_family = analysis.individual_in_family;
    cfg.bootstrap = BootstrapConfig {
        replicates: analysis.bootstrap_replicates,
        // distinct from the data-generation stream
        seed: shared.seed.wrapping_add(1),
        neighbors: analysis.neighbors,
    };
    Ok(cfg)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes the report files and plots into `out`.
fn write_outputs(
    report: &AuditReport,
    out: &Path,
    format: OutputFormat,
    max_forest_plots: usize,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    if matches!(format, OutputFormat::Json | OutputFormat::Both) {
        std::fs::write(out.join("report.json"), report::to_json(report))?;
    }
    if matches!(format, OutputFormat::Markdown | OutputFormat::Both) {
        std::fs::write(out.join("report.md"), report::to_markdown(report))?;
    }
    for intra in &report.intra {
        let values: Vec<f64> = intra.rows.iter().filter_map(|r| r.estimate.point).collect();
        if values.is_empty() {
            continue;
        }
        report::emit_histogram_svg(
            &values,
            &intra.reference_markers,
            &format!("{} difference over {} attributes", intra.metric, intra.tested),
            out.join(format!("histogram_{}.svg", intra.metric)),
        )?;
    }
    for inter in report.inter.iter().take(max_forest_plots) {
        report::emit_forest_svg(
            &report::forest_rows(inter),
            &format!(
                "{}: metrics with α = {}/{} intervals",
                inter.attribute, inter.alpha, inter.family_size
            ),
            out.join(format!("forest_{}.svg", sanitize(&inter.attribute))),
        )?;
    }
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<i32, CliError> {
    let config = SyntheticConfig {
        n_participants: args.participants,
        n_attributes: args.attributes,
        base_rate: args.base_rate,
        accuracy_group0: args.accuracy0.unwrap_or(args.accuracy),
        accuracy_group1: args.accuracy1.unwrap_or(args.accuracy),
        attribute_probability: args.attribute_probability,
        gaussian_feature: !args.no_feature,
        seed: args.shared.seed,
    };
    let dataset = data::generate_synthetic(&config)?;
    let cfg = audit_config(dataset.attribute_names().to_vec(), &args.analysis, &args.shared)?;
    let mut report = audit::full_audit(&dataset, &cfg, None)?;
    report.metadata.invocation = Some(invocation("simulate", args));
    write_outputs(&report, &args.shared.out, args.shared.format, args.analysis.max_forest_plots)?;
    println!(
        "{} records, {} attributes: {} flags; report in {}",
        dataset.len(),
        dataset.attribute_names().len(),
        report.flags.len(),
        args.shared.out.display()
    );
    Ok(0)
}

pub fn cmd_audit(args: &AuditArgs) -> Result<i32, CliError> {
    let features = parse_list(&args.features);
    let schema = CsvSchema {
        truth_column: args.truth_column.clone(),
        prediction_column: if args.model.is_some() {
            None
        } else {
            Some(args.prediction_column.clone())
        },
        attributes: if args.attributes.trim() == "auto" {
            AttributeSelection::Auto
        } else {
            AttributeSelection::Named(parse_list(&args.attributes))
        },
        features,
        ignored_columns: vec![args.prediction_column.clone()],
    };
    let mut dataset: Dataset = data::load_csv(&args.csv, &schema)?;
    if let Some(path) = &args.model {
        let m = LogisticModel::load(path)?;
        dataset = model::predict(&m, &dataset)?;
    }
    if dataset.attribute_names().is_empty() {
        return Err(CliError::Usage("no binary attribute columns to audit".into()));
    }
    let manifest = args.manifest.as_ref().map(Manifest::load).transpose()?;
    let cfg = audit_config(dataset.attribute_names().to_vec(), &args.analysis, &args.shared)?;
    let mut report = audit::full_audit(&dataset, &cfg, manifest.as_ref())?;
    report.metadata.invocation = Some(invocation("audit", args));
    write_outputs(&report, &args.shared.out, args.shared.format, args.analysis.max_forest_plots)?;
    println!(
        "{} records, {} attributes: {} flags; report in {}",
        dataset.len(),
        dataset.attribute_names().len(),
        report.flags.len(),
        args.shared.out.display()
    );
    Ok(if args.strict && !report.flags.is_empty() { 3 } else { 0 })
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    train_records: usize,
    test_records: usize,
    train_accuracy: f64,
    test_accuracy: f64,
    features: Vec<String>,
    config: TrainConfig,
    split: f64,
}

pub fn cmd_train(args: &TrainArgs) -> Result<i32, CliError> {
    let features = if args.features.trim() == "auto" {
        data::csv_headers(&args.csv)?
            .into_iter()
            .filter(|h| h != &args.truth_column && h != data::PREDICTION_COLUMN)
            .collect()
    } else {
        parse_list(&args.features)
    };
    let schema = CsvSchema {
        truth_column: args.truth_column.clone(),
        prediction_column: None,
        attributes: AttributeSelection::Named(Vec::new()),
        features: features.clone(),
        ignored_columns: Vec::new(),
    };
    let dataset = data::load_csv(&args.csv, &schema)?;
    let (train, test) = data::split(&dataset, args.split, args.shared.seed)?;
    let config = TrainConfig {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        l2: args.l2,
        seed: args.shared.seed,
    };
    let m = model::train(&train, &config)?;
    let train_accuracy = model::accuracy(&model::predict(&m, &train)?);
    let test_accuracy = model::accuracy(&model::predict(&m, &test)?);
    std::fs::create_dir_all(&args.shared.out)?;
    m.save(args.shared.out.join("model.json"))?;
    let summary = TrainSummary {
        train_records: train.len(),
        test_records: test.len(),
        train_accuracy,
        test_accuracy,
        features,
        config,
        split: args.split,
    };
    let mut s = serde_json::to_string_pretty(&summary).expect("summary serializes");
    s.push('\n');
    std::fs::write(args.shared.out.join("train.json"), s)?;
    println!(
        "test accuracy: {test_accuracy:.4} ({} test records, {} train records)",
        test.len(),
        train.len()
    );
    Ok(0)
}

pub fn cmd_coverage(args: &CoverageArgs) -> Result<i32, CliError> {
    check_alpha(args.shared.alpha)?;
    let result = stats::coverage_simulation(&CoverageConfig {
        p1: args.p1,
        p2: args.p2,
        n1: args.n1.unwrap_or(args.n),
        n2: args.n2.unwrap_or(args.n),
        alpha: args.shared.alpha,
        trials: args.trials,
        seed: args.shared.seed,
    })?;
    println!("{}", serde_json::to_string_pretty(&result).expect("result serializes"));
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_lists() {
        assert_eq!(parse_metrics("all").unwrap().len(), 11);
        assert_eq!(
            parse_metrics("error_rate, equal_opportunity").unwrap(),
            vec![MetricId::ErrorRate, MetricId::EqualOpportunity]
        );
        assert!(matches!(parse_metrics("error_rate,ratio"), Err(CliError::Usage(_))));
        assert!(parse_metrics("").is_err());
    }

    #[test]
    fn coverage_trials_floor_is_usage_error() {
        let code = run(["fairaudit", "coverage", "--p1", "0.5", "--p2", "0.5", "--trials", "10"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn invocation_is_flat() {
        let cli = Cli::try_parse_from(["fairaudit", "simulate", "--attributes", "3", "--seed", "9"]).unwrap();
        let Command::Simulate(args) = &cli.command else { unreachable!() };
        let map = invocation("simulate", args);
        assert_eq!(map["command"], "simulate");
        assert_eq!(map["attributes"], "3");
        assert_eq!(map["seed"], "9");
        assert_eq!(map["accuracy0"], "none");
        assert!(!map.contains_key("out"));
    }
}
