//! Command-line front end. Options come from flags, then from a flat JSON
//! `--config` file, then from the documented defaults.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::align::CostFunction;
use crate::data::{load_dataset, save_dataset, synth_dataset, truncate_prefix, ContinuousTrace, Schema, SynthSpec};
use crate::discover::{build_model_from_log, GoalModel};
use crate::error::{Error, Result};
use crate::eval::{cross_validate, Method, DEFAULT_OBS_LEVELS};
use crate::featsel::{FeatureSelection, Linkage};
use crate::pipeline::{train_selection, PipelineConfig};
use crate::quantize::{discretize, fit_codebook, Codebook, CodebookOptions, KMeansConfig};
use crate::recognize::{recognize, Artifacts, GoalPosterior, WeightParams};
use crate::tune::{grid_search, lhs_sample, tune_weights, LhsBounds, TuneResult};

pub const SELECTION_FILE: &str = "selection.json";
pub const CODEBOOK_FILE: &str = "codebook.json";

pub fn model_file(goal: &str) -> String {
    format!("model.{goal}.json")
}

#[derive(Debug, Parser)]
#[command(name = "goalrec", version, about = "Goal recognition from continuous traces via process mining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset as CSV.
    Synth(SynthArgs),
    /// Fit the feature selection and save selection.json.
    Features(StageArgs),
    /// Fit the codebook on the selected features and save codebook.json.
    Codebook(StageArgs),
    /// Build one model per goal and save model.<goal>.json files.
    Discover(DiscoverArgs),
    /// Score prefix traces against saved artifacts and print the posterior.
    Recognize(RecognizeArgs),
    /// Cross-validate PM and LDA; write report.json, summary.csv, instances.csv.
    Evaluate(EvaluateArgs),
    /// Grid search over (N_f, N_c) and/or Latin-hypercube weight search.
    Tune(TuneArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Flat JSON file whose keys mirror the flags in snake_case.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Random seed. Required by synth, codebook, evaluate and tune; elsewhere (default: 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset CSV with one row per sample.
    #[arg(long, value_name = "CSV")]
    dataset: Option<PathBuf>,
    /// Name of the trace identifier column (default: trace_id).
    #[arg(long)]
    trace_column: Option<String>,
    /// Name of the goal label column (default: goal).
    #[arg(long)]
    goal_column: Option<String>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Number of selected features N_f (default: 15).
    #[arg(long)]
    n_features: Option<usize>,
    /// Number of k-means clusters N_c, i.e. event symbols (default: 10).
    #[arg(long)]
    n_clusters: Option<usize>,
    /// Feature clustering linkage: single, complete or average (default: average).
    #[arg(long)]
    linkage: Option<Linkage>,
    /// Z-score features before k-means (default: true).
    #[arg(long)]
    normalize: Option<bool>,
    /// Arc frequency filter as a fraction of all arcs, in [0, 1) (default: 0).
    #[arg(long)]
    filter_threshold: Option<f64>,
    /// Weight offset phi (default: 1).
    #[arg(long)]
    phi: Option<f64>,
    /// Positional exponent delta, >= 0 (default: 1).
    #[arg(long)]
    delta: Option<f64>,
    /// Trailing log-move base lambda, >= 1 (default: 2).
    #[arg(long)]
    lambda: Option<f64>,
    /// Posterior sharpness beta in (0, 1] (default: 1).
    #[arg(long)]
    beta: Option<f64>,
    /// Probability tolerance for co-inferred goals (default: 1e-9).
    #[arg(long)]
    tie_epsilon: Option<f64>,
    /// Cost of a synchronous move (default: 0).
    #[arg(long)]
    cost_sync: Option<f64>,
    /// Cost of a move on the trace only (default: 1).
    #[arg(long)]
    cost_log: Option<f64>,
    /// Cost of a move on the model only (default: 0).
    #[arg(long)]
    cost_model: Option<f64>,
    /// k-means restarts (default: 10).
    #[arg(long)]
    kmeans_restarts: Option<usize>,
    /// k-means iteration cap per restart (default: 300).
    #[arg(long)]
    kmeans_max_iter: Option<usize>,
    /// Fixed LDA shrinkage in [0, 1] (default: smallest well-conditioned value).
    #[arg(long)]
    lda_shrinkage: Option<f64>,
    /// Rows at the end of each training trace used to fit LDA (default: 10).
    #[arg(long)]
    hold_rows: Option<usize>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Output CSV path.
    #[arg(long, value_name = "CSV")]
    out: Option<PathBuf>,
    /// Number of goals (default: 3).
    #[arg(long)]
    goals: Option<usize>,
    /// Traces per goal (default: 30).
    #[arg(long)]
    traces_per_goal: Option<usize>,
    /// Feature channels (default: 47).
    #[arg(long)]
    features: Option<usize>,
    /// Hidden regimes per goal (default: 4).
    #[arg(long)]
    regimes: Option<usize>,
    /// Gaussian noise standard deviation, in feature units (default: 0.5).
    #[arg(long)]
    noise: Option<f64>,
    /// Half-width of the range regime means are drawn from (default: 3).
    #[arg(long)]
    spread: Option<f64>,
}

#[derive(Debug, Args)]
struct StageArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Directory holding selection.json, codebook.json and model files.
    #[arg(long, value_name = "DIR")]
    artifacts_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiscoverArgs {
    #[command(flatten)]
    stage: StageArgs,
    /// Also write model.<goal>.dot Graphviz files.
    #[arg(long)]
    dot: bool,
}

#[derive(Debug, Args)]
struct RecognizeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Directory holding the trained artifacts.
    #[arg(long, value_name = "DIR")]
    artifacts_dir: Option<PathBuf>,
    /// CSV of observed rows; an optional trace id column groups them.
    #[arg(long, value_name = "CSV")]
    prefix: PathBuf,
    /// Name of the trace identifier column (default: trace_id).
    #[arg(long)]
    trace_column: Option<String>,
    /// Name of the goal label column, ignored if present (default: goal).
    #[arg(long)]
    goal_column: Option<String>,
    /// Keep only this leading fraction of every trace, in (0, 1] (default: 1).
    #[arg(long)]
    obs_level: Option<f64>,
    /// Write the posterior JSON here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Output directory for report.json, summary.csv and instances.csv.
    #[arg(long, value_name = "DIR")]
    report_dir: Option<PathBuf>,
    /// Observed fractions of each test trace (default: 0.1,0.3,0.5,0.7).
    #[arg(long, value_delimiter = ',')]
    obs_levels: Option<Vec<f64>>,
    /// Methods to evaluate: PM, LDA (default: PM,LDA).
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Subject label in the report (default: dataset file stem).
    #[arg(long)]
    subject: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum TuneMode {
    Grid,
    Weights,
    Both,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Output TuneResult JSON path.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Search stage(s) to run (default: both; weights use the best grid cell).
    #[arg(long, value_enum)]
    mode: Option<TuneMode>,
    /// N_f grid, e.g. "1-47" or "5,10,15" (default: --n-features).
    #[arg(long)]
    nf_values: Option<String>,
    /// N_c grid, e.g. "10-200:10" (default: --n-clusters).
    #[arg(long)]
    nc_values: Option<String>,
    /// Latin-hypercube candidates for the weight search (default: 100).
    #[arg(long)]
    samples: Option<usize>,
    /// Seed of the Latin-hypercube sample (default: --seed).
    #[arg(long)]
    sample_seed: Option<u64>,
    /// Observed fractions used for scoring (default: 0.1,0.3,0.5,0.7).
    #[arg(long, value_delimiter = ',')]
    obs_levels: Option<Vec<f64>>,
    /// JSON-lines file of finished configurations; reruns resume from it.
    #[arg(long, value_name = "FILE")]
    progress: Option<PathBuf>,
}

/// Keys accepted in a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    workers: Option<usize>,
    dataset: Option<PathBuf>,
    trace_column: Option<String>,
    goal_column: Option<String>,
    artifacts_dir: Option<PathBuf>,
    report_dir: Option<PathBuf>,
    out: Option<PathBuf>,
    n_features: Option<usize>,
    n_clusters: Option<usize>,
    linkage: Option<Linkage>,
    normalize: Option<bool>,
    filter_threshold: Option<f64>,
    phi: Option<f64>,
    delta: Option<f64>,
    lambda: Option<f64>,
    beta: Option<f64>,
    tie_epsilon: Option<f64>,
    cost_sync: Option<f64>,
    cost_log: Option<f64>,
    cost_model: Option<f64>,
    kmeans_restarts: Option<usize>,
    kmeans_max_iter: Option<usize>,
    lda_shrinkage: Option<f64>,
    hold_rows: Option<usize>,
    obs_levels: Option<Vec<f64>>,
    obs_level: Option<f64>,
    methods: Option<Vec<Method>>,
    subject: Option<String>,
    goals: Option<usize>,
    traces_per_goal: Option<usize>,
    features: Option<usize>,
    regimes: Option<usize>,
    noise: Option<f64>,
    spread: Option<f64>,
    mode: Option<TuneMode>,
    nf_values: Option<Vec<usize>>,
    nc_values: Option<Vec<usize>>,
    samples: Option<usize>,
    sample_seed: Option<u64>,
    progress: Option<PathBuf>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Validation(format!("config file {}: {e}", path.display())))
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| Error::Validation(format!("missing required option --{flag}")))
}

fn seed(common: &Common, file: &FileConfig) -> Result<u64> {
    required(common.seed.or(file.seed), "seed")
}

fn schema(trace: Option<String>, goal: Option<String>, file: &FileConfig) -> Schema {
    let defaults = Schema::default();
    Schema::new(
        trace.or_else(|| file.trace_column.clone()).unwrap_or(defaults.trace_column),
        goal.or_else(|| file.goal_column.clone()).unwrap_or(defaults.goal_column),
    )
}

fn load_data(data: &DataArgs, file: &FileConfig) -> Result<(crate::data::Dataset, PathBuf)> {
    let path = required(data.dataset.clone().or_else(|| file.dataset.clone()), "dataset")?;
    let schema = schema(data.trace_column.clone(), data.goal_column.clone(), file);
    Ok((load_dataset(&path, &schema)?, path))
}

fn pipeline_config(args: &PipelineArgs, file: &FileConfig, seed: u64) -> PipelineConfig {
    let d = PipelineConfig::default();
    let w = WeightParams::default();
    let c = CostFunction::default();
    let k = KMeansConfig::default();
    PipelineConfig {
        n_features: args.n_features.or(file.n_features).unwrap_or(d.n_features),
        n_clusters: args.n_clusters.or(file.n_clusters).unwrap_or(d.n_clusters),
        linkage: args.linkage.or(file.linkage).unwrap_or(d.linkage),
        normalize: args.normalize.or(file.normalize).unwrap_or(d.normalize),
        filter_threshold: args.filter_threshold.or(file.filter_threshold).unwrap_or(d.filter_threshold),
        weights: WeightParams {
            phi: args.phi.or(file.phi).unwrap_or(w.phi),
            delta: args.delta.or(file.delta).unwrap_or(w.delta),
            lambda: args.lambda.or(file.lambda).unwrap_or(w.lambda),
            beta: args.beta.or(file.beta).unwrap_or(w.beta),
            tie_epsilon: args.tie_epsilon.or(file.tie_epsilon).unwrap_or(w.tie_epsilon),
        },
        costs: CostFunction {
            sync: args.cost_sync.or(file.cost_sync).unwrap_or(c.sync),
            log: args.cost_log.or(file.cost_log).unwrap_or(c.log),
            model: args.cost_model.or(file.cost_model).unwrap_or(c.model),
        },
        seed,
        kmeans: KMeansConfig {
            restarts: args.kmeans_restarts.or(file.kmeans_restarts).unwrap_or(k.restarts),
            max_iter: args.kmeans_max_iter.or(file.kmeans_max_iter).unwrap_or(k.max_iter),
        },
        lda_shrinkage: args.lda_shrinkage.or(file.lda_shrinkage).or(d.lda_shrinkage),
        hold_rows: args.hold_rows.or(file.hold_rows).unwrap_or(d.hold_rows),
    }
}

fn artifacts_dir(flag: &Option<PathBuf>, file: &FileConfig) -> Result<PathBuf> {
    required(flag.clone().or_else(|| file.artifacts_dir.clone()), "artifacts-dir")
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

fn load_models(dir: &Path) -> Result<Vec<GoalModel>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("model.") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Validation(format!("no model.<goal>.json files in {}", dir.display())));
    }
    paths.iter().map(|p| read_json(p)).collect()
}

/// Parses "1-5,8,10-30:10" into a sorted, de-duplicated list.
pub fn parse_int_list(text: &str) -> Result<Vec<usize>> {
    let bad = |part: &str| Error::Validation(format!("invalid integer list item '{part}'"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (range, step) = match part.split_once(':') {
            Some((r, s)) => (r, s.parse::<usize>().map_err(|_| bad(part))?),
            None => (part, 1),
        };
        if step == 0 {
            return Err(bad(part));
        }
        match range.split_once('-') {
            Some((a, b)) => {
                let a: usize = a.trim().parse().map_err(|_| bad(part))?;
                let b: usize = b.trim().parse().map_err(|_| bad(part))?;
                if a > b {
                    return Err(bad(part));
                }
                out.extend((a..=b).step_by(step));
            }
            None => out.push(range.trim().parse().map_err(|_| bad(part))?),
        }
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err(Error::Validation("empty integer list".into()));
    }
    Ok(out)
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let file = load_file_config(args.common.config.as_deref())?;
    let d = SynthSpec::default();
    let spec = SynthSpec {
        goals: args.goals.or(file.goals).unwrap_or(d.goals),
        traces_per_goal: args.traces_per_goal.or(file.traces_per_goal).unwrap_or(d.traces_per_goal),
        features: args.features.or(file.features).unwrap_or(d.features),
        regimes: args.regimes.or(file.regimes).unwrap_or(d.regimes),
        noise: args.noise.or(file.noise).unwrap_or(d.noise),
        spread: args.spread.or(file.spread).unwrap_or(d.spread),
        seed: seed(&args.common, &file)?,
        ..d
    };
    let out = required(args.out.or(file.out), "out")?;
    save_dataset(&synth_dataset(&spec)?, &out)
}

fn cmd_features(args: StageArgs) -> Result<()> {
    let file = load_file_config(args.common.config.as_deref())?;
    let config = pipeline_config(&args.pipeline, &file, args.common.seed.or(file.seed).unwrap_or(0));
    let (dataset, _) = load_data(&args.data, &file)?;
    let dir = artifacts_dir(&args.artifacts_dir, &file)?;
    let selection = train_selection(&dataset, &config)?;
    write_json(&dir.join(SELECTION_FILE), &selection)
}

fn cmd_codebook(args: StageArgs) -> Result<()> {
    let file = load_file_config(args.common.config.as_deref())?;
    let config = pipeline_config(&args.pipeline, &file, seed(&args.common, &file)?);
    config.validate(usize::MAX)?;
    let (dataset, _) = load_data(&args.data, &file)?;
    let dir = artifacts_dir(&args.artifacts_dir, &file)?;
    let selection: FeatureSelection = read_json(&dir.join(SELECTION_FILE))?;
    if selection.feature_count() != dataset.feature_count() {
        return Err(Error::Validation(format!(
            "selection was fitted on {} features but the dataset has {}",
            selection.feature_count(),
            dataset.feature_count()
        )));
    }
    let codebook = fit_codebook(
        &dataset.all_rows(),
        &selection.selected,
        config.n_clusters,
        config.seed,
        CodebookOptions {
            normalize: config.normalize,
            kmeans: config.kmeans,
        },
    )?;
    write_json(&dir.join(CODEBOOK_FILE), &codebook)
}

fn cmd_discover(args: DiscoverArgs) -> Result<()> {
    let stage = args.stage;
    let file = load_file_config(stage.common.config.as_deref())?;
    let config = pipeline_config(&stage.pipeline, &file, stage.common.seed.or(file.seed).unwrap_or(0));
    let (dataset, _) = load_data(&stage.data, &file)?;
    let dir = artifacts_dir(&stage.artifacts_dir, &file)?;
    let selection: FeatureSelection = read_json(&dir.join(SELECTION_FILE))?;
    let codebook: Codebook = read_json(&dir.join(CODEBOOK_FILE))?;
    let logs = discretize(&dataset, &selection, &codebook)?;
    for log in &logs {
        let model = build_model_from_log(log, config.filter_threshold)?;
        write_json(&dir.join(model_file(&model.goal)), &model)?;
        if args.dot {
            let path = dir.join(format!("model.{}.dot", model.goal));
            fs::write(&path, model.to_dot()).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

/// Reads observed rows; columns other than the id and goal columns are
/// features, in file order.
fn read_prefixes(path: &Path, trace_column: &str, goal_column: &str) -> Result<Vec<ContinuousTrace>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Validation(format!("{}: {other:?}", path.display())),
    })?;
    let headers = reader.headers()?.clone();
    let id_col = headers.iter().position(|h| h == trace_column);
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| Some(i) != id_col && &headers[i] != goal_column)
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::Schema("prefix file has no feature columns".into()));
    }
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let id = id_col.map_or_else(|| "prefix".to_string(), |c| record[c].to_string());
        let row = feature_cols
            .iter()
            .map(|&c| {
                record[c]
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        row: r + 1,
                        column: headers[c].to_string(),
                        message: format!("'{}' is not a finite number", &record[c]),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        if !rows.contains_key(&id) {
            order.push(id.clone());
        }
        rows.entry(id).or_default().push(row);
    }
    if order.is_empty() {
        return Err(Error::Validation("prefix file has no rows".into()));
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let r = rows.remove(&id).unwrap_or_default();
            ContinuousTrace::new(id, "", r)
        })
        .collect())
}

fn cmd_recognize(args: RecognizeArgs) -> Result<()> {
    let file = load_file_config(args.common.config.as_deref())?;
    let config = pipeline_config(&args.pipeline, &file, args.common.seed.or(file.seed).unwrap_or(0));
    config.weights.validate()?;
    config.costs.validate()?;
    let dir = artifacts_dir(&args.artifacts_dir, &file)?;
    let artifacts = Artifacts {
        selection: read_json(&dir.join(SELECTION_FILE))?,
        codebook: read_json(&dir.join(CODEBOOK_FILE))?,
        models: load_models(&dir)?,
        costs: config.costs,
    };
    let schema = schema(args.trace_column, args.goal_column, &file);
    let level = args.obs_level.or(file.obs_level).unwrap_or(1.0);
    let traces = read_prefixes(&args.prefix, &schema.trace_column, &schema.goal_column)?;
    let mut out: BTreeMap<String, GoalPosterior> = BTreeMap::new();
    for trace in traces {
        let prefix = truncate_prefix(&trace, level)?;
        out.insert(trace.trace_id.clone(), recognize(&prefix, &artifacts, &config.weights)?);
    }
    match args.out.or(file.out) {
        Some(path) => write_json(&path, &out),
        None => {
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(())
        }
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let file = load_file_config(args.common.config.as_deref())?;
    let config = pipeline_config(&args.pipeline, &file, seed(&args.common, &file)?);
    let (dataset, path) = load_data(&args.data, &file)?;
    let report_dir = required(args.report_dir.or_else(|| file.report_dir.clone()), "report-dir")?;
    let levels = args
        .obs_levels
        .or_else(|| file.obs_levels.clone())
        .unwrap_or_else(|| DEFAULT_OBS_LEVELS.to_vec());
    let methods = args
        .methods
        .or_else(|| file.methods.clone())
        .unwrap_or_else(|| vec![Method::Pm, Method::Lda]);
    let subject = args.subject.or_else(|| file.subject.clone()).unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "subject".into())
    });
    let report = cross_validate(&dataset, &config, &methods, &levels, &subject)?;
    report.save(&report_dir)?;
    for w in &report.metadata.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

#[derive(Debug, serde::Serialize)]
struct TuneOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<TuneResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<TuneResult>,
}

fn cmd_tune(args: TuneArgs) -> Result<()> {
    let file = load_file_config(args.common.config.as_deref())?;
    let seed = seed(&args.common, &file)?;
    let mut config = pipeline_config(&args.pipeline, &file, seed);
    let (dataset, _) = load_data(&args.data, &file)?;
    let out = required(args.out.or_else(|| file.out.clone()), "out")?;
    let mode = args.mode.or(file.mode).unwrap_or(TuneMode::Both);
    let levels = args
        .obs_levels
        .or_else(|| file.obs_levels.clone())
        .unwrap_or_else(|| DEFAULT_OBS_LEVELS.to_vec());
    let progress = args.progress.or_else(|| file.progress.clone());
    let nf_values = match args.nf_values {
        Some(text) => parse_int_list(&text)?,
        None => file.nf_values.clone().unwrap_or_else(|| vec![config.n_features]),
    };
    let nc_values = match args.nc_values {
        Some(text) => parse_int_list(&text)?,
        None => file.nc_values.clone().unwrap_or_else(|| vec![config.n_clusters]),
    };

    let mut output = TuneOutput {
        grid: None,
        weights: None,
    };
    if matches!(mode, TuneMode::Grid | TuneMode::Both) {
        let result = grid_search(&dataset, &nf_values, &nc_values, &config, &levels, progress.as_deref())?;
        config.n_features = result.best_n_features;
        config.n_clusters = result.best_n_clusters;
        output.grid = Some(result);
    }
    if matches!(mode, TuneMode::Weights | TuneMode::Both) {
        let samples = args.samples.or(file.samples).unwrap_or(100);
        let sample_seed = args.sample_seed.or(file.sample_seed).unwrap_or(seed);
        let candidates = lhs_sample(&LhsBounds::default(), samples, sample_seed)?;
        output.weights = Some(tune_weights(
            &dataset,
            &config,
            &candidates,
            &levels,
            progress.as_deref(),
            Some(sample_seed),
        )?);
    }
    write_json(&out, &output)
}

fn workers_of(command: &Command) -> Result<Option<usize>> {
    let common = match command {
        Command::Synth(a) => &a.common,
        Command::Features(a) | Command::Codebook(a) => &a.common,
        Command::Discover(a) => &a.stage.common,
        Command::Recognize(a) => &a.common,
        Command::Evaluate(a) => &a.common,
        Command::Tune(a) => &a.common,
    };
    let file = load_file_config(common.config.as_deref())?;
    match common.workers.or(file.workers) {
        Some(0) => Err(Error::Validation("--workers must be at least 1".into())),
        other => Ok(other),
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(a),
        Command::Features(a) => cmd_features(a),
        Command::Codebook(a) => cmd_codebook(a),
        Command::Discover(a) => cmd_discover(a),
        Command::Recognize(a) => cmd_recognize(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Tune(a) => cmd_tune(a),
    }
}

fn execute(command: Command) -> Result<()> {
    match workers_of(&command)? {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Validation(format!("cannot start {n} workers: {e}")))?;
            pool.install(|| dispatch(command))
        }
        None => dispatch(command),
    }
}

/// Runs one command line and returns the process exit code: 0 on success,
/// 1 for usage or input errors, 2 for internal failures.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                1
            } else {
                2
            }
        }
    }
}
