//! Cross-validated evaluation of the process-mining recognizer and the LDA
//! baseline, with per-instance records and aggregate reports.

pub mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::CostFunction;
use crate::data::{split_folds, truncate_prefix, Dataset, Fold};
use crate::error::{Error, Result};
use crate::featsel::Linkage;
use crate::lda::lda_recognize;
use crate::pipeline::{train_lda, train_recognizer, train_selection, PipelineConfig};
use crate::quantize::discretize_trace;
use crate::recognize::{align_all, posterior_from_alignments, GoalAlignment, WeightParams};

pub use stats::{mean_ci, sidak_alpha, welch_t_test};

pub const DEFAULT_OBS_LEVELS: [f64; 4] = [0.1, 0.3, 0.5, 0.7];
pub const CI_LEVEL: f64 = 0.95;
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "PM")]
    Pm,
    #[serde(rename = "LDA")]
    Lda,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pm => "PM",
            Method::Lda => "LDA",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pm" => Ok(Method::Pm),
            "lda" => Ok(Method::Lda),
            other => Err(Error::Validation(format!("unknown method '{other}' (expected PM or LDA)"))),
        }
    }
}

/// Precision and recall of one inferred goal set.
pub fn instance_metrics<S: AsRef<str>>(inferred: &[S], true_goal: &str) -> Result<(f64, f64)> {
    if inferred.is_empty() {
        return Err(Error::Validation("inferred goal set is empty".into()));
    }
    let distinct: BTreeSet<&str> = inferred.iter().map(AsRef::as_ref).collect();
    if distinct.contains(true_goal) {
        Ok((1.0 / distinct.len() as f64, 1.0))
    } else {
        Ok((0.0, 0.0))
    }
}

/// Highest inferred probability minus the true goal's; `None` when the true
/// goal was inferred.
pub fn probability_gap<S: AsRef<str>>(
    posterior: &BTreeMap<String, f64>,
    inferred: &[S],
    true_goal: &str,
) -> Option<f64> {
    if inferred.iter().any(|g| g.as_ref() == true_goal) {
        return None;
    }
    let top = inferred
        .iter()
        .filter_map(|g| posterior.get(g.as_ref()))
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let truth = posterior.get(true_goal).copied().unwrap_or(0.0);
    Some(if top.is_finite() { top - truth } else { 0.0 })
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub subject: String,
    pub method: Method,
    pub fold: usize,
    pub trace_id: String,
    pub obs_level: f64,
    pub true_goal: String,
    pub inferred: Vec<String>,
    pub posterior: BTreeMap<String, f64>,
    pub precision: f64,
    pub recall: f64,
    pub probability_gap: Option<f64>,
}

impl InstanceResult {
    #[allow(clippy::too_many_arguments)]
    fn new(
        subject: &str,
        method: Method,
        fold: usize,
        trace_id: &str,
        obs_level: f64,
        true_goal: &str,
        inferred: Vec<String>,
        posterior: BTreeMap<String, f64>,
    ) -> Result<Self> {
        let (precision, recall) = instance_metrics(&inferred, true_goal)?;
        let probability_gap = probability_gap(&posterior, &inferred, true_goal);
        Ok(Self {
            subject: subject.to_string(),
            method,
            fold,
            trace_id: trace_id.to_string(),
            obs_level,
            true_goal: true_goal.to_string(),
            inferred,
            posterior,
            precision,
            recall,
            probability_gap,
        })
    }
}

/// Alignments of one test prefix against every goal model of its fold,
/// kept so that weight parameters can be re-scored without retraining.
#[derive(Debug, Clone, PartialEq)]
pub struct PmCase {
    pub fold: usize,
    pub trace_id: String,
    pub true_goal: String,
    pub obs_level: f64,
    pub alignments: Vec<GoalAlignment>,
}

impl PmCase {
    pub fn score(&self, subject: &str, params: &WeightParams) -> Result<InstanceResult> {
        let posterior = posterior_from_alignments(&self.alignments, params).map_err(|e| self.wrap(e))?;
        InstanceResult::new(
            subject,
            Method::Pm,
            self.fold,
            &self.trace_id,
            self.obs_level,
            &self.true_goal,
            posterior.inferred,
            posterior.probabilities,
        )
        .map_err(|e| self.wrap(e))
    }

    fn wrap(&self, e: Error) -> Error {
        Error::Instance {
            fold: self.fold,
            trace_id: self.trace_id.clone(),
            source: Box::new(e),
        }
    }
}

pub fn validate_obs_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Validation("at least one observation level required".into()));
    }
    for &l in levels {
        if !(l > 0.0 && l <= 1.0) {
            return Err(Error::Domain(format!("observation level {l} outside (0, 1]")));
        }
    }
    let mut sorted = levels.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Validation("duplicate observation levels".into()));
    }
    Ok(())
}

fn sorted_levels(levels: &[f64]) -> Vec<f64> {
    let mut sorted = levels.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
}

struct FoldOutput {
    pm: Vec<PmCase>,
    lda: Vec<InstanceResult>,
}

fn run_fold(
    dataset: &Dataset,
    index: usize,
    fold: &Fold,
    config: &PipelineConfig,
    methods: &BTreeSet<Method>,
    levels: &[f64],
    subject: &str,
) -> Result<FoldOutput> {
    let fold_error = |e: Error| Error::Fold {
        fold: index,
        source: Box::new(e),
    };
    let train = dataset.subset(&fold.train);
    let selection = train_selection(&train, config).map_err(fold_error)?;
    let lda = if methods.contains(&Method::Lda) {
        Some(train_lda(&train, &selection, config).map_err(fold_error)?)
    } else {
        None
    };
    let artifacts = if methods.contains(&Method::Pm) {
        Some(train_recognizer(&train, selection.clone(), config).map_err(fold_error)?)
    } else {
        None
    };

    let mut output = FoldOutput {
        pm: Vec::new(),
        lda: Vec::new(),
    };
    for &t in &fold.test {
        let trace = &dataset.traces[t];
        let wrap = |e: Error| Error::Instance {
            fold: index,
            trace_id: trace.trace_id.clone(),
            source: Box::new(e),
        };
        for &level in levels {
            let prefix = truncate_prefix(trace, level).map_err(wrap)?;
            if let Some(artifacts) = &artifacts {
                let events = discretize_trace(&prefix, &artifacts.codebook).map_err(wrap)?;
                let alignments = align_all(&events.events, &artifacts.models, &artifacts.costs).map_err(wrap)?;
                output.pm.push(PmCase {
                    fold: index,
                    trace_id: trace.trace_id.clone(),
                    true_goal: trace.goal.clone(),
                    obs_level: level,
                    alignments,
                });
            }
            if let Some(model) = &lda {
                let (label, posterior) = lda_recognize(&prefix, model, &selection).map_err(wrap)?;
                output.lda.push(
                    InstanceResult::new(
                        subject,
                        Method::Lda,
                        index,
                        &trace.trace_id,
                        level,
                        &trace.goal,
                        vec![label],
                        posterior,
                    )
                    .map_err(wrap)?,
                );
            }
        }
    }
    Ok(output)
}

fn run_folds(
    dataset: &Dataset,
    config: &PipelineConfig,
    methods: &BTreeSet<Method>,
    levels: &[f64],
    subject: &str,
) -> Result<(Vec<FoldOutput>, Vec<String>)> {
    dataset.validate()?;
    config.validate(dataset.feature_count())?;
    validate_obs_levels(levels)?;
    if methods.is_empty() {
        return Err(Error::Validation("at least one method required".into()));
    }
    let plan = split_folds(dataset)?;
    let outputs = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| run_fold(dataset, i, fold, config, methods, levels, subject))
        .collect::<Result<Vec<_>>>()?;
    Ok((outputs, plan.warnings))
}

/// Trains the recognizer on every fold and aligns every test prefix, without
/// scoring. Cases are ordered by fold, test trace and observation level.
pub fn pm_cases(dataset: &Dataset, config: &PipelineConfig, obs_levels: &[f64]) -> Result<Vec<PmCase>> {
    let methods = BTreeSet::from([Method::Pm]);
    let levels = sorted_levels(obs_levels);
    let (outputs, _) = run_folds(dataset, config, &methods, &levels, "")?;
    Ok(outputs.into_iter().flat_map(|o| o.pm).collect())
}

pub fn score_pm_cases(cases: &[PmCase], subject: &str, params: &WeightParams) -> Result<Vec<InstanceResult>> {
    params.validate()?;
    cases.par_iter().map(|c| c.score(subject, params)).collect()
}

/// Mean-precision/mean-recall F1 over a set of instances.
pub fn aggregate_f1(instances: &[InstanceResult]) -> f64 {
    if instances.is_empty() {
        return 0.0;
    }
    let n = instances.len() as f64;
    let p = instances.iter().map(|r| r.precision).sum::<f64>() / n;
    let r = instances.iter().map(|r| r.recall).sum::<f64>() / n;
    f1(p, r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub precision: f64,
    pub precision_ci: f64,
    pub recall: f64,
    pub recall_ci: f64,
    pub f1: f64,
    /// Mean probability gap over wrong instances.
    pub mean_probability_gap: Option<f64>,
    pub wrong: usize,
}

impl Summary {
    pub fn of(instances: &[&InstanceResult]) -> Result<Self> {
        let p: Vec<f64> = instances.iter().map(|r| r.precision).collect();
        let r: Vec<f64> = instances.iter().map(|r| r.recall).collect();
        let (precision, precision_ci) = mean_ci(&p, CI_LEVEL)?;
        let (recall, recall_ci) = mean_ci(&r, CI_LEVEL)?;
        let gaps: Vec<f64> = instances.iter().filter_map(|r| r.probability_gap).collect();
        Ok(Self {
            n: instances.len(),
            precision,
            precision_ci,
            recall,
            recall_ci,
            f1: f1(precision, recall),
            mean_probability_gap: (!gaps.is_empty()).then(|| stats::mean(&gaps)),
            wrong: gaps.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub obs_level: f64,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: String,
    pub method_a: Method,
    pub method_b: Method,
    pub mean_a: f64,
    pub mean_b: f64,
    pub p_value: Option<f64>,
    pub corrected_alpha: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub subject: String,
    pub seed: u64,
    pub n_features: usize,
    pub n_clusters: usize,
    pub linkage: Linkage,
    pub normalize: bool,
    pub filter_threshold: f64,
    pub weights: WeightParams,
    pub costs: CostFunction,
    pub obs_levels: Vec<f64>,
    pub methods: Vec<Method>,
    pub folds: usize,
    pub ci_level: f64,
    pub ci_method: String,
    pub t_test_samples: String,
    pub alpha: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: ReportMetadata,
    /// subject -> method -> per-level rows, sorted by level.
    pub results: BTreeMap<String, BTreeMap<Method, Vec<LevelSummary>>>,
    /// Per method, over every instance of every level.
    pub overall: BTreeMap<Method, Summary>,
    pub comparisons: Vec<Comparison>,
    pub instances: Vec<InstanceResult>,
}

/// Leave-one-trace-per-goal-out evaluation of `methods` at each observation
/// level. Every fold fits selection, codebook, models and LDA on its own
/// training traces only.
pub fn cross_validate(
    dataset: &Dataset,
    config: &PipelineConfig,
    methods: &[Method],
    obs_levels: &[f64],
    subject: &str,
) -> Result<EvalReport> {
    let method_set: BTreeSet<Method> = methods.iter().copied().collect();
    let levels = sorted_levels(obs_levels);
    let (outputs, warnings) = run_folds(dataset, config, &method_set, &levels, subject)?;
    let folds = outputs.len();
    let mut instances = Vec::new();
    if method_set.contains(&Method::Pm) {
        let cases: Vec<PmCase> = outputs.iter().flat_map(|o| o.pm.iter().cloned()).collect();
        instances.extend(score_pm_cases(&cases, subject, &config.weights)?);
    }
    for o in outputs {
        instances.extend(o.lda);
    }
    let metadata = ReportMetadata {
        subject: subject.to_string(),
        seed: config.seed,
        n_features: config.n_features,
        n_clusters: config.n_clusters,
        linkage: config.linkage,
        normalize: config.normalize,
        filter_threshold: config.filter_threshold,
        weights: config.weights,
        costs: config.costs,
        obs_levels: levels,
        methods: method_set.iter().copied().collect(),
        folds,
        ci_level: CI_LEVEL,
        ci_method: "normal approximation".into(),
        t_test_samples: "per-instance precision and recall, pooled over observation levels".into(),
        alpha: SIGNIFICANCE,
        warnings,
    };
    build_report(metadata, instances)
}

/// Aggregates per-instance records into a report. Everything except the
/// metadata is recomputable from `instances` alone.
pub fn build_report(metadata: ReportMetadata, instances: Vec<InstanceResult>) -> Result<EvalReport> {
    let mut groups: BTreeMap<(String, Method), Vec<&InstanceResult>> = BTreeMap::new();
    for r in &instances {
        groups.entry((r.subject.clone(), r.method)).or_default().push(r);
    }
    let mut results: BTreeMap<String, BTreeMap<Method, Vec<LevelSummary>>> = BTreeMap::new();
    for ((subject, method), rows) in &groups {
        let mut by_level: Vec<f64> = rows.iter().map(|r| r.obs_level).collect();
        by_level.sort_by(f64::total_cmp);
        by_level.dedup();
        let summaries = by_level
            .into_iter()
            .map(|level| {
                let at: Vec<&InstanceResult> = rows.iter().copied().filter(|r| r.obs_level == level).collect();
                Ok(LevelSummary {
                    obs_level: level,
                    summary: Summary::of(&at)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        results.entry(subject.clone()).or_default().insert(*method, summaries);
    }

    let mut per_method: BTreeMap<Method, Vec<&InstanceResult>> = BTreeMap::new();
    for r in &instances {
        per_method.entry(r.method).or_default().push(r);
    }
    let overall = per_method
        .iter()
        .map(|(m, rows)| Ok((*m, Summary::of(rows)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;

    let comparisons = compare_methods(&per_method, metadata.alpha)?;
    Ok(EvalReport {
        metadata,
        results,
        overall,
        comparisons,
        instances,
    })
}

/// Welch tests of PM against every other method, on precision and on recall,
/// with a Šidák-corrected threshold over all comparisons made.
fn compare_methods(per_method: &BTreeMap<Method, Vec<&InstanceResult>>, alpha: f64) -> Result<Vec<Comparison>> {
    let Some(pm) = per_method.get(&Method::Pm) else {
        return Ok(Vec::new());
    };
    let others: Vec<(&Method, &Vec<&InstanceResult>)> =
        per_method.iter().filter(|(m, _)| **m != Method::Pm).collect();
    if others.is_empty() {
        return Ok(Vec::new());
    }
    let corrected = sidak_alpha(alpha, 2 * others.len())?;
    let mut out = Vec::new();
    for (method, rows) in others {
        for metric in ["precision", "recall"] {
            let pick = |rs: &[&InstanceResult]| -> Vec<f64> {
                rs.iter()
                    .map(|r| if metric == "precision" { r.precision } else { r.recall })
                    .collect()
            };
            let a = pick(pm);
            let b = pick(rows);
            let p_value = if a.len() >= 2 && b.len() >= 2 {
                Some(welch_t_test(&a, &b)?)
            } else {
                None
            };
            out.push(Comparison {
                metric: metric.to_string(),
                method_a: Method::Pm,
                method_b: *method,
                mean_a: stats::mean(&a),
                mean_b: stats::mean(&b),
                p_value,
                corrected_alpha: corrected,
                significant: p_value.is_some_and(|p| p < corrected),
            });
        }
    }
    Ok(out)
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// One row per subject, method and level, then one `all` row per method.
    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "subject",
            "method",
            "obs_level",
            "features",
            "clusters",
            "n",
            "precision",
            "precision_ci",
            "recall",
            "recall_ci",
            "f1",
            "mean_probability_gap",
            "formatted_p",
            "formatted_r",
        ])?;
        let features = self.metadata.n_features.to_string();
        let clusters = self.metadata.n_clusters.to_string();
        let mut row = |subject: &str, method: Method, level: String, s: &Summary| -> Result<()> {
            w.write_record([
                subject.to_string(),
                method.to_string(),
                level,
                features.clone(),
                clusters.clone(),
                s.n.to_string(),
                format!("{:.6}", s.precision),
                format!("{:.6}", s.precision_ci),
                format!("{:.6}", s.recall),
                format!("{:.6}", s.recall_ci),
                format!("{:.6}", s.f1),
                s.mean_probability_gap.map(|g| format!("{g:.6}")).unwrap_or_default(),
                format!("{:.3}±{:.3}", s.precision, s.precision_ci),
                format!("{:.3}±{:.3}", s.recall, s.recall_ci),
            ])?;
            Ok(())
        };
        for (subject, methods) in &self.results {
            for (method, levels) in methods {
                for l in levels {
                    row(subject, *method, l.obs_level.to_string(), &l.summary)?;
                }
            }
        }
        for (method, s) in &self.overall {
            row("all", *method, "all".to_string(), s)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn write_instances_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "subject",
            "method",
            "fold",
            "trace_id",
            "obs_level",
            "true_goal",
            "inferred",
            "precision",
            "recall",
            "probability_gap",
            "posterior",
        ])?;
        for r in &self.instances {
            let posterior: Vec<String> = r.posterior.iter().map(|(g, p)| format!("{g}={p:?}")).collect();
            w.write_record([
                r.subject.clone(),
                r.method.to_string(),
                r.fold.to_string(),
                r.trace_id.clone(),
                r.obs_level.to_string(),
                r.true_goal.clone(),
                r.inferred.join(";"),
                format!("{:?}", r.precision),
                format!("{:?}", r.recall),
                r.probability_gap.map(|g| format!("{g:?}")).unwrap_or_default(),
                posterior.join(";"),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Writes `report.json`, `summary.csv` and `instances.csv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json_path = dir.join("report.json");
        std::fs::write(&json_path, self.to_json()?).map_err(|e| Error::io(&json_path, e))?;
        let mut summary = Vec::new();
        self.write_summary_csv(&mut summary)?;
        let summary_path = dir.join("summary.csv");
        std::fs::write(&summary_path, summary).map_err(|e| Error::io(&summary_path, e))?;
        let mut per_instance = Vec::new();
        self.write_instances_csv(&mut per_instance)?;
        let instances_path = dir.join("instances.csv");
        std::fs::write(&instances_path, per_instance).map_err(|e| Error::io(&instances_path, e))?;
        Ok(())
    }
}
