//! Dataset model, CSV ingestion, prefix truncation, fold splitting and a
//! seeded synthetic generator.
//!
//! Row order inside a trace is time order; no timestamp column is read.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds per row for the 10 Hz acquisition the pipeline was built around.
pub const DEFAULT_SAMPLE_PERIOD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousTrace {
    pub trace_id: String,
    pub goal: String,
    pub rows: Vec<Vec<f64>>,
    pub sample_period: f64,
}

impl ContinuousTrace {
    pub fn new(trace_id: impl Into<String>, goal: impl Into<String>, rows: Vec<Vec<f64>>) -> Self {
        Self {
            trace_id: trace_id.into(),
            goal: goal.into(),
            rows,
            sample_period: DEFAULT_SAMPLE_PERIOD,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn validate(&self, feature_count: usize) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Validation(format!(
                "trace '{}' has no rows",
                self.trace_id
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != feature_count {
                return Err(Error::Validation(format!(
                    "trace '{}' row {} has {} features, expected {}",
                    self.trace_id,
                    i,
                    row.len(),
                    feature_count
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "trace '{}' row {} feature {} is not finite",
                    self.trace_id, i, j
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    /// Goal labels in order of first appearance.
    pub goals: Vec<String>,
    pub traces: Vec<ContinuousTrace>,
}

impl Dataset {
    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    /// Checks every structural invariant; a dataset without traces is rejected.
    pub fn validate(&self) -> Result<()> {
        if self.feature_names.is_empty() {
            return Err(Error::Validation("dataset has no feature columns".into()));
        }
        if self.traces.is_empty() {
            return Err(Error::Validation("dataset has no traces".into()));
        }
        let mut seen = HashMap::new();
        for trace in &self.traces {
            if !self.goals.contains(&trace.goal) {
                return Err(Error::Validation(format!(
                    "trace '{}' has unknown goal '{}'",
                    trace.trace_id, trace.goal
                )));
            }
            if seen.insert(trace.trace_id.as_str(), ()).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate trace id '{}'",
                    trace.trace_id
                )));
            }
            trace.validate(self.feature_count())?;
        }
        Ok(())
    }

    /// Indices of the traces of `goal`, in dataset order.
    pub fn traces_of_goal(&self, goal: &str) -> Vec<usize> {
        self.traces
            .iter()
            .enumerate()
            .filter(|(_, t)| t.goal == goal)
            .map(|(i, _)| i)
            .collect()
    }

    /// New dataset holding the given traces; the goal list is kept whole so
    /// every fold shares the same candidate set.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            goals: self.goals.clone(),
            traces: indices.iter().map(|&i| self.traces[i].clone()).collect(),
        }
    }

    /// Every row of every trace, pooled in dataset order.
    pub fn all_rows(&self) -> Vec<&[f64]> {
        self.traces
            .iter()
            .flat_map(|t| t.rows.iter().map(Vec::as_slice))
            .collect()
    }
}

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub trace_column: String,
    pub goal_column: String,
    /// `None` takes every other column, in header order.
    pub feature_columns: Option<Vec<String>>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            trace_column: "trace_id".into(),
            goal_column: "goal".into(),
            feature_columns: None,
        }
    }
}

impl Schema {
    pub fn new(trace_column: impl Into<String>, goal_column: impl Into<String>) -> Self {
        Self {
            trace_column: trace_column.into(),
            goal_column: goal_column.into(),
            feature_columns: None,
        }
    }

    pub fn with_features<I, S>(mut self, columns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.feature_columns = Some(columns.into_iter().map(Into::into).collect());
        self
    }
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, schema)
}

/// Parses a dataset from CSV. Rows sharing a trace id are grouped in file
/// order, whether or not they are contiguous.
pub fn read_dataset<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
    };
    let trace_col = find(&schema.trace_column)?;
    let goal_col = find(&schema.goal_column)?;
    let feature_cols: Vec<usize> = match &schema.feature_columns {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|&i| i != trace_col && i != goal_col)
            .collect(),
    };
    if feature_cols.is_empty() {
        return Err(Error::Schema("no feature columns".into()));
    }
    let feature_names: Vec<String> = feature_cols
        .iter()
        .map(|&i| headers[i].to_string())
        .collect();

    let mut goals: Vec<String> = Vec::new();
    let mut traces: Vec<ContinuousTrace> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();

    for (row_idx, record) in csv.records().enumerate() {
        let record = record?;
        let row_no = row_idx + 1;
        let trace_id = record.get(trace_col).unwrap_or_default().to_string();
        let goal = record.get(goal_col).unwrap_or_default().to_string();
        if trace_id.is_empty() {
            return Err(Error::Parse {
                row: row_no,
                column: schema.trace_column.clone(),
                message: "empty trace id".into(),
            });
        }
        let mut values = Vec::with_capacity(feature_cols.len());
        for (&col, name) in feature_cols.iter().zip(&feature_names) {
            let cell = record.get(col).unwrap_or_default();
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                row: row_no,
                column: name.clone(),
                message: format!("'{cell}' is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row: row_no,
                    column: name.clone(),
                    message: format!("'{cell}' is not finite"),
                });
            }
            values.push(value);
        }
        let slot = match by_id.get(&trace_id) {
            Some(&slot) => {
                if traces[slot].goal != goal {
                    return Err(Error::Parse {
                        row: row_no,
                        column: schema.goal_column.clone(),
                        message: format!(
                            "trace '{trace_id}' changes goal from '{}' to '{goal}'",
                            traces[slot].goal
                        ),
                    });
                }
                slot
            }
            None => {
                if !goals.contains(&goal) {
                    goals.push(goal.clone());
                }
                traces.push(ContinuousTrace::new(trace_id.clone(), goal, Vec::new()));
                by_id.insert(trace_id, traces.len() - 1);
                traces.len() - 1
            }
        };
        traces[slot].rows.push(values);
    }

    Ok(Dataset {
        feature_names,
        goals,
        traces,
    })
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(dataset, file)
}

/// Writes the dataset with `trace_id`, `goal`, then the feature columns.
/// Floats use the shortest representation that parses back to the same bits.
pub fn write_dataset<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["trace_id".to_string(), "goal".to_string()];
    header.extend(dataset.feature_names.iter().cloned());
    csv.write_record(&header)?;
    for trace in &dataset.traces {
        for row in &trace.rows {
            let mut record = Vec::with_capacity(row.len() + 2);
            record.push(trace.trace_id.clone());
            record.push(trace.goal.clone());
            record.extend(row.iter().map(|v| format!("{v:?}")));
            csv.write_record(&record)?;
        }
    }
    csv.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Number of rows kept for an observation fraction: `ceil(fraction * len)`,
/// at least one.
pub fn prefix_len(len: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Domain(format!(
            "observation fraction {fraction} outside (0, 1]"
        )));
    }
    // 0.3 * 10 evaluates to 3.0000000000000004; absorb that before the ceiling.
    let raw = fraction * len as f64;
    let kept = (raw - 1e-9 * raw.max(1.0)).ceil() as usize;
    Ok(kept.clamp(1, len.max(1)))
}

pub fn truncate_prefix(trace: &ContinuousTrace, fraction: f64) -> Result<ContinuousTrace> {
    let keep = prefix_len(trace.rows.len(), fraction)?;
    Ok(ContinuousTrace {
        trace_id: trace.trace_id.clone(),
        goal: trace.goal.clone(),
        rows: trace.rows[..keep.min(trace.rows.len())].to_vec(),
        sample_period: trace.sample_period,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    /// Trace indices, one per goal, in goal order.
    pub test: Vec<usize>,
    pub train: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
    pub warnings: Vec<String>,
}

/// Leave-one-trace-per-goal-out folds: fold `i` tests the `i`-th trace of
/// every goal and trains on the rest.
pub fn split_folds(dataset: &Dataset) -> Result<FoldPlan> {
    if dataset.goals.is_empty() {
        return Err(Error::Validation("dataset has no goals".into()));
    }
    let per_goal: Vec<Vec<usize>> = dataset
        .goals
        .iter()
        .map(|g| dataset.traces_of_goal(g))
        .collect();
    let count = per_goal[0].len();
    if per_goal.iter().any(|idx| idx.len() != count) {
        let listing: Vec<String> = dataset
            .goals
            .iter()
            .zip(&per_goal)
            .map(|(g, idx)| format!("{g}={}", idx.len()))
            .collect();
        return Err(Error::Validation(format!(
            "goals have unequal trace counts: {}",
            listing.join(", ")
        )));
    }
    if count == 0 {
        return Err(Error::Validation("goals have no traces".into()));
    }

    let mut warnings = Vec::new();
    let folds: Vec<Fold> = (0..count)
        .map(|i| {
            let test: Vec<usize> = per_goal.iter().map(|idx| idx[i]).collect();
            let train: Vec<usize> = (0..dataset.traces.len())
                .filter(|t| !test.contains(t))
                .collect();
            Fold { test, train }
        })
        .collect();
    if folds.iter().any(|f| f.train.is_empty()) {
        warnings.push("fold with empty training set".to_string());
    }
    Ok(FoldPlan { folds, warnings })
}

/// Parameters of the synthetic regime-switching generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub goals: usize,
    pub traces_per_goal: usize,
    pub features: usize,
    /// Hidden regimes visited in order by every trace of a goal.
    pub regimes: usize,
    /// Standard deviation of the Gaussian noise added to regime means.
    pub noise: f64,
    pub seed: u64,
    /// Regime means are drawn uniformly from `[-spread, spread]`.
    pub spread: f64,
    pub min_rows_per_regime: usize,
    pub max_rows_per_regime: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            goals: 3,
            traces_per_goal: 30,
            features: 47,
            regimes: 4,
            noise: 0.5,
            seed: 0,
            spread: 3.0,
            min_rows_per_regime: 4,
            max_rows_per_regime: 8,
        }
    }
}

pub fn synth_dataset(spec: &SynthSpec) -> Result<Dataset> {
    if spec.goals == 0 || spec.traces_per_goal == 0 || spec.features == 0 || spec.regimes == 0 {
        return Err(Error::Domain(
            "goals, traces, features and regimes must all be at least 1".into(),
        ));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::Domain(format!("noise {} must be >= 0", spec.noise)));
    }
    if !(spec.spread >= 0.0 && spec.spread.is_finite()) {
        return Err(Error::Domain(format!("spread {} must be >= 0", spec.spread)));
    }
    if spec.min_rows_per_regime == 0 || spec.min_rows_per_regime > spec.max_rows_per_regime {
        return Err(Error::Domain("rows per regime range is empty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let goals: Vec<String> = (1..=spec.goals).map(|g| format!("G{g}")).collect();
    let regime_means: Vec<Vec<Vec<f64>>> = (0..spec.goals)
        .map(|_| {
            (0..spec.regimes)
                .map(|_| {
                    (0..spec.features)
                        .map(|_| rng.random_range(-1.0..=1.0) * spec.spread)
                        .collect()
                })
                .collect()
        })
        .collect();
    let noise = if spec.noise > 0.0 {
        Some(Normal::new(0.0, spec.noise).map_err(|e| Error::Domain(e.to_string()))?)
    } else {
        None
    };

    let mut traces = Vec::with_capacity(spec.goals * spec.traces_per_goal);
    for (g, goal) in goals.iter().enumerate() {
        for t in 0..spec.traces_per_goal {
            let mut rows = Vec::new();
            for mean in &regime_means[g] {
                let n = rng.random_range(spec.min_rows_per_regime..=spec.max_rows_per_regime);
                for _ in 0..n {
                    let row = mean
                        .iter()
                        .map(|&m| match &noise {
                            Some(dist) => m + dist.sample(&mut rng),
                            None => m,
                        })
                        .collect();
                    rows.push(row);
                }
            }
            traces.push(ContinuousTrace::new(format!("{goal}-{:02}", t + 1), goal.clone(), rows));
        }
    }

    Ok(Dataset {
        feature_names: (1..=spec.features).map(|f| format!("f{f}")).collect(),
        goals,
        traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(len: usize) -> ContinuousTrace {
        ContinuousTrace::new("t", "G", (0..len).map(|i| vec![i as f64]).collect())
    }

    #[test]
    fn prefix_ceiling_rule() {
        assert_eq!(truncate_prefix(&trace(10), 0.3).unwrap().len(), 3);
        assert_eq!(truncate_prefix(&trace(7), 0.1).unwrap().len(), 1);
        assert_eq!(truncate_prefix(&trace(9), 0.5).unwrap().len(), 5);
        assert_eq!(truncate_prefix(&trace(10), 0.7).unwrap().len(), 7);
        let full = trace(13);
        assert_eq!(truncate_prefix(&full, 1.0).unwrap(), full);
    }

    #[test]
    fn prefix_rejects_out_of_range() {
        assert!(matches!(truncate_prefix(&trace(5), 0.0), Err(Error::Domain(_))));
        assert!(matches!(truncate_prefix(&trace(5), 1.01), Err(Error::Domain(_))));
        assert!(matches!(truncate_prefix(&trace(5), f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn parses_table_row() {
        let csv = "Trace,Goal,f1,f2\n1,T1,5.19727337,7.02395793\n";
        let ds = read_dataset(csv.as_bytes(), &Schema::new("Trace", "Goal")).unwrap();
        assert_eq!(ds.traces[0].trace_id, "1");
        assert_eq!(ds.traces[0].rows[0][0], 5.19727337);
        assert_eq!(ds.traces[0].rows[0][1], 7.02395793);
    }

    #[test]
    fn header_only_is_empty_and_invalid() {
        let ds = read_dataset("trace_id,goal,a\n".as_bytes(), &Schema::default()).unwrap();
        assert!(ds.traces.is_empty());
        assert!(matches!(ds.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn interleaved_ids_are_grouped() {
        let csv = "trace_id,goal,x\nA,G1,1\nB,G2,10\nA,G1,2\nB,G2,20\n";
        let ds = read_dataset(csv.as_bytes(), &Schema::default()).unwrap();
        assert_eq!(ds.traces.len(), 2);
        assert_eq!(ds.traces[0].rows, vec![vec![1.0], vec![2.0]]);
        assert_eq!(ds.traces[1].rows, vec![vec![10.0], vec![20.0]]);
        assert_eq!(ds.goals, vec!["G1", "G2"]);
    }

    #[test]
    fn schema_and_parse_errors() {
        let err = read_dataset("id,goal,x\n1,G,1\n".as_bytes(), &Schema::default()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        let err = read_dataset(
            "trace_id,goal,x\n1,G,1\n1,G,abc\n".as_bytes(),
            &Schema::default(),
        )
        .unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "x");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = read_dataset(
            "trace_id,goal,x\n1,G,1\n".as_bytes(),
            &Schema::default().with_features(["y"]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn folds_for_two_by_two() {
        let spec = SynthSpec {
            goals: 2,
            traces_per_goal: 2,
            features: 1,
            regimes: 1,
            ..SynthSpec::default()
        };
        let ds = synth_dataset(&spec).unwrap();
        let plan = split_folds(&ds).unwrap();
        assert_eq!(plan.folds.len(), 2);
        assert_eq!(plan.folds[0].test, vec![0, 2]);
        assert_eq!(plan.folds[1].test, vec![1, 3]);
        assert_eq!(plan.folds[0].train, vec![1, 3]);
        let mut all: Vec<usize> = plan.folds.iter().flat_map(|f| f.test.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert!(plan.warnings.is_empty());
    }

    #[test]
    fn single_trace_fold_warns() {
        let ds = Dataset {
            feature_names: vec!["x".into()],
            goals: vec!["G".into()],
            traces: vec![trace(3)],
        };
        let plan = split_folds(&ds).unwrap();
        assert_eq!(plan.folds.len(), 1);
        assert!(plan.folds[0].train.is_empty());
        assert_eq!(plan.warnings.len(), 1);
    }

    #[test]
    fn unequal_goal_counts_rejected() {
        let mut ds = synth_dataset(&SynthSpec {
            goals: 2,
            traces_per_goal: 2,
            features: 1,
            regimes: 1,
            ..SynthSpec::default()
        })
        .unwrap();
        ds.traces.pop();
        let err = split_folds(&ds).unwrap_err();
        assert!(err.to_string().contains("G1=2"));
    }

    #[test]
    fn zero_noise_single_regime_is_constant() {
        let ds = synth_dataset(&SynthSpec {
            goals: 2,
            traces_per_goal: 3,
            features: 4,
            regimes: 1,
            noise: 0.0,
            ..SynthSpec::default()
        })
        .unwrap();
        for goal in &ds.goals {
            let idx = ds.traces_of_goal(goal);
            let first = ds.traces[idx[0]].rows[0].clone();
            for &i in &idx {
                assert!(ds.traces[i].rows.iter().all(|r| *r == first));
            }
        }
    }

    #[test]
    fn synth_is_deterministic() {
        let spec = SynthSpec {
            seed: 17,
            ..SynthSpec::default()
        };
        let a = synth_dataset(&spec).unwrap();
        let b = synth_dataset(&spec).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_eq!(a.traces.len(), 90);
        assert_eq!(a.feature_count(), 47);
    }
}
