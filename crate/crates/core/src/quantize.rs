//! Event discretization: z-score the selected features, fit a seeded k-means
//! codebook, and map each row to the index of its nearest centroid.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ContinuousTrace, Dataset};
use crate::error::{Error, Result};
use crate::featsel::FeatureSelection;

/// Discrete event symbol; the index of a codebook centroid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Event(pub u32);

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl std::str::FromStr for Event {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s.strip_prefix('e').unwrap_or(s);
        digits
            .parse()
            .map(Event)
            .map_err(|_| Error::Validation(format!("'{s}' is not an event symbol")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTrace {
    pub trace_id: String,
    pub goal: String,
    pub events: Vec<Event>,
}

/// All event traces of one goal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLog {
    pub goal: String,
    pub traces: Vec<EventTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub n_clusters: usize,
    pub selected: Vec<usize>,
    pub normalized: bool,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub centroids: Vec<Vec<f64>>,
    pub seed: u64,
    /// Within-cluster sum of squares of the training rows.
    pub wcss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub wcss: f64,
    /// WCSS after every assignment step of the winning restart.
    pub history: Vec<f64>,
    pub restart: usize,
}

/// Per-feature mean and population standard deviation over the selected
/// columns; a zero variance yields a standard deviation of 1.
pub fn fit_normalizer<R: AsRef<[f64]>>(rows: &[R], selected: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("normalizer needs at least one row".into()));
    }
    let n = rows.len() as f64;
    let mut means = Vec::with_capacity(selected.len());
    let mut stds = Vec::with_capacity(selected.len());
    for &f in selected {
        let mean = rows.iter().map(|r| r.as_ref()[f]).sum::<f64>() / n;
        let var = rows
            .iter()
            .map(|r| {
                let d = r.as_ref()[f] - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        means.push(mean);
        stds.push(if var > 0.0 { var.sqrt() } else { 1.0 });
    }
    Ok((means, stds))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties to the lowest index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn distinct_count(points: &[Vec<f64>]) -> usize {
    points
        .iter()
        .map(|p| p.iter().map(|v| (v + 0.0).to_bits()).collect::<Vec<u64>>())
        .collect::<HashSet<_>>()
        .len()
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // Rounding can leave the target past the last cumulative sum.
            chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("positive mass"))
        } else {
            break;
        };
        let c = points[pick].clone();
        for (slot, p) in d2.iter_mut().zip(points) {
            *slot = slot.min(squared_distance(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> KMeansFit {
    let k = centroids.len();
    let dim = points[0].len();
    let mut history = Vec::new();
    let mut previous: Option<Vec<usize>> = None;
    for _ in 0..max_iter.max(1) {
        let (assign, wcss): (Vec<usize>, f64) = {
            let pairs: Vec<(usize, f64)> = points.iter().map(|p| nearest(p, &centroids)).collect();
            let wcss = pairs.iter().map(|(_, d)| d).sum();
            (pairs.into_iter().map(|(i, _)| i).collect(), wcss)
        };
        history.push(wcss);
        if previous.as_ref() == Some(&assign) {
            break;
        }
        let mut assignments = assign;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        // Empty clusters take the point farthest from its own centroid.
        while let Some(empty) = counts.iter().position(|&c| c == 0) {
            let farthest = points
                .iter()
                .enumerate()
                .filter(|(i, _)| counts[assignments[*i]] > 1)
                .map(|(i, p)| (i, squared_distance(p, &centroids[assignments[i]])))
                .fold(None::<(usize, f64)>, |best, cur| match best {
                    Some(b) if b.1 >= cur.1 => Some(b),
                    _ => Some(cur),
                });
            let Some((i, _)) = farthest else { break };
            counts[assignments[i]] -= 1;
            assignments[i] = empty;
            counts[empty] = 1;
            centroids[empty] = points[i].clone();
        }
        previous = Some(assignments);
    }
    let (assignments, wcss) = {
        let pairs: Vec<(usize, f64)> = points.iter().map(|p| nearest(p, &centroids)).collect();
        let wcss = pairs.iter().map(|(_, d)| d).sum();
        (pairs.into_iter().map(|(i, _)| i).collect::<Vec<_>>(), wcss)
    };
    KMeansFit {
        centroids,
        assignments,
        wcss,
        history,
        restart: 0,
    }
}

/// Seeded k-means++ / Lloyd with restarts. The winner is the lowest
/// `(wcss, restart index)`, so the outcome does not depend on scheduling.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, config: KMeansConfig) -> Result<KMeansFit> {
    if k == 0 {
        return Err(Error::Domain("cluster count must be at least 1".into()));
    }
    if points.is_empty() {
        return Err(Error::InsufficientData("k-means needs at least one point".into()));
    }
    let distinct = distinct_count(points);
    if k > distinct {
        return Err(Error::Infeasible(format!(
            "{k} clusters requested but only {distinct} distinct points"
        )));
    }
    let restarts = config.restarts.max(1);
    let fits: Vec<KMeansFit> = (0..restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(restart as u64);
            let init = plus_plus_init(points, k, &mut rng);
            let mut fit = lloyd(points, init, config.max_iter);
            fit.restart = restart;
            fit
        })
        .collect();
    let best = fits
        .into_iter()
        .reduce(|best, cur| if cur.wcss < best.wcss { cur } else { best })
        .expect("at least one restart");
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodebookOptions {
    pub normalize: bool,
    pub kmeans: KMeansConfig,
}

impl Default for CodebookOptions {
    fn default() -> Self {
        Self {
            normalize: true,
            kmeans: KMeansConfig::default(),
        }
    }
}

pub fn fit_codebook<R: AsRef<[f64]>>(
    rows: &[R],
    selected: &[usize],
    n_clusters: usize,
    seed: u64,
    options: CodebookOptions,
) -> Result<Codebook> {
    if selected.is_empty() {
        return Err(Error::Validation("codebook needs at least one selected feature".into()));
    }
    let (means, stds) = if options.normalize {
        fit_normalizer(rows, selected)?
    } else {
        (vec![0.0; selected.len()], vec![1.0; selected.len()])
    };
    let points: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| normalize_row(r.as_ref(), selected, &means, &stds))
        .collect();
    let fit = kmeans(&points, n_clusters, seed, options.kmeans)?;
    Ok(Codebook {
        n_clusters,
        selected: selected.to_vec(),
        normalized: options.normalize,
        means,
        stds,
        centroids: fit.centroids,
        seed,
        wcss: fit.wcss,
    })
}

fn normalize_row(row: &[f64], selected: &[usize], means: &[f64], stds: &[f64]) -> Vec<f64> {
    selected
        .iter()
        .zip(means.iter().zip(stds))
        .map(|(&f, (m, s))| (row[f] - m) / s)
        .collect()
}

impl Codebook {
    pub fn normalize(&self, row: &[f64]) -> Vec<f64> {
        normalize_row(row, &self.selected, &self.means, &self.stds)
    }
}

/// Maps a full-width feature row to its event symbol.
pub fn assign_event(row: &[f64], codebook: &Codebook) -> Result<Event> {
    for &f in &codebook.selected {
        match row.get(f) {
            None => {
                return Err(Error::Validation(format!(
                    "row has {} features, codebook reads feature {f}",
                    row.len()
                )))
            }
            Some(v) if !v.is_finite() => {
                return Err(Error::Validation(format!("feature {f} is not finite")))
            }
            Some(_) => {}
        }
    }
    let point = codebook.normalize(row);
    Ok(Event(nearest(&point, &codebook.centroids).0 as u32))
}

pub fn discretize_trace(trace: &ContinuousTrace, codebook: &Codebook) -> Result<EventTrace> {
    let events = trace
        .rows
        .iter()
        .map(|r| assign_event(r, codebook))
        .collect::<Result<Vec<_>>>()?;
    Ok(EventTrace {
        trace_id: trace.trace_id.clone(),
        goal: trace.goal.clone(),
        events,
    })
}

/// One event log per goal (in dataset goal order), traces in dataset order.
pub fn discretize(
    dataset: &Dataset,
    selection: &FeatureSelection,
    codebook: &Codebook,
) -> Result<Vec<EventLog>> {
    if selection.selected != codebook.selected {
        return Err(Error::Validation(
            "codebook was fitted on a different feature selection".into(),
        ));
    }
    let mut logs: Vec<EventLog> = dataset
        .goals
        .iter()
        .map(|g| EventLog {
            goal: g.clone(),
            traces: Vec::new(),
        })
        .collect();
    for trace in &dataset.traces {
        let events = discretize_trace(trace, codebook)?;
        let slot = dataset
            .goals
            .iter()
            .position(|g| *g == trace.goal)
            .ok_or_else(|| Error::Validation(format!("unknown goal '{}'", trace.goal)))?;
        logs[slot].traces.push(events);
    }
    Ok(logs)
}
