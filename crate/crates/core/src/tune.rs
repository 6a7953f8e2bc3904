//! Structural grid search over (feature count, cluster count) and
//! Latin-hypercube search over the weight parameters, both scored by F1.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{aggregate_f1, cross_validate, pm_cases, score_pm_cases, Method};
use crate::pipeline::PipelineConfig;
use crate::recognize::WeightParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneEntry {
    pub key: String,
    pub n_features: usize,
    pub n_clusters: usize,
    pub weights: WeightParams,
    /// `None` for a skipped cell.
    pub f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_n_features: usize,
    pub best_n_clusters: usize,
    pub best_weights: WeightParams,
    pub best_f1: f64,
    /// Every evaluated configuration, in evaluation order.
    pub table: Vec<TuneEntry>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_seed: Option<u64>,
}

impl TuneResult {
    fn from_table(table: Vec<TuneEntry>, seed: u64, sample_seed: Option<u64>) -> Result<Self> {
        let mut best: Option<&TuneEntry> = None;
        for entry in &table {
            if let Some(f) = entry.f1 {
                if best.is_none_or(|b| f > b.f1.unwrap_or(f64::NEG_INFINITY)) {
                    best = Some(entry);
                }
            }
        }
        let best = best.ok_or_else(|| Error::Tuning("every configuration was infeasible".into()))?;
        Ok(Self {
            best_n_features: best.n_features,
            best_n_clusters: best.n_clusters,
            best_weights: best.weights,
            best_f1: best.f1.unwrap_or_default(),
            table: table.clone(),
            seed,
            sample_seed,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Append-only JSON-lines record of finished configurations.
struct Progress {
    done: BTreeMap<String, TuneEntry>,
    file: Option<Mutex<std::fs::File>>,
}

impl Progress {
    fn open(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self {
                done: BTreeMap::new(),
                file: None,
            });
        };
        let mut done = BTreeMap::new();
        if path.exists() {
            let reader = BufReader::new(std::fs::File::open(path).map_err(|e| Error::io(path, e))?);
            for line in reader.lines() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                // A torn final line from an interrupted run is recomputed.
                if let Ok(entry) = serde_json::from_str::<TuneEntry>(&line) {
                    done.insert(entry.key.clone(), entry);
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            done,
            file: Some(Mutex::new(file)),
        })
    }

    fn record(&self, entry: &TuneEntry) -> Result<()> {
        if let Some(file) = &self.file {
            let line = serde_json::to_string(entry)?;
            let mut f = file.lock().unwrap_or_else(|p| p.into_inner());
            writeln!(f, "{line}").map_err(|e| Error::io("<progress>", e))?;
            f.flush().map_err(|e| Error::io("<progress>", e))?;
        }
        Ok(())
    }

    fn run(&self, key: String, compute: impl FnOnce() -> Result<TuneEntry>) -> Result<TuneEntry> {
        if let Some(entry) = self.done.get(&key) {
            return Ok(entry.clone());
        }
        let entry = compute()?;
        self.record(&entry)?;
        Ok(entry)
    }
}

fn weights_key(w: &WeightParams) -> String {
    format!(
        "phi={:?},delta={:?},lambda={:?},beta={:?},eps={:?}",
        w.phi, w.delta, w.lambda, w.beta, w.tie_epsilon
    )
}

/// Cross-validates the recognizer on every (N_f, N_c) cell with the weights
/// of `base`. Cells whose cluster count cannot be met are recorded and
/// skipped. Ties go to the first cell in (N_f, N_c) order.
pub fn grid_search(
    dataset: &Dataset,
    nf_values: &[usize],
    nc_values: &[usize],
    base: &PipelineConfig,
    obs_levels: &[f64],
    progress: Option<&Path>,
) -> Result<TuneResult> {
    if nf_values.is_empty() || nc_values.is_empty() {
        return Err(Error::Validation("grid ranges must be non-empty".into()));
    }
    let mut cells: Vec<(usize, usize)> = nf_values
        .iter()
        .flat_map(|&nf| nc_values.iter().map(move |&nc| (nf, nc)))
        .collect();
    cells.sort_unstable();
    cells.dedup();
    for &(nf, nc) in &cells {
        PipelineConfig {
            n_features: nf,
            n_clusters: nc,
            ..base.clone()
        }
        .validate(dataset.feature_count())?;
    }
    let progress = Progress::open(progress)?;
    let table = cells
        .par_iter()
        .map(|&(nf, nc)| {
            let config = PipelineConfig {
                n_features: nf,
                n_clusters: nc,
                ..base.clone()
            };
            let key = format!("grid nf={nf} nc={nc} seed={} {}", base.seed, weights_key(&base.weights));
            progress.run(key.clone(), || {
                let (f1, skipped) = match cross_validate(dataset, &config, &[Method::Pm], obs_levels, "") {
                    Ok(report) => (Some(report.overall[&Method::Pm].f1), None),
                    Err(e) if matches!(e.root(), Error::Infeasible(_)) => (None, Some(e.to_string())),
                    Err(e) => return Err(e),
                };
                Ok(TuneEntry {
                    key,
                    n_features: nf,
                    n_clusters: nc,
                    weights: base.weights,
                    f1,
                    skipped,
                })
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TuneResult::from_table(table, base.seed, None)
}

/// Inclusive ranges for each weight parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LhsBounds {
    pub phi: (f64, f64),
    pub delta: (f64, f64),
    pub lambda: (f64, f64),
    pub beta: (f64, f64),
}

impl Default for LhsBounds {
    fn default() -> Self {
        Self {
            phi: (0.0, 5.0),
            delta: (0.0, 2.0),
            lambda: (1.0, 4.0),
            beta: (0.0, 1.0),
        }
    }
}

impl LhsBounds {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("phi", self.phi),
            ("delta", self.delta),
            ("lambda", self.lambda),
            ("beta", self.beta),
        ];
        for (name, (lo, hi)) in named {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::Domain(format!("invalid {name} bounds [{lo}, {hi}]")));
            }
        }
        if self.delta.0 < 0.0 {
            return Err(Error::Domain("delta lower bound must be >= 0".into()));
        }
        if self.lambda.0 < 1.0 {
            return Err(Error::Domain("lambda lower bound must be >= 1".into()));
        }
        if self.beta.0 < 0.0 || self.beta.1 > 1.0 || self.beta.1 <= 0.0 {
            return Err(Error::Domain("beta bounds must lie within (0, 1]".into()));
        }
        Ok(())
    }
}

/// Latin-hypercube sample: each parameter's `n` values sit at the midpoints
/// of `n` equal strata, one per stratum, in a seeded random order.
pub fn lhs_sample(bounds: &LhsBounds, n: usize, seed: u64) -> Result<Vec<WeightParams>> {
    bounds.validate()?;
    if n == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut column = |(lo, hi): (f64, f64)| -> Vec<f64> {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        let width = (hi - lo) / n as f64;
        strata.into_iter().map(|s| lo + (s as f64 + 0.5) * width).collect()
    };
    let phi = column(bounds.phi);
    let delta = column(bounds.delta);
    let lambda = column(bounds.lambda);
    let beta = column(bounds.beta);
    Ok((0..n)
        .map(|i| WeightParams {
            phi: phi[i],
            delta: delta[i],
            lambda: lambda[i],
            beta: beta[i],
            ..WeightParams::default()
        })
        .collect())
}

/// Scores every candidate weight setting on the same trained folds and
/// alignments. Ties go to the earliest candidate.
pub fn tune_weights(
    dataset: &Dataset,
    config: &PipelineConfig,
    candidates: &[WeightParams],
    obs_levels: &[f64],
    progress: Option<&Path>,
    sample_seed: Option<u64>,
) -> Result<TuneResult> {
    if candidates.is_empty() {
        return Err(Error::Validation("no candidate parameters".into()));
    }
    for c in candidates {
        c.validate()?;
    }
    let progress = Progress::open(progress)?;
    let base_key = format!(
        "weights nf={} nc={} seed={}",
        config.n_features, config.n_clusters, config.seed
    );
    let pending = candidates
        .iter()
        .any(|c| !progress.done.contains_key(&format!("{base_key} {}", weights_key(c))));
    let cases = if pending {
        pm_cases(dataset, config, obs_levels)?
    } else {
        Vec::new()
    };
    let table = candidates
        .par_iter()
        .map(|c| {
            let key = format!("{base_key} {}", weights_key(c));
            progress.run(key.clone(), || {
                let scored = score_pm_cases(&cases, "", c)?;
                Ok(TuneEntry {
                    key,
                    n_features: config.n_features,
                    n_clusters: config.n_clusters,
                    weights: *c,
                    f1: Some(aggregate_f1(&scored)),
                    skipped: None,
                })
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TuneResult::from_table(table, config.seed, sample_seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lhs_single_sample_is_the_midpoint() {
        let s = lhs_sample(&LhsBounds::default(), 1, 3).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].phi, s[0].delta, s[0].lambda, s[0].beta), (2.5, 1.0, 2.5, 0.5));
    }

    #[test]
    fn lhs_four_strata_on_unit_interval() {
        let bounds = LhsBounds {
            phi: (0.0, 1.0),
            ..LhsBounds::default()
        };
        let s = lhs_sample(&bounds, 4, 11).unwrap();
        let mut phis: Vec<f64> = s.iter().map(|w| w.phi).collect();
        phis.sort_by(f64::total_cmp);
        assert_eq!(phis, vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(s, lhs_sample(&bounds, 4, 11).unwrap());
    }

    #[test]
    fn lhs_rejects_bad_bounds() {
        let bad = [
            LhsBounds {
                lambda: (0.5, 2.0),
                ..LhsBounds::default()
            },
            LhsBounds {
                beta: (0.0, 1.5),
                ..LhsBounds::default()
            },
            LhsBounds {
                phi: (2.0, 1.0),
                ..LhsBounds::default()
            },
            LhsBounds {
                delta: (0.0, f64::INFINITY),
                ..LhsBounds::default()
            },
        ];
        for b in bad {
            assert!(lhs_sample(&b, 5, 0).is_err());
        }
        assert!(lhs_sample(&LhsBounds::default(), 0, 0).is_err());
    }

    #[test]
    fn best_is_first_maximum() {
        let entry = |key: &str, f1: Option<f64>| TuneEntry {
            key: key.into(),
            n_features: 1,
            n_clusters: 1,
            weights: WeightParams::default(),
            f1,
            skipped: None,
        };
        let table = vec![entry("a", Some(0.5)), entry("b", None), entry("c", Some(0.7)), entry("d", Some(0.7))];
        let result = TuneResult::from_table(table, 0, None).unwrap();
        assert_eq!(result.best_f1, 0.7);
        assert_eq!(result.table.len(), 4);
        assert!(TuneResult::from_table(vec![entry("x", None)], 0, None).is_err());
    }
}
