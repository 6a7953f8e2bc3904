//! Linear discriminant baseline that classifies a single feature vector,
//! the last row of an observed prefix.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{ContinuousTrace, Dataset};
use crate::error::{Error, Result};
use crate::featsel::FeatureSelection;

/// Shrinkage factors tried in order when none is given.
pub const SHRINKAGE_LADDER: [f64; 4] = [0.0, 1e-6, 1e-4, 1e-2];
/// Largest acceptable condition number of the shrunk covariance.
pub const MAX_CONDITION: f64 = 1e12;
/// Rows at the end of each training trace used as hold-pose samples.
pub const DEFAULT_HOLD_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub classes: Vec<String>,
    pub means: Vec<Vec<f64>>,
    /// Pooled within-class covariance after shrinkage.
    pub covariance: Vec<Vec<f64>>,
    pub shrinkage: f64,
    pub priors: Vec<f64>,
    /// `covariance^-1 * mean_k` per class.
    pub coefficients: Vec<Vec<f64>>,
    /// `-0.5 * mean_k' covariance^-1 mean_k + ln prior_k` per class.
    pub intercepts: Vec<f64>,
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn shrink(pooled: &DMatrix<f64>, target: f64, gamma: f64) -> DMatrix<f64> {
    let d = pooled.nrows();
    pooled * (1.0 - gamma) + DMatrix::<f64>::identity(d, d) * (gamma * target)
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl LdaModel {
    /// Builds a model from class means and an already shrunk covariance.
    pub fn from_parts(
        classes: Vec<String>,
        means: Vec<Vec<f64>>,
        covariance: Vec<Vec<f64>>,
        shrinkage: f64,
        priors: Vec<f64>,
    ) -> Result<Self> {
        let d = covariance.len();
        if classes.len() != means.len() || classes.len() != priors.len() {
            return Err(Error::Validation("classes, means and priors differ in length".into()));
        }
        if means.iter().any(|m| m.len() != d) || covariance.iter().any(|r| r.len() != d) {
            return Err(Error::Validation("dimension mismatch in LDA parts".into()));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| covariance[i][j]);
        let chol = cov.clone().cholesky().ok_or_else(|| {
            Error::InsufficientData("covariance is not positive definite".into())
        })?;
        let mut coefficients = Vec::with_capacity(classes.len());
        let mut intercepts = Vec::with_capacity(classes.len());
        for (mean, prior) in means.iter().zip(&priors) {
            let mu = DVector::from_column_slice(mean);
            let w = chol.solve(&mu);
            intercepts.push(-0.5 * mu.dot(&w) + prior.ln());
            coefficients.push(w.iter().copied().collect());
        }
        Ok(Self {
            classes,
            means,
            covariance,
            shrinkage,
            priors,
            coefficients,
            intercepts,
        })
    }

    pub fn dimension(&self) -> usize {
        self.covariance.len()
    }

    /// Linear discriminant score per class.
    pub fn scores(&self, point: &[f64]) -> Result<Vec<f64>> {
        if point.len() != self.dimension() {
            return Err(Error::Validation(format!(
                "point has dimension {}, model expects {}",
                point.len(),
                self.dimension()
            )));
        }
        Ok(self
            .coefficients
            .iter()
            .zip(&self.intercepts)
            .map(|(w, b)| w.iter().zip(point).map(|(a, x)| a * x).sum::<f64>() + b)
            .collect())
    }
}

/// Fits class means and a pooled covariance. With `shrinkage = None` the
/// smallest factor of [`SHRINKAGE_LADDER`] giving a condition number below
/// [`MAX_CONDITION`] is used, falling back to the fully shrunk diagonal.
pub fn fit_lda<S: AsRef<str>>(points: &[(S, Vec<f64>)], shrinkage: Option<f64>) -> Result<LdaModel> {
    let Some((_, first)) = points.first() else {
        return Err(Error::InsufficientData("LDA needs training points".into()));
    };
    let d = first.len();
    if d == 0 || points.iter().any(|(_, p)| p.len() != d) {
        return Err(Error::Validation("LDA points must share a non-zero dimension".into()));
    }
    if let Some(g) = shrinkage {
        if !(0.0..=1.0).contains(&g) {
            return Err(Error::Domain(format!("shrinkage {g} outside [0, 1]")));
        }
    }

    let mut classes: Vec<String> = Vec::new();
    let mut members: Vec<Vec<&[f64]>> = Vec::new();
    for (label, p) in points {
        let label = label.as_ref();
        let slot = match classes.iter().position(|c| c == label) {
            Some(slot) => slot,
            None => {
                classes.push(label.to_string());
                members.push(Vec::new());
                classes.len() - 1
            }
        };
        members[slot].push(p);
    }
    if classes.len() < 2 {
        return Err(Error::InsufficientData("LDA needs at least two classes".into()));
    }
    if let Some((c, _)) = classes.iter().zip(&members).find(|(_, m)| m.len() < 2) {
        return Err(Error::InsufficientData(format!(
            "class '{c}' has fewer than 2 points"
        )));
    }

    let means: Vec<Vec<f64>> = members
        .iter()
        .map(|pts| {
            let mut m = vec![0.0; d];
            for p in pts {
                for (a, v) in m.iter_mut().zip(p.iter()) {
                    *a += v;
                }
            }
            m.iter_mut().for_each(|a| *a /= pts.len() as f64);
            m
        })
        .collect();
    let mut pooled = DMatrix::<f64>::zeros(d, d);
    for (pts, mean) in members.iter().zip(&means) {
        for p in pts {
            let c = DVector::from_iterator(d, p.iter().zip(mean).map(|(x, m)| x - m));
            pooled += &c * c.transpose();
        }
    }
    pooled /= (points.len() - classes.len()) as f64;

    let mut target = pooled.trace() / d as f64;
    if target <= 0.0 {
        target = 1.0;
    }
    let gamma = match shrinkage {
        Some(g) => g,
        None => SHRINKAGE_LADDER
            .iter()
            .copied()
            .find(|&g| condition_number(&shrink(&pooled, target, g)) < MAX_CONDITION)
            .unwrap_or(1.0),
    };
    let covariance = shrink(&pooled, target, gamma);
    let priors = vec![1.0 / classes.len() as f64; classes.len()];
    LdaModel::from_parts(classes, means, to_rows(&covariance), gamma, priors)
}

/// Label (ties to the lowest class index) and softmax posterior.
pub fn lda_classify(model: &LdaModel, point: &[f64]) -> Result<(String, BTreeMap<String, f64>)> {
    let scores = model.scores(point)?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    let max = scores[best];
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    let posterior = model
        .classes
        .iter()
        .cloned()
        .zip(exp.iter().map(|e| e / total))
        .collect();
    Ok((model.classes[best].clone(), posterior))
}

/// Classifies the final row of the prefix on the selected features.
pub fn lda_recognize(
    prefix: &ContinuousTrace,
    model: &LdaModel,
    selection: &FeatureSelection,
) -> Result<(String, BTreeMap<String, f64>)> {
    let last = prefix
        .rows
        .last()
        .ok_or_else(|| Error::Validation("prefix has no rows".into()))?;
    lda_classify(model, &selection.project(last))
}

/// Training points: the last `hold_rows` rows of every trace, labeled by goal.
pub fn hold_points(dataset: &Dataset, selection: &FeatureSelection, hold_rows: usize) -> Vec<(String, Vec<f64>)> {
    dataset
        .traces
        .iter()
        .flat_map(|t| {
            let start = t.rows.len().saturating_sub(hold_rows);
            t.rows[start..]
                .iter()
                .map(|r| (t.goal.clone(), selection.project(r)))
        })
        .collect()
}
