//! From per-goal alignments to a posterior over candidate goals.
//!
//! The weight of an alignment of length `n` is
//! `phi + lambda^m * sum_{i=1..n} i^delta * c_i`, where `c_i` is the cost of
//! the move at (1-based) position `i` and `m` the number of LOG moves that
//! close the alignment. The posterior is a softmax over `-beta * weight`.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{optimal_alignment_in, Alignment, CostFunction};
use crate::data::ContinuousTrace;
use crate::discover::GoalModel;
use crate::error::{Error, Result};
use crate::featsel::FeatureSelection;
use crate::quantize::{discretize_trace, Codebook, Event};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    pub phi: f64,
    pub delta: f64,
    pub lambda: f64,
    pub beta: f64,
    pub tie_epsilon: f64,
}

impl Default for WeightParams {
    fn default() -> Self {
        Self {
            phi: 1.0,
            delta: 1.0,
            lambda: 2.0,
            beta: 1.0,
            tie_epsilon: 1e-9,
        }
    }
}

impl WeightParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.phi, self.delta, self.lambda, self.beta, self.tie_epsilon]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain("weight parameters must be finite".into()));
        }
        if self.delta < 0.0 {
            return Err(Error::Domain(format!("delta {} must be >= 0", self.delta)));
        }
        if self.lambda < 1.0 {
            return Err(Error::Domain(format!("lambda {} must be >= 1", self.lambda)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Domain(format!("beta {} outside (0, 1]", self.beta)));
        }
        if self.tie_epsilon < 0.0 {
            return Err(Error::Domain(format!(
                "tie epsilon {} must be >= 0",
                self.tie_epsilon
            )));
        }
        Ok(())
    }
}

pub fn alignment_weight(alignment: &Alignment, params: &WeightParams) -> f64 {
    let m = alignment.trailing_log_moves();
    let positional: f64 = alignment
        .moves
        .iter()
        .enumerate()
        .map(|(i, mv)| ((i + 1) as f64).powf(params.delta) * mv.cost)
        .sum();
    params.phi + params.lambda.powi(m as i32) * positional
}

/// Softmax of `-beta * weight`, shifted by the smallest finite weight.
/// Infinite weights get probability 0; if every weight is infinite the
/// result is uniform.
pub fn goal_posterior(weights: &BTreeMap<String, f64>, beta: f64) -> Result<BTreeMap<String, f64>> {
    if weights.is_empty() {
        return Err(Error::Validation("posterior needs at least one goal".into()));
    }
    if weights.values().any(|w| w.is_nan() || *w == f64::NEG_INFINITY) {
        return Err(Error::Validation("weights must be finite or +inf".into()));
    }
    let min = weights
        .values()
        .copied()
        .filter(|w| w.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        let uniform = 1.0 / weights.len() as f64;
        return Ok(weights.keys().map(|g| (g.clone(), uniform)).collect());
    }
    let unnormalized: Vec<(String, f64)> = weights
        .iter()
        .map(|(g, w)| {
            let p = if w.is_finite() { (-beta * (w - min)).exp() } else { 0.0 };
            (g.clone(), p)
        })
        .collect();
    let total: f64 = unnormalized.iter().map(|(_, p)| p).sum();
    Ok(unnormalized
        .into_iter()
        .map(|(g, p)| (g, p / total))
        .collect())
}

/// Goals whose probability is within `tie_epsilon` of the maximum.
pub fn infer_goals(probabilities: &BTreeMap<String, f64>, tie_epsilon: f64) -> BTreeSet<String> {
    let max = probabilities
        .values()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    probabilities
        .iter()
        .filter(|(_, &p)| p >= max - tie_epsilon)
        .map(|(g, _)| g.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSummary {
    pub cost: f64,
    /// Trailing LOG moves.
    pub m: usize,
    /// Alignment length.
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalPosterior {
    pub probabilities: BTreeMap<String, f64>,
    pub inferred: Vec<String>,
    /// Alignment weight per goal; `null` in JSON for a goal whose model has
    /// no complete run.
    #[serde(with = "infinite_as_null")]
    pub weights: BTreeMap<String, f64>,
    pub alignments: BTreeMap<String, AlignmentSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl GoalPosterior {
    pub fn probability(&self, goal: &str) -> f64 {
        self.probabilities.get(goal).copied().unwrap_or(0.0)
    }

    pub fn max_probability(&self) -> f64 {
        self.probabilities
            .values()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

mod infinite_as_null {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
        let out: BTreeMap<&String, Option<f64>> = map
            .iter()
            .map(|(k, v)| (k, v.is_finite().then_some(*v)))
            .collect();
        out.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
        let raw: BTreeMap<String, Option<f64>> = BTreeMap::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|(k, v)| (k, v.unwrap_or(f64::INFINITY)))
            .collect())
    }
}

/// Everything recognition needs from training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub selection: FeatureSelection,
    pub codebook: Codebook,
    pub models: Vec<GoalModel>,
    pub costs: CostFunction,
}

/// Optimal alignment of one trace against one goal's model. A model without
/// a complete run yields no alignment and a diagnostic instead.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalAlignment {
    pub goal: String,
    pub alignment: Option<Alignment>,
    pub diagnostic: Option<String>,
}

/// Aligns `events` against every model in parallel; output follows model order.
pub fn align_all(events: &[Event], models: &[GoalModel], costs: &CostFunction) -> Result<Vec<GoalAlignment>> {
    if models.is_empty() {
        return Err(Error::Validation("no goal models".into()));
    }
    models
        .par_iter()
        .map(|m| match optimal_alignment_in(events, &m.graph(), costs) {
            Ok(alignment) => Ok(GoalAlignment {
                goal: m.goal.clone(),
                alignment: Some(alignment),
                diagnostic: None,
            }),
            Err(Error::Alignment(reason)) => Ok(GoalAlignment {
                goal: m.goal.clone(),
                alignment: None,
                diagnostic: Some(format!("goal '{}': {reason}; weight set to +inf", m.goal)),
            }),
            Err(other) => Err(other),
        })
        .collect()
}

/// Weights, posterior and inferred set from precomputed alignments.
pub fn posterior_from_alignments(per_goal: &[GoalAlignment], params: &WeightParams) -> Result<GoalPosterior> {
    params.validate()?;
    let mut weights = BTreeMap::new();
    let mut alignments = BTreeMap::new();
    let mut diagnostics = Vec::new();
    for entry in per_goal {
        match &entry.alignment {
            Some(alignment) => {
                weights.insert(entry.goal.clone(), alignment_weight(alignment, params));
                alignments.insert(
                    entry.goal.clone(),
                    AlignmentSummary {
                        cost: alignment.total_cost,
                        m: alignment.trailing_log_moves(),
                        n: alignment.len(),
                    },
                );
            }
            None => {
                weights.insert(entry.goal.clone(), f64::INFINITY);
            }
        }
        diagnostics.extend(entry.diagnostic.clone());
    }
    let probabilities = goal_posterior(&weights, params.beta)?;
    let inferred = infer_goals(&probabilities, params.tie_epsilon)
        .into_iter()
        .collect();
    Ok(GoalPosterior {
        probabilities,
        inferred,
        weights,
        alignments,
        diagnostics,
    })
}

/// Aligns `events` against every model and scores the goals.
pub fn recognize_events(
    events: &[Event],
    models: &[GoalModel],
    costs: &CostFunction,
    params: &WeightParams,
) -> Result<GoalPosterior> {
    params.validate()?;
    let per_goal = align_all(events, models, costs)?;
    posterior_from_alignments(&per_goal, params)
}

/// Full recognition of a continuous prefix: discretize with the trained
/// codebook, then [`recognize_events`].
pub fn recognize(prefix: &ContinuousTrace, artifacts: &Artifacts, params: &WeightParams) -> Result<GoalPosterior> {
    if artifacts.selection.selected != artifacts.codebook.selected {
        return Err(Error::Validation(
            "codebook and feature selection disagree".into(),
        ));
    }
    if prefix.rows.is_empty() {
        return Err(Error::Validation("prefix has no rows".into()));
    }
    let events = discretize_trace(prefix, &artifacts.codebook)?;
    recognize_events(&events.events, &artifacts.models, &artifacts.costs, params)
}
