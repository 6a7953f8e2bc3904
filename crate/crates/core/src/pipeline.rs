//! Training the full recognizer (selection, codebook, models) and the LDA
//! baseline from a set of training traces.

use serde::{Deserialize, Serialize};

use crate::align::CostFunction;
use crate::data::Dataset;
use crate::discover::{build_model_from_log, GoalModel};
use crate::error::{Error, Result};
use crate::featsel::{fit_selection, FeatureSelection, Linkage};
use crate::lda::{fit_lda, hold_points, LdaModel, DEFAULT_HOLD_ROWS};
use crate::quantize::{discretize, fit_codebook, CodebookOptions, KMeansConfig};
use crate::recognize::{Artifacts, WeightParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub n_features: usize,
    pub n_clusters: usize,
    pub linkage: Linkage,
    pub normalize: bool,
    pub filter_threshold: f64,
    pub weights: WeightParams,
    pub costs: CostFunction,
    pub seed: u64,
    pub kmeans: KMeansConfig,
    pub lda_shrinkage: Option<f64>,
    pub hold_rows: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_features: 15,
            n_clusters: 10,
            linkage: Linkage::Average,
            normalize: true,
            filter_threshold: 0.0,
            weights: WeightParams::default(),
            costs: CostFunction::default(),
            seed: 0,
            kmeans: KMeansConfig::default(),
            lda_shrinkage: None,
            hold_rows: DEFAULT_HOLD_ROWS,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self, feature_count: usize) -> Result<()> {
        if self.n_features == 0 || self.n_features > feature_count {
            return Err(Error::Domain(format!(
                "n_features {} outside 1..={feature_count}",
                self.n_features
            )));
        }
        if self.n_clusters == 0 {
            return Err(Error::Domain("n_clusters must be at least 1".into()));
        }
        if self.hold_rows == 0 {
            return Err(Error::Domain("hold_rows must be at least 1".into()));
        }
        self.weights.validate()?;
        self.costs.validate()
    }

    fn codebook_options(&self) -> CodebookOptions {
        CodebookOptions {
            normalize: self.normalize,
            kmeans: self.kmeans,
        }
    }
}

pub fn train_selection(train: &Dataset, config: &PipelineConfig) -> Result<FeatureSelection> {
    config.validate(train.feature_count())?;
    fit_selection(&train.all_rows(), config.n_features, config.linkage)
}

/// Codebook and one model per goal on top of an existing selection.
pub fn train_recognizer(
    train: &Dataset,
    selection: FeatureSelection,
    config: &PipelineConfig,
) -> Result<Artifacts> {
    config.validate(train.feature_count())?;
    let codebook = fit_codebook(
        &train.all_rows(),
        &selection.selected,
        config.n_clusters,
        config.seed,
        config.codebook_options(),
    )?;
    let logs = discretize(train, &selection, &codebook)?;
    let models = logs
        .iter()
        .map(|log| build_model_from_log(log, config.filter_threshold))
        .collect::<Result<Vec<GoalModel>>>()?;
    Ok(Artifacts {
        selection,
        codebook,
        models,
        costs: config.costs,
    })
}

pub fn train_pm(train: &Dataset, config: &PipelineConfig) -> Result<Artifacts> {
    let selection = train_selection(train, config)?;
    train_recognizer(train, selection, config)
}

pub fn train_lda(train: &Dataset, selection: &FeatureSelection, config: &PipelineConfig) -> Result<LdaModel> {
    let points = hold_points(train, selection, config.hold_rows);
    fit_lda(&points, config.lda_shrinkage)
}
