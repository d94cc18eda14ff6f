use serde::{Deserialize, Serialize};

use crate::forest::ForestModel;
use crate::meta::AdaptedModel;

/// Anything mapping a model-input feature row to a landslide probability.
pub trait Predictor: Sync {
    fn predict_proba(&self, x: &[f64]) -> f64;
}

impl Predictor for ForestModel {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        ForestModel::predict_proba(self, x)
    }
}

impl Predictor for AdaptedModel {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        AdaptedModel::predict_proba(self, x)
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Predictor for F {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// The model trained for one year, as persisted by the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum YearModel {
    Forest(ForestModel),
    FewShot(AdaptedModel),
}

impl Predictor for YearModel {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        match self {
            YearModel::Forest(m) => m.predict_proba(x),
            YearModel::FewShot(m) => m.predict_proba(x),
        }
    }
}
