//! Dynamic (per-year) landslide susceptibility modelling.
//!
//! The crate is organised along the pipeline:
//!
//! * [`features`], [`raster`], [`io`]: shared domain types and file formats.
//! * [`featurize`]: thematic layers and point records to feature vectors.
//! * [`tasks`]: yearly tasks, the meta-task pool and model routing.
//! * [`forest`]: random forest for sample-rich years.
//! * [`mlp`] and [`meta`]: MLP with exact gradients / Hessian-vector
//!   products, two-loop meta-training and few-shot adaptation.
//! * [`shapley`]: interventional Shapley attribution and factor rankings.
//! * [`enhance`]: deformation screening, binning, rasterization and fusion.
//! * [`eval`]: confusion metrics, ROC/AUROC and evaluation harnesses.
//! * [`synth`]: deterministic synthetic worlds for desk-scale runs.

pub mod enhance;
pub mod error;
pub mod eval;
pub mod features;
pub mod featurize;
pub mod forest;
pub mod io;
pub mod meta;
pub mod mlp;
pub mod model;
pub mod raster;
pub mod rng;
pub mod shapley;
pub mod synth;
pub mod tasks;

pub use error::{Error, Result};
pub use features::{Feature, FeatureVector, Label, LabeledSample, RawFeatures, FEATURE_COUNT};
pub use model::{Predictor, YearModel};
pub use raster::{GridGeometry, Raster, SusceptibilityRaster};
