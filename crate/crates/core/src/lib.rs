//! Language identification for languages written in Perso-Arabic scripts.
//!
//! The pipeline runs from raw text to evaluated models:
//!
//! * [`normalize`] cleans raw corpus text into sentences,
//! * [`scriptmap`] holds grapheme substitution tables from a language's
//!   script to the script of a dominant language,
//! * [`synth`] uses them to synthesize unconventionally written text,
//! * [`dataset`] splits, upsamples and assembles training configurations,
//! * [`models`] provides naive Bayes, MLP and subword-embedding classifiers,
//! * [`hier`] detects confused clusters and builds root + expert models,
//! * [`eval`] scores predictions and compares models.
//!
//! Models are generic over their stored float type; the aliases below fix
//! it to `f32` or `f64`.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod hier;
pub mod lang;
pub mod models;
pub mod normalize;
pub mod rng;
pub mod scalar;
pub mod scriptmap;
pub mod sentence;
pub mod synth;
pub mod synthlang;

pub use error::{Error, Result};
pub use eval::{score, significance_test, EvaluationReport, Predictor, SignificanceResult};
pub use features::NgramSpec;
pub use hier::{detect_clusters, ClusterSet, ConfusionMatrix};
pub use lang::{Lang, LanguageProfile, ProfileSet};
pub use models::{AnyModel, Classifier, ModelKind, Prediction, TrainParams};
pub use scalar::Scalar;
pub use scriptmap::{MappingSet, MappingTable};
pub use sentence::{NoiseLevel, Sentence};

pub type Mnb32 = models::Mnb<f32>;
pub type Mnb64 = models::Mnb<f64>;
pub type Mlp32 = models::Mlp<f32>;
pub type Mlp64 = models::Mlp<f64>;
pub type Subword32 = models::Subword<f32>;
pub type Subword64 = models::Subword<f64>;
pub type ClassifierModel32 = models::ClassifierModel<f32>;
pub type ClassifierModel64 = models::ClassifierModel<f64>;
pub type HierarchicalModel32 = hier::HierarchicalModel<f32>;
pub type HierarchicalModel64 = hier::HierarchicalModel<f64>;
pub type Model32 = models::Model<f32>;
pub type Model64 = models::Model<f64>;
