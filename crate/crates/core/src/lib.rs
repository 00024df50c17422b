//! Counterfactual explanations and label-scarcity augmentation for
//! wearable-sensor tabular data.

pub mod cfmetrics;
pub mod featurize;
pub mod generators;
pub mod harness;
pub mod llmclient;
pub mod model;
pub mod schema;
pub mod synth;
pub mod util;

pub use schema::{Dataset, DatasetRole, FeatureKind, FeatureSchema, FeatureSpec, Label, Sample};
