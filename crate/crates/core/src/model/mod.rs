//! The stress classifier: a small feed-forward network trained from scratch,
//! plus the metrics used to compare training regimes.

mod encode;
mod metrics;
mod mlp;

use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{Dataset, FeatureSchema, Label, Sample};

pub use encode::{Block, Encoded, Encoder, SCALED_CLIP};
pub use metrics::{auc_pairwise, auc_trapezoid, classification_report, ClassificationReport, METRIC_COLUMNS};
pub use mlp::{bce_from_logit, sigmoid, Adam, AdamConfig, Dense, Mlp};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training data contains a single class")]
    SingleClassDataset,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("schema has unfitted features; run fit_ranges on the training split first")]
    UnfittedSchema,
    #[error("model was trained on schema {expected}, data uses {found}")]
    SchemaHashMismatch { expected: String, found: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub probability: f64,
}

impl Prediction {
    /// Label 1 iff `p ≥ 0.5`.
    pub fn from_probability(p: f64) -> Self {
        Self {
            label: Label::from(p >= 0.5),
            probability: p,
        }
    }
}

/// Anything that maps a raw feature vector to P(class 1).
pub trait BinaryModel: Sync {
    fn probability(&self, values: &[f64]) -> f64;

    fn predict(&self, values: &[f64]) -> Prediction {
        Prediction::from_probability(self.probability(values))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub hidden: Vec<usize>,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            hidden: vec![32, 16],
            adam: AdamConfig::default(),
            batch_size: 32,
            epochs: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub layer_sizes: Vec<usize>,
    pub network: Mlp,
    pub encoder: Encoder,
    pub schema: FeatureSchema,
    pub schema_hash: String,
    pub seed: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Mean minibatch loss per epoch.
    pub loss_history: Vec<f64>,
}

impl BinaryModel for Classifier {
    fn probability(&self, values: &[f64]) -> f64 {
        self.network.probability(&self.encoder.encode(values).vector)
    }
}

impl Classifier {
    pub fn predict_sample(&self, sample: &Sample) -> Prediction {
        self.predict(&sample.values)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("classifier serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Errors unless `schema` hashes to the training schema.
    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<(), ModelError> {
        let found = schema.hash();
        if found == self.schema_hash {
            Ok(())
        } else {
            Err(ModelError::SchemaHashMismatch {
                expected: self.schema_hash.clone(),
                found,
            })
        }
    }
}

/// Canonical order of training samples, independent of input order.
fn canonical_order(samples: &[Sample]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (&samples[a], &samples[b]);
        x.patient_id
            .cmp(&y.patient_id)
            .then(x.window_index.cmp(&y.window_index))
            .then(x.label.cmp(&y.label))
            .then_with(|| {
                x.values
                    .iter()
                    .zip(&y.values)
                    .map(|(p, q)| p.total_cmp(q))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    idx
}

/// Trains a fresh network. Results depend only on the sample multiset,
/// the hyperparameters and `seed`.
pub fn train(data: &Dataset, hp: &Hyperparams, seed: u64) -> Result<Classifier, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let counts = data.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(ModelError::SingleClassDataset);
    }
    let encoder = Encoder::from_schema(&data.schema).ok_or(ModelError::UnfittedSchema)?;
    let order = canonical_order(&data.samples);
    let inputs: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| encoder.encode(&data.samples[i].values).vector)
        .collect();
    let targets: Vec<f64> = order.iter().map(|&i| f64::from(data.samples[i].label)).collect();

    let mut sizes = vec![encoder.input_dim()];
    sizes.extend(&hp.hidden);
    sizes.push(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Mlp::init(&sizes, &mut rng);
    let mean_loss =
        |net: &Mlp| inputs.iter().zip(&targets).map(|(x, &y)| net.loss(x, y)).sum::<f64>() / inputs.len() as f64;
    let initial_loss = mean_loss(&net);

    let mut adam = Adam::new(hp.adam, net.param_count());
    let mut grad = vec![0.0; net.param_count()];
    let mut trace = Default::default();
    let mut perm: Vec<usize> = (0..inputs.len()).collect();
    let mut loss_history = Vec::with_capacity(hp.epochs);
    let batch = hp.batch_size.max(1);
    for _ in 0..hp.epochs {
        perm.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in perm.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in chunk {
                epoch_loss += net.accumulate_gradient(&inputs[i], targets[i], &mut trace, &mut grad);
            }
            let scale = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut net, &grad);
        }
        loss_history.push(epoch_loss / inputs.len() as f64);
    }
    let final_loss = mean_loss(&net);

    Ok(Classifier {
        layer_sizes: sizes,
        network: net,
        encoder,
        schema_hash: data.schema.hash(),
        schema: data.schema.clone(),
        seed,
        initial_loss,
        final_loss,
        loss_history,
    })
}

pub fn predict(model: &impl BinaryModel, sample: &Sample) -> Prediction {
    model.predict(&sample.values)
}

/// Positive-class precision/recall/F1, accuracy, and pairwise AUC on `test`.
pub fn evaluate(model: &impl BinaryModel, test: &Dataset) -> Result<ClassificationReport, ModelError> {
    if test.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let scores: Vec<f64> = test.samples.iter().map(|s| model.probability(&s.values)).collect();
    let labels: Vec<u8> = test.samples.iter().map(|s| s.label).collect();
    Ok(classification_report(&scores, &labels))
}

pub const GRADIENT_CHECK_STEP: f64 = 1e-5;
pub const GRADIENT_CHECK_PARAMS: usize = 100;

/// Max relative error between backprop and central differences over a
/// seeded random subset of at least 100 parameters (all of them if fewer).
pub fn gradient_check(model: &Classifier, sample: &Sample, seed: u64) -> f64 {
    let x = model.encoder.encode(&sample.values).vector;
    network_gradient_check(&model.network, &x, f64::from(sample.label), seed)
}

pub fn network_gradient_check(net: &Mlp, x: &[f64], target: f64, seed: u64) -> f64 {
    let analytic = net.gradient(x, target);
    let all: Vec<usize> = (0..net.param_count()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: Vec<usize> = if all.len() <= GRADIENT_CHECK_PARAMS {
        all
    } else {
        all.choose_multiple(&mut rng, GRADIENT_CHECK_PARAMS).copied().collect()
    };
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for k in chosen {
        let orig = *probe.param_mut(k);
        *probe.param_mut(k) = orig + GRADIENT_CHECK_STEP;
        let up = probe.loss(x, target);
        *probe.param_mut(k) = orig - GRADIENT_CHECK_STEP;
        let down = probe.loss(x, target);
        *probe.param_mut(k) = orig;
        let numeric = (up - down) / (2.0 * GRADIENT_CHECK_STEP);
        let a = analytic[k];
        let scale = a.abs().max(numeric.abs());
        if scale > 1e-10 {
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    worst
}
