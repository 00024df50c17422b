//! Quality metrics for batches of counterfactuals: validity, distance,
//! sparsity, plausibility, and per-feature change frequencies.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generators::CounterfactualResult;
use crate::model::BinaryModel;
use crate::schema::{FeatureSchema, Label};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("counterfactual batch is empty")]
    EmptyBatch,
    #[error("schema ranges are not fitted")]
    UnfittedSchema,
}

/// Indices where the two vectors differ (exact comparison).
pub fn changed_indices(factual: &[f64], cf: &[f64]) -> Vec<usize> {
    factual
        .iter()
        .zip(cf)
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(i, _)| i)
        .collect()
}

/// L2 norm of range-scaled continuous differences plus the fraction of
/// categorical features that differ.
pub fn distance(factual: &[f64], cf: &[f64], schema: &FeatureSchema) -> f64 {
    let mut sq = 0.0;
    let (mut cat_total, mut cat_diff) = (0usize, 0usize);
    for (spec, (&a, &b)) in schema.features().iter().zip(factual.iter().zip(cf)) {
        if spec.is_categorical() {
            cat_total += 1;
            if a != b {
                cat_diff += 1;
            }
        } else {
            let d = (b - a) / spec.range_width();
            sq += d * d;
        }
    }
    let hamming = if cat_total == 0 {
        0.0
    } else {
        cat_diff as f64 / cat_total as f64
    };
    sq.sqrt() + hamming
}

fn non_empty<T>(batch: &[T]) -> Result<(), MetricsError> {
    if batch.is_empty() {
        Err(MetricsError::EmptyBatch)
    } else {
        Ok(())
    }
}

/// Fraction of counterfactuals whose prediction differs from the factual's.
pub fn validity(batch: &[CounterfactualResult], model: &dyn BinaryModel) -> Result<f64, MetricsError> {
    non_empty(batch)?;
    let flipped = batch
        .iter()
        .filter(|r| model.predict(&r.cf_values).label != model.predict(&r.factual.values).label)
        .count();
    Ok(flipped as f64 / batch.len() as f64)
}

/// Mean number of changed features per counterfactual, valid or not.
pub fn sparsity(batch: &[CounterfactualResult]) -> Result<f64, MetricsError> {
    non_empty(batch)?;
    let total: usize = batch
        .iter()
        .map(|r| changed_indices(&r.factual.values, &r.cf_values).len())
        .sum();
    Ok(total as f64 / batch.len() as f64)
}

pub fn mean_distance(batch: &[CounterfactualResult], schema: &FeatureSchema) -> Result<f64, MetricsError> {
    non_empty(batch)?;
    let total: f64 = batch
        .iter()
        .map(|r| distance(&r.factual.values, &r.cf_values, schema))
        .sum();
    Ok(total / batch.len() as f64)
}

/// Whether every value lies in its fitted training range / allowed set.
pub fn is_plausible(values: &[f64], schema: &FeatureSchema) -> Result<bool, MetricsError> {
    let mut all = true;
    for (spec, &v) in schema.features().iter().zip(values) {
        all &= spec.in_range(v).ok_or(MetricsError::UnfittedSchema)?;
    }
    Ok(all)
}

/// Percentage of counterfactuals lying entirely inside the training ranges.
pub fn plausibility(batch: &[CounterfactualResult], schema: &FeatureSchema) -> Result<f64, MetricsError> {
    non_empty(batch)?;
    if !schema.is_fitted() {
        return Err(MetricsError::UnfittedSchema);
    }
    let mut inside = 0usize;
    for r in batch {
        if is_plausible(&r.cf_values, schema)? {
            inside += 1;
        }
    }
    Ok(100.0 * inside as f64 / batch.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityProfile {
    pub features: Vec<String>,
    pub change_frequency: Vec<f64>,
    pub n: usize,
}

pub fn diversity_profile(
    batch: &[CounterfactualResult],
    schema: &FeatureSchema,
) -> Result<DiversityProfile, MetricsError> {
    non_empty(batch)?;
    let mut counts = vec![0usize; schema.dim()];
    for r in batch {
        for i in changed_indices(&r.factual.values, &r.cf_values) {
            counts[i] += 1;
        }
    }
    Ok(DiversityProfile {
        features: schema.names().map(str::to_owned).collect(),
        change_frequency: counts.iter().map(|&c| c as f64 / batch.len() as f64).collect(),
        n: batch.len(),
    })
}

impl DiversityProfile {
    /// n-weighted merge; equals the profile of the concatenated batches.
    pub fn merge(profiles: &[&DiversityProfile]) -> Option<DiversityProfile> {
        let first = profiles.first()?;
        let n: usize = profiles.iter().map(|p| p.n).sum();
        let change_frequency = (0..first.features.len())
            .map(|i| {
                let hits: f64 = profiles.iter().map(|p| p.change_frequency[i] * p.n as f64).sum();
                if n == 0 {
                    0.0
                } else {
                    hits / n as f64
                }
            })
            .collect();
        Some(DiversityProfile {
            features: first.features.clone(),
            change_frequency,
            n,
        })
    }

    pub fn frequency(&self, feature: &str) -> Option<f64> {
        let i = self.features.iter().position(|f| f == feature)?;
        Some(self.change_frequency[i])
    }
}

/// CSV rows `feature,change_frequency,generator` (header included).
pub fn diversity_csv(rows: &[(String, DiversityProfile)]) -> String {
    let mut out = String::from("feature,change_frequency,generator\n");
    for (generator, p) in rows {
        for (f, v) in p.features.iter().zip(&p.change_frequency) {
            let _ = writeln!(out, "{f},{v:.4},{generator}");
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub n_cf: usize,
    pub validity: f64,
    pub mean_distance: f64,
    pub mean_sparsity: f64,
    /// Percentage, 0–100.
    pub plausibility: f64,
}

/// Metrics for one generator, split by desired class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CFBatchReport {
    pub generator_id: String,
    pub classes: [Option<ClassMetrics>; 2],
}

pub fn batch_report(
    generator_id: &str,
    batch: &[CounterfactualResult],
    model: &dyn BinaryModel,
    schema: &FeatureSchema,
) -> Result<CFBatchReport, MetricsError> {
    non_empty(batch)?;
    let per_class = |c: Label| -> Result<Option<ClassMetrics>, MetricsError> {
        let subset: Vec<CounterfactualResult> = batch.iter().filter(|r| r.desired_label == c).cloned().collect();
        if subset.is_empty() {
            return Ok(None);
        }
        Ok(Some(ClassMetrics {
            n_cf: subset.len(),
            validity: validity(&subset, model)?,
            mean_distance: mean_distance(&subset, schema)?,
            mean_sparsity: sparsity(&subset)?,
            plausibility: plausibility(&subset, schema)?,
        }))
    };
    Ok(CFBatchReport {
        generator_id: generator_id.to_owned(),
        classes: [per_class(0)?, per_class(1)?],
    })
}

impl CFBatchReport {
    /// n-weighted merge of reports for the same generator.
    pub fn merge(generator_id: &str, reports: &[&CFBatchReport]) -> CFBatchReport {
        let class = |c: usize| {
            let parts: Vec<&ClassMetrics> = reports.iter().filter_map(|r| r.classes[c].as_ref()).collect();
            let n: usize = parts.iter().map(|m| m.n_cf).sum();
            if n == 0 {
                return None;
            }
            let avg = |f: fn(&ClassMetrics) -> f64| parts.iter().map(|m| f(m) * m.n_cf as f64).sum::<f64>() / n as f64;
            Some(ClassMetrics {
                n_cf: n,
                validity: avg(|m| m.validity),
                mean_distance: avg(|m| m.mean_distance),
                mean_sparsity: avg(|m| m.mean_sparsity),
                plausibility: avg(|m| m.plausibility),
            })
        };
        CFBatchReport {
            generator_id: generator_id.to_owned(),
            classes: [class(0), class(1)],
        }
    }
}

/// Header for the per-class metric table. Validity is a fraction,
/// plausibility a percentage.
pub const TABLE3_HEADER: &str =
    "generator,class0_n,class0_validity,class0_distance,class0_sparsity,class0_plausibility_pct,\
class1_n,class1_validity,class1_distance,class1_sparsity,class1_plausibility_pct";

pub fn table3_csv(reports: &[CFBatchReport]) -> String {
    let mut out = String::from(TABLE3_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.generator_id);
        for c in &r.classes {
            match c {
                Some(m) => {
                    let _ = write!(
                        out,
                        ",{},{:.2},{:.2},{:.2},{:.0}",
                        m.n_cf, m.validity, m.mean_distance, m.mean_sparsity, m.plausibility
                    );
                }
                None => out.push_str(",0,,,,"),
            }
        }
        out.push('\n');
    }
    out
}
