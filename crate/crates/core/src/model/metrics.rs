//! Binary classification metrics for the positive class.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub n: usize,
    /// Metrics that were undefined and reported as a fallback value.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

impl ClassificationReport {
    /// Metric by table5.csv column suffix (`acc`, `pre`, `rec`, `f1`, `auc`).
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "acc" => Some(self.accuracy),
            "pre" => Some(self.precision),
            "rec" => Some(self.recall),
            "f1" => Some(self.f1),
            "auc" => Some(self.auc),
            _ => None,
        }
    }
}

pub const METRIC_COLUMNS: [&str; 5] = ["acc", "pre", "rec", "f1", "auc"];

/// Exact Mann–Whitney AUC: fraction of (positive, negative) pairs ranked
/// correctly, ties worth one half. `None` when a class is missing.
pub fn auc_pairwise(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l != 1)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// Area under the ROC curve by the trapezoidal rule over score thresholds.
pub fn auc_trapezoid(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0.0, 0.0);
    let (mut prev_tpr, mut prev_fpr) = (0.0, 0.0);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let (tpr, fpr) = (tp / n_pos, fp / n_neg);
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    Some(area)
}

/// Scores are probabilities of class 1; predictions threshold at 0.5 (≥).
pub fn classification_report(scores: &[f64], labels: &[u8]) -> ClassificationReport {
    let mut undefined = Vec::new();
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= 0.5, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let n = scores.len();
    let ratio = |num: usize, den: usize, name: &str, undefined: &mut Vec<String>| {
        if den == 0 {
            undefined.push(name.to_owned());
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let accuracy = ratio(tp + tn, n, "accuracy", &mut undefined);
    let precision = ratio(tp, tp + fp, "precision", &mut undefined);
    let recall = ratio(tp, tp + fneg, "recall", &mut undefined);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        undefined.push("f1".into());
        0.0
    };
    let auc = auc_pairwise(scores, labels).unwrap_or_else(|| {
        undefined.push("auc".into());
        0.5
    });
    ClassificationReport {
        accuracy,
        precision,
        recall,
        f1,
        auc,
        n,
        undefined,
    }
}
