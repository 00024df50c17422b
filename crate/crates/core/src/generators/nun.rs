//! Nearest-unlike-neighbour lookup over a training set.

use crate::cfmetrics::distance;
use crate::model::BinaryModel;
use crate::schema::{Dataset, Label, Sample};

/// Training samples with their model predictions computed once up front.
/// These predictions are not charged to any request budget.
pub struct NunIndex {
    pub data: Dataset,
    predicted: Vec<Label>,
}

impl NunIndex {
    pub fn new(train: &Dataset, model: &dyn BinaryModel) -> Self {
        let predicted = train.samples.iter().map(|s| model.predict(&s.values).label).collect();
        Self {
            data: train.clone(),
            predicted,
        }
    }

    pub fn predicted(&self, i: usize) -> Label {
        self.predicted[i]
    }

    pub fn len(&self) -> usize {
        self.data.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.samples.is_empty()
    }

    /// Up to `k` training indices predicted as `label`, nearest first; ties
    /// go to the lower index.
    pub fn nearest_k(&self, values: &[f64], label: Label, k: usize) -> Vec<usize> {
        let mut cands: Vec<(f64, usize)> = self
            .data
            .samples
            .iter()
            .enumerate()
            .filter(|(i, _)| self.predicted[*i] == label)
            .map(|(i, s)| (distance(values, &s.values, &self.data.schema), i))
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cands.into_iter().take(k).map(|(_, i)| i).collect()
    }

    pub fn nearest(&self, values: &[f64], label: Label) -> Option<&Sample> {
        self.nearest_k(values, label, 1).first().map(|&i| &self.data.samples[i])
    }
}
