//! Counterfactual generators behind one request/result contract.
//!
//! Every generator edits only mutable features, reports whether the returned
//! vector actually flips the model, and stays within a per-request budget of
//! classifier evaluations (or LLM attempts for the prompted generator).

mod diverse;
mod greedy;
mod llm;
mod mock;
mod nice;
mod nun;
mod parse;
mod prompt;

use std::cell::Cell;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfmetrics;
use crate::llmclient::LlmError;
use crate::model::BinaryModel;
use crate::schema::{FeatureSchema, Label, Sample};

pub use diverse::{generate_diverse, DiverseConfig, DICE_ID};
pub use greedy::{
    generate_greedy2step, generate_greedy2step_traced, Greedy2StepTrace, CFNOW_ID, MOVE_FRACTIONS, SHRINK_STEPS,
};
pub use llm::{generate_llm, LLM_ID};
pub use mock::{generate_mock, NunCompleter, MOCK_ID};
pub use nice::{generate_nice, NICE_ID};
pub use nun::NunIndex;
pub use parse::{extract_json_object, parse_and_repair, ParseFailure, Repaired};
pub use prompt::{render_prompt, select_exemplars, Exemplar, PromptMode, PromptSpec, TEMPLATE_ID};

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("desired label {desired} equals the model's current prediction")]
    DesiredEqualsPrediction { desired: Label },
    #[error("no training instance is predicted as the desired class")]
    NoUnlikeNeighbor,
    #[error("no mutable edit flips the prediction")]
    FlipUnreachable(Box<CounterfactualResult>),
    #[error("budget exhausted after {} attempts", .0.attempts)]
    BudgetExhausted(Box<CounterfactualResult>),
    #[error("llm transport failed: {0}")]
    Llm(#[from] LlmError),
}

impl GeneratorError {
    /// The invalid candidate carried by search failures.
    pub fn into_candidate(self) -> Result<CounterfactualResult, GeneratorError> {
        match self {
            GeneratorError::FlipUnreachable(r) | GeneratorError::BudgetExhausted(r) => Ok(*r),
            other => Err(other),
        }
    }
}

/// One counterfactual query against a model.
#[derive(Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub factual: &'a Sample,
    pub desired_label: Label,
    pub schema: &'a FeatureSchema,
    pub model: &'a dyn BinaryModel,
    /// Max classifier evaluations, or LLM attempts for the prompted generator.
    pub budget: usize,
}

impl<'a> GenerationRequest<'a> {
    pub fn new(
        factual: &'a Sample,
        desired_label: Label,
        schema: &'a FeatureSchema,
        model: &'a dyn BinaryModel,
        budget: usize,
    ) -> Result<Self, GeneratorError> {
        if model.predict(&factual.values).label == desired_label {
            return Err(GeneratorError::DesiredEqualsPrediction { desired: desired_label });
        }
        Ok(Self {
            factual,
            desired_label,
            schema,
            model,
            budget,
        })
    }

    /// Request for the opposite of the model's current prediction.
    pub fn flip(factual: &'a Sample, schema: &'a FeatureSchema, model: &'a dyn BinaryModel, budget: usize) -> Self {
        let desired_label = 1 - model.predict(&factual.values).label;
        Self {
            factual,
            desired_label,
            schema,
            model,
            budget,
        }
    }

    /// Probability of the desired class from a P(class 1).
    pub(crate) fn desired_prob(&self, p1: f64) -> f64 {
        if self.desired_label == 1 {
            p1
        } else {
            1.0 - p1
        }
    }

    pub(crate) fn is_desired(&self, p1: f64) -> bool {
        Label::from(p1 >= 0.5) == self.desired_label
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub factual: Sample,
    pub cf_values: Vec<f64>,
    pub desired_label: Label,
    pub generator_id: String,
    /// Whether the model predicts `desired_label` for `cf_values`.
    pub valid: bool,
    pub changed_features: Vec<String>,
    pub attempts: usize,
    pub model_calls: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub repairs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_llm_text: Option<String>,
}

impl CounterfactualResult {
    pub fn new(
        req: &GenerationRequest<'_>,
        generator_id: &str,
        cf_values: Vec<f64>,
        valid: bool,
        attempts: usize,
        model_calls: usize,
    ) -> Self {
        let changed_features = cfmetrics::changed_indices(&req.factual.values, &cf_values)
            .into_iter()
            .map(|i| req.schema.feature(i).name.clone())
            .collect();
        Self {
            factual: req.factual.clone(),
            cf_values,
            desired_label: req.desired_label,
            generator_id: generator_id.to_owned(),
            valid,
            changed_features,
            attempts,
            model_calls,
            repairs: Vec::new(),
            raw_llm_text: None,
        }
    }

    pub fn sparsity(&self) -> usize {
        self.changed_features.len()
    }
}

/// Model wrapper that counts evaluations and refuses calls past the budget.
pub(crate) struct Budgeted<'a> {
    model: &'a dyn BinaryModel,
    budget: usize,
    calls: Cell<usize>,
}

impl<'a> Budgeted<'a> {
    pub(crate) fn new(req: &GenerationRequest<'a>) -> Self {
        Self {
            model: req.model,
            budget: req.budget,
            calls: Cell::new(0),
        }
    }

    /// P(class 1), or `None` once the budget is spent.
    pub(crate) fn prob(&self, values: &[f64]) -> Option<f64> {
        if self.calls.get() >= self.budget {
            return None;
        }
        self.calls.set(self.calls.get() + 1);
        Some(self.model.probability(values))
    }

    pub(crate) fn calls(&self) -> usize {
        self.calls.get()
    }
}

/// Generator selection for batch runs and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Llm,
    Nice,
    Cfnow,
    Dice,
    Mock,
}

impl GeneratorKind {
    pub fn id(self) -> &'static str {
        match self {
            GeneratorKind::Llm => "llm",
            GeneratorKind::Nice => "nice",
            GeneratorKind::Cfnow => "cfnow",
            GeneratorKind::Dice => "dice",
            GeneratorKind::Mock => "mock",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "llm" => Some(Self::Llm),
            "nice" => Some(Self::Nice),
            "cfnow" | "greedy2step" => Some(Self::Cfnow),
            "dice" | "diverse" => Some(Self::Dice),
            "mock" => Some(Self::Mock),
            _ => None,
        }
    }
}

/// Shared context for running any generator over many requests.
pub struct GeneratorSuite<'a> {
    pub kind: GeneratorKind,
    pub train: &'a NunIndex,
    pub budget: usize,
    pub diverse: DiverseConfig,
    pub prompt: PromptSpec,
    pub completer: Option<&'a dyn crate::llmclient::Completer>,
    pub seed: u64,
}

impl<'a> GeneratorSuite<'a> {
    /// Runs the configured generator for one factual, returning every
    /// candidate (invalid ones included). DiCE yields `diverse.k` results.
    pub fn generate(
        &self,
        factual: &Sample,
        desired: Label,
        schema: &FeatureSchema,
        model: &dyn BinaryModel,
    ) -> Result<Vec<CounterfactualResult>, GeneratorError> {
        let req = GenerationRequest::new(factual, desired, schema, model, self.budget)?;
        let one = |r: Result<CounterfactualResult, GeneratorError>| {
            r.or_else(GeneratorError::into_candidate).map(|c| vec![c])
        };
        match self.kind {
            GeneratorKind::Mock => one(generate_mock(&req, self.train)),
            GeneratorKind::Nice => one(generate_nice(&req, self.train)),
            GeneratorKind::Cfnow => one(generate_greedy2step(&req)),
            GeneratorKind::Dice => {
                let seed = self.seed ^ crate::util::hash_sample(factual);
                Ok(generate_diverse(&req, &self.diverse, seed))
            }
            GeneratorKind::Llm => {
                let completer = self
                    .completer
                    .ok_or_else(|| GeneratorError::Llm(LlmError::Config("no LLM endpoint configured".into())))?;
                let spec = match self.prompt.mode {
                    PromptMode::FewShot(k) if self.prompt.exemplars.is_empty() => {
                        PromptSpec::few_shot(select_exemplars(&req, self.train, k))
                    }
                    _ => self.prompt.clone(),
                };
                one(generate_llm(&req, &spec, completer))
            }
        }
    }
}

#[cfg(test)]
mod tests;
