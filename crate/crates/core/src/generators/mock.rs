//! Offline test double: copy every mutable feature from the nearest unlike
//! neighbour.

use crate::llmclient::{Completer, LlmError};
use crate::schema::Label;

use super::{Budgeted, CounterfactualResult, GenerationRequest, GeneratorError, NunIndex};

pub const MOCK_ID: &str = "mock";

pub fn generate_mock(req: &GenerationRequest<'_>, train: &NunIndex) -> Result<CounterfactualResult, GeneratorError> {
    let nun = train
        .nearest(&req.factual.values, req.desired_label)
        .ok_or(GeneratorError::NoUnlikeNeighbor)?;
    let mut cf = req.factual.values.clone();
    for i in req.schema.mutable_indices() {
        cf[i] = nun.values[i];
    }
    let model = Budgeted::new(req);
    let valid = model.prob(&cf).is_some_and(|p| req.is_desired(p));
    Ok(CounterfactualResult::new(req, MOCK_ID, cf, valid, 1, model.calls()))
}

/// Offline stand-in for an LLM endpoint. Reads the factual and the target
/// class back out of a rendered prompt and answers with the NUN copy of the
/// mutable features, in the reply format the parser expects.
pub struct NunCompleter<'a> {
    pub train: &'a NunIndex,
}

impl NunCompleter<'_> {
    fn reply(&self, prompt: &str) -> Option<String> {
        let schema = &self.train.data.schema;
        let task = prompt
            .lines()
            .find(|l| l.starts_with("Task: change the prediction from"))?;
        let desired: Label = task.split(" to ").nth(1)?.trim_start().chars().next()?.to_digit(10)? as Label;
        let mut values = vec![0.0; schema.dim()];
        for line in prompt.lines().filter(|l| l.starts_with("| ")) {
            let cells: Vec<&str> = line.trim_matches('|').split('|').map(str::trim).collect();
            let Some(i) = cells.first().and_then(|n| schema.index_of(n)) else {
                continue;
            };
            let spec = schema.feature(i);
            values[i] = if spec.is_categorical() {
                spec.code_of(cells.get(1)?)? as f64
            } else {
                cells.get(1)?.parse().ok()?
            };
        }
        let nun = self.train.nearest(&values, desired)?;
        let mut out = serde_json::Map::new();
        for i in schema.mutable_indices() {
            if nun.values[i] != values[i] {
                let v = if schema.feature(i).is_categorical() {
                    serde_json::Value::String(schema.format_value(i, nun.values[i]))
                } else {
                    serde_json::json!(nun.values[i])
                };
                out.insert(schema.feature(i).name.clone(), v);
            }
        }
        Some(serde_json::Value::Object(out).to_string())
    }
}

impl Completer for NunCompleter<'_> {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        Ok(self.reply(prompt).unwrap_or_else(|| "no answer".to_owned()))
    }
}
