//! Prompted generation through any [`Completer`].

use super::{parse_and_repair, render_prompt, CounterfactualResult, GenerationRequest, GeneratorError, PromptSpec};
use crate::llmclient::Completer;

pub const LLM_ID: &str = "llm";

/// Render, complete, parse and check, up to `req.budget` attempts. Each
/// retry appends the reason the previous reply was rejected, so retries are
/// distinct cache keys. Transport errors abort immediately.
pub fn generate_llm(
    req: &GenerationRequest<'_>,
    spec: &PromptSpec,
    completer: &dyn Completer,
) -> Result<CounterfactualResult, GeneratorError> {
    let base = render_prompt(req, spec);
    let mut feedback = String::new();
    let mut calls = 0;
    let mut last: Option<CounterfactualResult> = None;
    for attempt in 1..=req.budget {
        let prompt = format!("{base}{feedback}");
        let text = completer.complete(&prompt)?;
        match parse_and_repair(&text, req) {
            Err(e) => {
                let mut r = CounterfactualResult::new(req, LLM_ID, req.factual.values.clone(), false, attempt, calls);
                r.raw_llm_text = Some(text);
                last = Some(r);
                feedback = format!(
                    "\nAttempt {attempt} was rejected ({}). Reply again following the output format.\n",
                    e.0
                );
            }
            Ok(rep) => {
                calls += 1;
                let valid = req.is_desired(req.model.probability(&rep.values));
                let mut r = CounterfactualResult::new(req, LLM_ID, rep.values, valid, attempt, calls);
                r.repairs = rep.repairs;
                r.raw_llm_text = Some(text);
                if valid {
                    return Ok(r);
                }
                last = Some(r);
                feedback = format!(
                    "\nAttempt {attempt} did not change the prediction. Propose larger or different changes.\n"
                );
            }
        }
    }
    let last = last.unwrap_or_else(|| CounterfactualResult::new(req, LLM_ID, req.factual.values.clone(), false, 0, 0));
    Err(GeneratorError::BudgetExhausted(Box::new(last)))
}
