//! NICE-style search: greedily copy single features from the nearest unlike
//! neighbour, always taking the substitution that most raises the
//! desired-class probability.

use super::{Budgeted, CounterfactualResult, GenerationRequest, GeneratorError, NunIndex};

pub const NICE_ID: &str = "nice";

pub fn generate_nice(req: &GenerationRequest<'_>, train: &NunIndex) -> Result<CounterfactualResult, GeneratorError> {
    let nun = train
        .nearest(&req.factual.values, req.desired_label)
        .ok_or(GeneratorError::NoUnlikeNeighbor)?;
    let model = Budgeted::new(req);
    let mut current = req.factual.values.clone();
    let mut remaining: Vec<usize> = req
        .schema
        .mutable_indices()
        .into_iter()
        .filter(|&i| current[i] != nun.values[i])
        .collect();
    let mut steps = 0;

    while !remaining.is_empty() {
        steps += 1;
        let mut best: Option<(usize, f64, f64)> = None;
        for (slot, &i) in remaining.iter().enumerate() {
            let mut trial = current.clone();
            trial[i] = nun.values[i];
            let Some(p1) = model.prob(&trial) else {
                let result = CounterfactualResult::new(req, NICE_ID, current, false, steps, model.calls());
                return Err(GeneratorError::BudgetExhausted(Box::new(result)));
            };
            let score = req.desired_prob(p1);
            if best.is_none_or(|(_, s, _)| score > s) {
                best = Some((slot, score, p1));
            }
        }
        let (slot, _, p1) = best.expect("remaining is non-empty");
        let i = remaining.remove(slot);
        current[i] = nun.values[i];
        if req.is_desired(p1) {
            return Ok(CounterfactualResult::new(
                req,
                NICE_ID,
                current,
                true,
                steps,
                model.calls(),
            ));
        }
    }
    let result = CounterfactualResult::new(req, NICE_ID, current, false, steps, model.calls());
    Err(GeneratorError::FlipUnreachable(Box::new(result)))
}
