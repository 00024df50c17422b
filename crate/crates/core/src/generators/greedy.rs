//! CFNOW-style two-step search.
//!
//! Step 1 walks a fixed grid of coordinate moves, always applying the move
//! with the largest desired-class probability, until the prediction flips.
//! Step 2 pulls each changed feature back toward the factual: a full revert
//! when that keeps the flip, otherwise a bisection on continuous features.

use super::{Budgeted, CounterfactualResult, GenerationRequest, GeneratorError};
use crate::cfmetrics::{changed_indices, distance};
use crate::schema::FeatureSchema;

pub const CFNOW_ID: &str = "cfnow";
/// Continuous move sizes as fractions of the training range.
pub const MOVE_FRACTIONS: [f64; 3] = [0.10, 0.25, 0.50];
/// Bisection iterations per continuous feature in the shrink step.
pub const SHRINK_STEPS: usize = 8;

/// Distance to the factual after step 1 and after every shrink iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Greedy2StepTrace {
    pub shrink_distances: Vec<f64>,
}

impl Greedy2StepTrace {
    pub fn is_monotone(&self) -> bool {
        self.shrink_distances.windows(2).all(|w| w[1] <= w[0])
    }
}

fn candidate_moves(schema: &FeatureSchema, current: &[f64], mutable: &[usize]) -> Vec<(usize, f64)> {
    let mut moves = Vec::new();
    for &i in mutable {
        let spec = schema.feature(i);
        if spec.is_categorical() {
            let codes = spec
                .allowed_codes()
                .unwrap_or_else(|| (0..spec.categories().len()).collect());
            moves.extend(
                codes
                    .into_iter()
                    .map(|c| c as f64)
                    .filter(|&c| c != current[i])
                    .map(|c| (i, c)),
            );
        } else {
            let width = spec.range_width();
            let mut seen: Vec<f64> = Vec::new();
            for frac in MOVE_FRACTIONS {
                for sign in [1.0, -1.0] {
                    let mut v = current[i] + sign * frac * width;
                    if let Some((lo, hi)) = spec.range() {
                        v = v.clamp(lo, hi);
                    }
                    if v != current[i] && !seen.contains(&v) {
                        seen.push(v);
                        moves.push((i, v));
                    }
                }
            }
        }
    }
    moves
}

pub fn generate_greedy2step(req: &GenerationRequest<'_>) -> Result<CounterfactualResult, GeneratorError> {
    generate_greedy2step_traced(req).0
}

pub fn generate_greedy2step_traced(
    req: &GenerationRequest<'_>,
) -> (Result<CounterfactualResult, GeneratorError>, Greedy2StepTrace) {
    let mut trace = Greedy2StepTrace::default();
    let model = Budgeted::new(req);
    let factual = &req.factual.values;
    let mutable = req.schema.mutable_indices();
    let mut current = factual.clone();
    let fail = |values: Vec<f64>, steps: usize, calls: usize, exhausted: bool| {
        let r = Box::new(CounterfactualResult::new(req, CFNOW_ID, values, false, steps, calls));
        if exhausted {
            GeneratorError::BudgetExhausted(r)
        } else {
            GeneratorError::FlipUnreachable(r)
        }
    };
    if mutable.is_empty() {
        return (Err(fail(current, 0, 0, false)), trace);
    }
    let Some(mut p_current) = model.prob(&current) else {
        return (Err(fail(current, 0, model.calls(), true)), trace);
    };

    // Step 1: find.
    let mut steps = 0;
    while !req.is_desired(p_current) {
        steps += 1;
        let moves = candidate_moves(req.schema, &current, &mutable);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut exhausted = false;
        for (i, v) in moves {
            let mut trial = current.clone();
            trial[i] = v;
            let Some(p) = model.prob(&trial) else {
                exhausted = true;
                break;
            };
            if best.is_none_or(|(_, _, bp)| req.desired_prob(p) > req.desired_prob(bp)) {
                best = Some((i, v, p));
            }
        }
        match best {
            Some((i, v, p)) if req.desired_prob(p) > req.desired_prob(p_current) || req.is_desired(p) => {
                current[i] = v;
                p_current = p;
            }
            _ => return (Err(fail(current, steps, model.calls(), exhausted)), trace),
        }
        if exhausted && !req.is_desired(p_current) {
            return (Err(fail(current, steps, model.calls(), true)), trace);
        }
    }

    // Step 2: shrink.
    trace.shrink_distances.push(distance(factual, &current, req.schema));
    'shrink: for i in changed_indices(factual, &current) {
        let mut trial = current.clone();
        trial[i] = factual[i];
        match model.prob(&trial) {
            None => break 'shrink,
            Some(p) if req.is_desired(p) => {
                current = trial;
                trace.shrink_distances.push(distance(factual, &current, req.schema));
                continue;
            }
            Some(_) => trace.shrink_distances.push(distance(factual, &current, req.schema)),
        }
        if req.schema.feature(i).is_categorical() {
            continue;
        }
        let (mut invalid_side, mut valid_side) = (factual[i], current[i]);
        for _ in 0..SHRINK_STEPS {
            let mid = (invalid_side + valid_side) / 2.0;
            trial = current.clone();
            trial[i] = mid;
            let Some(p) = model.prob(&trial) else {
                break 'shrink;
            };
            if req.is_desired(p) {
                valid_side = mid;
                current[i] = mid;
            } else {
                invalid_side = mid;
            }
            trace.shrink_distances.push(distance(factual, &current, req.schema));
        }
    }
    let result = CounterfactualResult::new(req, CFNOW_ID, current, true, steps, model.calls());
    (Ok(result), trace)
}
