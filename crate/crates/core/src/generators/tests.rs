use std::sync::atomic::{AtomicUsize, Ordering};

use super::*;
use crate::cfmetrics::distance;
use crate::llmclient::FnCompleter;
use crate::model::BinaryModel;
use crate::schema::{Dataset, DatasetRole, FeatureSchema, FeatureSpec, Sample};
use crate::synth::{wearable_like, xor_dataset};

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// P(1) = σ(10·(x₀ − 0.5)).
struct Linear;
impl BinaryModel for Linear {
    fn probability(&self, v: &[f64]) -> f64 {
        sigmoid(10.0 * (v[0] - 0.5))
    }
}

/// Flips when either coordinate exceeds 0.8.
struct TwoPocket;
impl BinaryModel for TwoPocket {
    fn probability(&self, v: &[f64]) -> f64 {
        if v[0] > 0.8 || v[1] > 0.8 {
            0.9
        } else {
            0.1
        }
    }
}

struct Xor;
impl BinaryModel for Xor {
    fn probability(&self, v: &[f64]) -> f64 {
        if (v[0] > 0.0) != (v[1] > 0.0) {
            0.8
        } else {
            0.2
        }
    }
}

/// Stress-like rule over the wearable features.
struct Wearable;
impl BinaryModel for Wearable {
    fn probability(&self, v: &[f64]) -> f64 {
        sigmoid(0.4 * (v[0] - 8.0) - 0.3 * (v[2] - 19.0) + 0.03 * (v[5] - 130.0))
    }
}

struct Counting<'a, M>(&'a M, AtomicUsize);
impl<M: BinaryModel> BinaryModel for Counting<'_, M> {
    fn probability(&self, v: &[f64]) -> f64 {
        self.1.fetch_add(1, Ordering::Relaxed);
        self.0.probability(v)
    }
}

fn unit_square(mutable: [bool; 2]) -> FeatureSchema {
    FeatureSchema::new(vec![
        FeatureSpec::continuous_with_range("x1", 0.0, 1.0, mutable[0]),
        FeatureSpec::continuous_with_range("x2", 0.0, 1.0, mutable[1]),
    ])
    .unwrap()
}

fn sample(values: Vec<f64>) -> Sample {
    Sample::new("q", 0, values, 0)
}

fn check_invariants(r: &CounterfactualResult, schema: &FeatureSchema, model: &dyn BinaryModel) {
    for i in schema.immutable_indices() {
        assert_eq!(
            r.cf_values[i].to_bits(),
            r.factual.values[i].to_bits(),
            "{} changed",
            schema.feature(i).name
        );
    }
    assert_eq!(r.valid, model.predict(&r.cf_values).label == r.desired_label);
    let expect: Vec<String> = crate::cfmetrics::changed_indices(&r.factual.values, &r.cf_values)
        .into_iter()
        .map(|i| schema.feature(i).name.clone())
        .collect();
    assert_eq!(r.changed_features, expect);
}

#[test]
fn request_rejects_current_class() {
    let s = unit_square([true, true]);
    let f = sample(vec![0.2, 0.5]);
    assert!(matches!(
        GenerationRequest::new(&f, 0, &s, &Linear, 10),
        Err(GeneratorError::DesiredEqualsPrediction { desired: 0 })
    ));
}

#[test]
fn greedy_linear_toy_lands_just_past_boundary() {
    let s = unit_square([true, true]);
    let f = sample(vec![0.2, 0.5]);
    let req = GenerationRequest::new(&f, 1, &s, &Linear, 200).unwrap();
    let (r, trace) = generate_greedy2step_traced(&req);
    let r = r.unwrap();
    assert!(r.valid);
    assert_eq!(r.changed_features, vec!["x1"]);
    let x1 = r.cf_values[0];
    assert!(x1 > 0.5 && x1 <= 0.5 + 0.5 * 2f64.powi(-8), "{x1}");
    assert!(trace.is_monotone(), "{:?}", trace.shrink_distances);
    assert_eq!(trace.shrink_distances.len(), 2 + SHRINK_STEPS);
}

#[test]
fn greedy_boundary_adjacent_needs_one_feature() {
    let s = unit_square([true, true]);
    let f = sample(vec![0.45, 0.3]);
    let req = GenerationRequest::new(&f, 1, &s, &Linear, 200).unwrap();
    let r = generate_greedy2step(&req).unwrap();
    assert_eq!(r.sparsity(), 1);
}

#[test]
fn greedy_all_immutable_is_unreachable() {
    let s = unit_square([false, false]);
    let f = sample(vec![0.2, 0.5]);
    let req = GenerationRequest::new(&f, 1, &s, &Linear, 200).unwrap();
    match generate_greedy2step(&req) {
        Err(GeneratorError::FlipUnreachable(r)) => assert!(!r.valid && r.changed_features.is_empty()),
        other => panic!("{other:?}"),
    }
}

#[test]
fn greedy_shrink_is_monotone_on_wearable_data() {
    let data = wearable_like(200, 5);
    let mut checked = 0;
    for f in data.samples.iter().take(60) {
        let req = GenerationRequest::flip(f, &data.schema, &Wearable, 500);
        let (r, trace) = generate_greedy2step_traced(&req);
        if let Ok(r) = r {
            check_invariants(&r, &data.schema, &Wearable);
            assert!(r.valid);
            assert!(trace.is_monotone());
            checked += 1;
        }
    }
    assert!(checked > 40, "{checked}");
}

fn grid_train(model: &dyn BinaryModel) -> NunIndex {
    let data = xor_dataset(50, 4);
    NunIndex::new(&data, model)
}

#[test]
fn nice_reaches_flip_when_unlike_neighbour_exists() {
    let train = grid_train(&Xor);
    let schema = &train.data.schema;
    let (mut eligible, mut flipped) = (0, 0);
    for f in &train.data.samples {
        let req = GenerationRequest::flip(f, schema, &Xor, 100);
        let Some(nun) = train.nearest(&f.values, req.desired_label) else {
            continue;
        };
        eligible += 1;
        // Brute force over every substitution subset on d = 2.
        let reachable = (1..4u8).any(|mask| {
            let mut v = f.values.clone();
            (0..2).filter(|b| mask >> b & 1 == 1).for_each(|b| v[b] = nun.values[b]);
            req.is_desired(Xor.probability(&v))
        });
        let r = generate_nice(&req, &train)
            .or_else(GeneratorError::into_candidate)
            .unwrap();
        check_invariants(&r, schema, &Xor);
        assert_eq!(r.valid, reachable);
        flipped += usize::from(r.valid);
    }
    assert!(eligible > 0);
    assert!(flipped as f64 >= 0.95 * eligible as f64, "{flipped}/{eligible}");
}

#[test]
fn nice_single_feature_difference() {
    let s = unit_square([true, true]);
    let train = Dataset::new(
        s.clone(),
        vec![Sample::new("t", 0, vec![0.9, 0.5], 1)],
        DatasetRole::Train,
    );
    let index = NunIndex::new(&train, &Linear);
    let f = sample(vec![0.2, 0.5]);
    let req = GenerationRequest::new(&f, 1, &s, &Linear, 10).unwrap();
    let r = generate_nice(&req, &index).unwrap();
    assert_eq!(r.cf_values, vec![0.9, 0.5]);
    assert_eq!(r.sparsity(), 1);
    assert!(r.valid);
}

#[test]
fn nice_immutable_only_difference_is_unreachable() {
    let s = unit_square([false, true]);
    let train = Dataset::new(
        s.clone(),
        vec![Sample::new("t", 0, vec![0.9, 0.5], 1)],
        DatasetRole::Train,
    );
    let index = NunIndex::new(&train, &Linear);
    let f = sample(vec![0.2, 0.5]);
    let req = GenerationRequest::new(&f, 1, &s, &Linear, 10).unwrap();
    assert!(matches!(
        generate_nice(&req, &index),
        Err(GeneratorError::FlipUnreachable(_))
    ));
}

#[test]
fn nun_ties_break_to_lower_index() {
    let s = unit_square([true, true]);
    let samples = vec![
        Sample::new("a", 0, vec![0.9, 0.6], 1),
        Sample::new("b", 0, vec![0.9, 0.4], 1),
    ];
    let index = NunIndex::new(&Dataset::new(s, samples, DatasetRole::Train), &Linear);
    assert_eq!(index.nearest(&[0.9, 0.5], 1).unwrap().patient_id, "a");
}

#[test]
fn mock_copies_nun_and_is_repeatable() {
    let data = wearable_like(200, 8);
    let train = NunIndex::new(&data, &Wearable);
    let f = &data.samples[3];
    let req = GenerationRequest::flip(f, &data.schema, &Wearable, 10);
    let a = generate_mock(&req, &train).unwrap();
    let b = generate_mock(&req, &train).unwrap();
    assert_eq!(a, b);
    check_invariants(&a, &data.schema, &Wearable);
    let empty = NunIndex::new(&data.with_samples(vec![], DatasetRole::Train), &Wearable);
    assert!(matches!(
        generate_mock(&req, &empty),
        Err(GeneratorError::NoUnlikeNeighbor)
    ));
}

#[test]
fn dice_k1_is_close_to_greedy() {
    let s = unit_square([true, true]);
    let f = sample(vec![0.2, 0.5]);
    let req = GenerationRequest::new(&f, 1, &s, &Linear, 5000).unwrap();
    let greedy = generate_greedy2step(&req).unwrap();
    let cfg = DiverseConfig {
        k: 1,
        ..DiverseConfig::default()
    };
    let dice = generate_diverse(&req, &cfg, 11);
    assert_eq!(dice.len(), 1);
    assert!(dice[0].valid);
    let (dg, dd) = (
        distance(&f.values, &greedy.cf_values, &s),
        distance(&f.values, &dice[0].cf_values, &s),
    );
    assert!(dd <= 2.0 * dg, "dice {dd} vs greedy {dg}");
}

#[test]
fn dice_finds_both_pockets() {
    let s = unit_square([true, true]);
    let f = sample(vec![0.2, 0.2]);
    let req = GenerationRequest::new(&f, 1, &s, &TwoPocket, 5000).unwrap();
    let out = generate_diverse(&req, &DiverseConfig::default(), 3);
    assert_eq!(out.len(), 4);
    let sets: std::collections::BTreeSet<Vec<String>> = out
        .iter()
        .filter(|r| r.valid)
        .map(|r| r.changed_features.clone())
        .collect();
    assert!(sets.len() >= 2, "{sets:?}");
    for r in &out {
        check_invariants(r, &s, &TwoPocket);
    }
}

#[test]
fn dice_is_seeded() {
    let data = wearable_like(100, 2);
    let f = &data.samples[0];
    let req = GenerationRequest::flip(f, &data.schema, &Wearable, 2000);
    let cfg = DiverseConfig::default();
    assert_eq!(generate_diverse(&req, &cfg, 9), generate_diverse(&req, &cfg, 9));
}

#[test]
fn dice_pads_with_invalid_when_unreachable() {
    let s = unit_square([false, true]);
    let f = sample(vec![0.2, 0.5]);
    let req = GenerationRequest::new(&f, 1, &s, &Linear, 5000).unwrap();
    let out = generate_diverse(&req, &DiverseConfig::default(), 1);
    assert_eq!(out.len(), 4);
    assert!(out.iter().all(|r| !r.valid && r.cf_values[0] == 0.2));
}

#[test]
fn every_generator_respects_budget() {
    let data = wearable_like(150, 3);
    let train = NunIndex::new(&data, &Wearable);
    for budget in [1, 5, 40] {
        for f in data.samples.iter().take(15) {
            let counted = Counting(&Wearable, AtomicUsize::new(0));
            let req = GenerationRequest::flip(f, &data.schema, &counted, budget);
            counted.1.store(0, Ordering::Relaxed);
            let mut results = Vec::new();
            results.push(generate_nice(&req, &train).or_else(GeneratorError::into_candidate));
            results.push(generate_greedy2step(&req).or_else(GeneratorError::into_candidate));
            results.extend(generate_diverse(&req, &DiverseConfig::default(), 1).into_iter().map(Ok));
            results.push(generate_mock(&req, &train).or_else(GeneratorError::into_candidate));
            let per_call: Vec<usize> = results
                .iter()
                .map(|r| r.as_ref().map_or(0, |r| r.model_calls))
                .collect();
            for (r, calls) in results.iter().zip(&per_call) {
                if let Ok(r) = r {
                    check_invariants(r, &data.schema, &Wearable);
                }
                assert!(*calls <= budget, "{calls} > {budget}");
            }
            // DiCE reports its total once per result; count it once.
            let k = DiverseConfig::default().k;
            let expected: usize = per_call.iter().take(2).sum::<usize>() + per_call[2] + per_call[2 + k];
            assert_eq!(counted.1.load(Ordering::Relaxed), expected);
        }
    }
}

#[test]
fn llm_with_nun_endpoint_is_valid_first_try() {
    let data = wearable_like(200, 6);
    let train = NunIndex::new(&data, &Wearable);
    let endpoint = NunCompleter { train: &train };
    let mut valid = 0;
    for f in data.samples.iter().take(20) {
        let req = GenerationRequest::flip(f, &data.schema, &Wearable, 3);
        let mock = generate_mock(&req, &train).unwrap();
        let r = generate_llm(&req, &PromptSpec::zero_shot(), &endpoint)
            .or_else(GeneratorError::into_candidate)
            .unwrap();
        check_invariants(&r, &data.schema, &Wearable);
        assert!(r.raw_llm_text.is_some());
        if mock.valid {
            assert!(r.valid);
            assert_eq!(r.attempts, 1);
            valid += 1;
        }
    }
    assert!(valid > 10);
}

#[test]
fn llm_retries_after_malformed_replies() {
    let s = unit_square([true, true]);
    let f = sample(vec![0.2, 0.5]);
    let req = GenerationRequest::new(&f, 1, &s, &Linear, 3).unwrap();
    let seen = AtomicUsize::new(0);
    let prompts = std::sync::Mutex::new(Vec::new());
    let endpoint = FnCompleter(|p: &str| {
        prompts.lock().unwrap().push(p.to_owned());
        Ok(match seen.fetch_add(1, Ordering::SeqCst) {
            0 => "sorry".to_owned(),
            1 => "{\"x1\": ".to_owned(),
            _ => "{\"x1\": 0.9}".to_owned(),
        })
    });
    let r = generate_llm(&req, &PromptSpec::zero_shot(), &endpoint).unwrap();
    assert!(r.valid);
    assert_eq!(r.attempts, 3);
    let prompts = prompts.into_inner().unwrap();
    assert_ne!(prompts[0], prompts[1]);
}

#[test]
fn llm_budget_one_invalid_is_recorded() {
    let s = unit_square([true, true]);
    let f = sample(vec![0.2, 0.5]);
    let req = GenerationRequest::new(&f, 1, &s, &Linear, 1).unwrap();
    let endpoint = FnCompleter(|_: &str| Ok("{\"x1\": 0.3, \"x2\": 0.1}".to_owned()));
    match generate_llm(&req, &PromptSpec::zero_shot(), &endpoint) {
        Err(GeneratorError::BudgetExhausted(r)) => {
            assert!(!r.valid);
            assert_eq!(r.cf_values, vec![0.3, 0.1]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn llm_transport_error_is_fatal() {
    let s = unit_square([true, true]);
    let f = sample(vec![0.2, 0.5]);
    let req = GenerationRequest::new(&f, 1, &s, &Linear, 3).unwrap();
    let endpoint = FnCompleter(|_: &str| Err(crate::llmclient::LlmError::CacheMiss));
    assert!(matches!(
        generate_llm(&req, &PromptSpec::zero_shot(), &endpoint),
        Err(GeneratorError::Llm(_))
    ));
}

#[test]
fn suite_dispatches_every_kind() {
    let data = wearable_like(120, 7);
    let train = NunIndex::new(&data, &Wearable);
    let endpoint = NunCompleter { train: &train };
    let f = &data.samples[1];
    let desired = 1 - Wearable.predict(&f.values).label;
    for kind in [
        GeneratorKind::Llm,
        GeneratorKind::Nice,
        GeneratorKind::Cfnow,
        GeneratorKind::Dice,
        GeneratorKind::Mock,
    ] {
        assert_eq!(GeneratorKind::parse(kind.id()), Some(kind));
        let suite = GeneratorSuite {
            kind,
            train: &train,
            budget: 300,
            diverse: DiverseConfig::default(),
            prompt: PromptSpec {
                mode: PromptMode::FewShot(2),
                ..PromptSpec::zero_shot()
            },
            completer: Some(&endpoint),
            seed: 5,
        };
        let out = suite.generate(f, desired, &data.schema, &Wearable).unwrap();
        assert_eq!(out.len(), if kind == GeneratorKind::Dice { 4 } else { 1 });
        assert!(out.iter().all(|r| r.generator_id == kind.id()));
    }
}
