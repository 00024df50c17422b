//! DiCE-style model-agnostic genetic search for a diverse set of
//! counterfactuals.
//!
//! Individuals are full feature vectors that differ from the factual only on
//! mutable features. Fitness rewards validity, penalizes distance to the
//! factual, and rewards distance to the nearest other individual.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Budgeted, CounterfactualResult, GenerationRequest};
use crate::cfmetrics::distance;
use crate::schema::FeatureSchema;

pub const DICE_ID: &str = "dice";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiverseConfig {
    pub k: usize,
    pub population: usize,
    pub generations: usize,
    /// λ₁: weight of the distance-to-factual penalty.
    pub proximity_weight: f64,
    /// λ₂: weight of the nearest-neighbour diversity reward.
    pub diversity_weight: f64,
    pub init_change_prob: f64,
    pub mutation_rate: f64,
    pub elites: usize,
}

impl Default for DiverseConfig {
    fn default() -> Self {
        Self {
            k: 4,
            population: 50,
            generations: 40,
            proximity_weight: 0.5,
            diversity_weight: 0.2,
            init_change_prob: 0.5,
            mutation_rate: 0.2,
            elites: 2,
        }
    }
}

#[derive(Debug, Clone)]
struct Individual {
    values: Vec<f64>,
    p1: f64,
    valid: bool,
    dist: f64,
}

fn key(values: &[f64]) -> Vec<u64> {
    values.iter().map(|v| v.to_bits()).collect()
}

struct Search<'r, 'a> {
    req: &'r GenerationRequest<'a>,
    cfg: &'r DiverseConfig,
    mutable: Vec<usize>,
    model: Budgeted<'a>,
    rng: ChaCha8Rng,
    cache: HashMap<Vec<u64>, f64>,
    /// Every distinct evaluated vector, in first-seen order.
    archive: Vec<Individual>,
}

impl Search<'_, '_> {
    fn schema(&self) -> &FeatureSchema {
        self.req.schema
    }

    fn random_value(&mut self, i: usize) -> f64 {
        let spec = self.req.schema.feature(i);
        let factual = self.req.factual.values[i];
        if spec.is_categorical() {
            let codes = spec
                .allowed_codes()
                .unwrap_or_else(|| (0..spec.categories().len()).collect());
            codes[self.rng.random_range(0..codes.len())] as f64
        } else if let Some((lo, hi)) = spec.range() {
            if hi > lo {
                self.rng.random_range(lo..=hi)
            } else {
                lo
            }
        } else {
            factual + self.rng.random_range(-0.5..0.5) * spec.range_width()
        }
    }

    fn nudge(&mut self, i: usize, current: f64) -> f64 {
        let spec = self.req.schema.feature(i);
        if spec.is_categorical() {
            return self.random_value(i);
        }
        let step = Normal::new(0.0, 0.1 * spec.range_width()).expect("finite sd");
        let v = current + step.sample(&mut self.rng);
        match spec.range() {
            Some((lo, hi)) => v.clamp(lo, hi),
            None => v,
        }
    }

    fn evaluate(&mut self, values: Vec<f64>) -> Option<Individual> {
        let k = key(&values);
        let p1 = match self.cache.get(&k) {
            Some(&p) => p,
            None => {
                let p = self.model.prob(&values)?;
                self.cache.insert(k, p);
                let ind = Individual {
                    dist: distance(&self.req.factual.values, &values, self.schema()),
                    valid: self.req.is_desired(p),
                    values: values.clone(),
                    p1: p,
                };
                self.archive.push(ind);
                p
            }
        };
        Some(Individual {
            dist: distance(&self.req.factual.values, &values, self.schema()),
            valid: self.req.is_desired(p1),
            values,
            p1,
        })
    }

    fn random_individual(&mut self) -> Vec<f64> {
        let mut values = self.req.factual.values.clone();
        let mutable = self.mutable.clone();
        let forced = mutable[self.rng.random_range(0..mutable.len())];
        for i in mutable {
            if i == forced || self.rng.random_bool(self.cfg.init_change_prob) {
                values[i] = self.random_value(i);
            }
        }
        values
    }

    fn fitness(&self, pop: &[Individual]) -> Vec<f64> {
        let cfg = self.cfg;
        pop.iter()
            .enumerate()
            .map(|(i, a)| {
                let spread = pop
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, b)| distance(&a.values, &b.values, self.schema()))
                    .fold(f64::INFINITY, f64::min);
                let spread = if spread.is_finite() { spread } else { 0.0 };
                f64::from(u8::from(a.valid)) - cfg.proximity_weight * a.dist + cfg.diversity_weight * spread
            })
            .collect()
    }

    fn tournament(&mut self, fitness: &[f64]) -> usize {
        let a = self.rng.random_range(0..fitness.len());
        let b = self.rng.random_range(0..fitness.len());
        if fitness[b] > fitness[a] || (fitness[b] == fitness[a] && b < a) {
            b
        } else {
            a
        }
    }

    fn offspring(&mut self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut child = a.to_vec();
        for i in self.mutable.clone() {
            if self.rng.random_bool(0.5) {
                child[i] = b[i];
            }
            if self.rng.random_bool(self.cfg.mutation_rate) {
                child[i] = if self.rng.random_bool(1.0 / 3.0) {
                    self.req.factual.values[i]
                } else {
                    self.nudge(i, child[i])
                };
            }
        }
        child
    }

    fn run(&mut self) -> usize {
        let mut pop = Vec::with_capacity(self.cfg.population);
        while pop.len() < self.cfg.population {
            let values = self.random_individual();
            match self.evaluate(values) {
                Some(ind) => pop.push(ind),
                None => return 0,
            }
        }
        let mut generations = 0;
        'outer: for _ in 0..self.cfg.generations {
            let fitness = self.fitness(&pop);
            let mut order: Vec<usize> = (0..pop.len()).collect();
            order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
            let mut next: Vec<Individual> = order.iter().take(self.cfg.elites).map(|&i| pop[i].clone()).collect();
            while next.len() < self.cfg.population {
                let (pa, pb) = (self.tournament(&fitness), self.tournament(&fitness));
                let child = self.offspring(&pop[pa].values, &pop[pb].values);
                match self.evaluate(child) {
                    Some(ind) => next.push(ind),
                    None => break 'outer,
                }
            }
            pop = next;
            generations += 1;
        }
        generations
    }

    /// Greedy pick of `k` valid archive members maximizing
    /// `1 − λ₁·dist + λ₂·(distance to nearest already-picked)`.
    fn select(&self) -> Vec<&Individual> {
        let cfg = self.cfg;
        let valid: Vec<&Individual> = self.archive.iter().filter(|a| a.valid).collect();
        let mut picked: Vec<&Individual> = Vec::new();
        let mut used = vec![false; valid.len()];
        while picked.len() < cfg.k {
            let mut best: Option<(usize, f64)> = None;
            for (i, cand) in valid.iter().enumerate() {
                if used[i] {
                    continue;
                }
                let spread = picked
                    .iter()
                    .map(|p| distance(&cand.values, &p.values, self.schema()))
                    .fold(f64::INFINITY, f64::min);
                let spread = if spread.is_finite() { spread } else { 0.0 };
                let score = 1.0 - cfg.proximity_weight * cand.dist + cfg.diversity_weight * spread;
                if best.is_none_or(|(_, s)| score > s) {
                    best = Some((i, score));
                }
            }
            let Some((i, _)) = best else { break };
            used[i] = true;
            picked.push(valid[i]);
        }
        picked
    }
}

/// Returns exactly `cfg.k` results: the selected valid individuals, padded
/// with the invalid individuals closest to flipping when too few are valid.
pub fn generate_diverse(req: &GenerationRequest<'_>, cfg: &DiverseConfig, seed: u64) -> Vec<CounterfactualResult> {
    let k = cfg.k.max(1);
    let cfg = &DiverseConfig { k, ..cfg.clone() };
    let mutable = req.schema.mutable_indices();
    if mutable.is_empty() {
        return (0..k)
            .map(|_| CounterfactualResult::new(req, DICE_ID, req.factual.values.clone(), false, 0, 0))
            .collect();
    }
    let mut search = Search {
        req,
        cfg,
        mutable,
        model: Budgeted::new(req),
        rng: ChaCha8Rng::seed_from_u64(seed),
        cache: HashMap::new(),
        archive: Vec::new(),
    };
    let generations = search.run();
    let calls = search.model.calls();
    let mut chosen: Vec<(Vec<f64>, bool)> = search.select().into_iter().map(|i| (i.values.clone(), true)).collect();
    if chosen.len() < k {
        let mut invalid: Vec<&Individual> = search.archive.iter().filter(|a| !a.valid).collect();
        invalid.sort_by(|a, b| req.desired_prob(b.p1).total_cmp(&req.desired_prob(a.p1)));
        chosen.extend(
            invalid
                .into_iter()
                .take(k - chosen.len())
                .map(|i| (i.values.clone(), false)),
        );
    }
    while chosen.len() < k {
        chosen.push((req.factual.values.clone(), false));
    }
    chosen
        .into_iter()
        .map(|(values, valid)| CounterfactualResult::new(req, DICE_ID, values, valid, generations, calls))
        .collect()
}
