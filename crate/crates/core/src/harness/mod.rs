//! Label-scarcity experiments: undersample a class, refill it with valid
//! counterfactuals, retrain, and compare against the full and reduced
//! training sets on a fixed test set.

mod config;
mod report;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfmetrics::{batch_report, diversity_profile, CFBatchReport, DiversityProfile, MetricsError};
use crate::generators::{
    CounterfactualResult, DiverseConfig, GeneratorError, GeneratorKind, GeneratorSuite, NunCompleter, NunIndex,
    PromptMode, PromptSpec,
};
use crate::llmclient::Completer;
use crate::model::{evaluate, train, BinaryModel, ClassificationReport, Hyperparams, ModelError};
use crate::schema::{Dataset, DatasetRole, Label, Sample};

pub use config::{ConfigError, ExperimentConfig, ExperimentSection, WindowSection};
pub use report::{format_delta, render_reports, sweep_csv, table5_csv, write_reports, ReportBundle, TABLE5_HEADER};

pub const DEFAULT_RATIOS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];
/// Sources handed to the generator per parallel batch while filling a pool.
const POOL_CHUNK: usize = 32;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("class {class} has {count} samples; at least 2 are needed to undersample")]
    ClassTooSmall { class: Label, count: usize },
    #[error("fraction {0} must lie in (0, 1]")]
    InvalidFraction(f64),
    #[error("no runs to report")]
    NoRuns,
    #[error("augmentation pool holds a CF the generating model does not map to its desired class")]
    InvalidPoolEntry,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioKind {
    /// Positive-class scarcity.
    A,
    /// Negative-class scarcity.
    B,
    /// Both classes.
    C,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [ScenarioKind::A, ScenarioKind::B, ScenarioKind::C];

    pub fn targets(self) -> &'static [Label] {
        match self {
            ScenarioKind::A => &[1],
            ScenarioKind::B => &[0],
            ScenarioKind::C => &[0, 1],
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Some(Self::A),
            "B" => Some(Self::B),
            "C" => Some(Self::C),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::A => "A",
            ScenarioKind::B => "B",
            ScenarioKind::C => "C",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScarcityScenario {
    pub kind: ScenarioKind,
    pub reduction_fraction: f64,
    pub seed: u64,
}

impl ScarcityScenario {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        Self {
            kind,
            reduction_fraction: 0.5,
            seed,
        }
    }
}

fn check_fraction(f: f64) -> Result<(), HarnessError> {
    if f > 0.0 && f <= 1.0 {
        Ok(())
    } else {
        Err(HarnessError::InvalidFraction(f))
    }
}

/// A training set with some samples of the targeted classes removed.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub dataset: Dataset,
    pub removed: [usize; 2],
}

/// Removes `⌊n_c · fraction⌋` seeded-uniform samples of each targeted class;
/// survivors keep their original order.
pub fn undersample(train: &Dataset, scenario: &ScarcityScenario) -> Result<Reduction, HarnessError> {
    let f = scenario.reduction_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(HarnessError::InvalidFraction(f));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut drop = vec![false; train.samples.len()];
    let mut removed = [0usize; 2];
    for &c in scenario.kind.targets() {
        let members: Vec<usize> = (0..train.samples.len())
            .filter(|&i| train.samples[i].label == c)
            .collect();
        if members.len() < 2 {
            return Err(HarnessError::ClassTooSmall {
                class: c,
                count: members.len(),
            });
        }
        let m = (members.len() as f64 * f).floor() as usize;
        for &i in members.choose_multiple(&mut rng, m) {
            drop[i] = true;
        }
        removed[usize::from(c)] = m;
    }
    let kept = train
        .samples
        .iter()
        .zip(&drop)
        .filter(|(_, &d)| !d)
        .map(|(s, _)| s.clone())
        .collect();
    Ok(Reduction {
        dataset: train.with_samples(kept, train.role),
        removed,
    })
}

#[derive(Debug, Clone)]
pub struct Augmentation {
    pub dataset: Dataset,
    pub added: [usize; 2],
    /// Requested minus available valid CFs, per class.
    pub shortfall: [usize; 2],
}

/// Number of CFs restored for `removed` samples at `ratio`.
pub fn restore_count(removed: usize, ratio: f64) -> usize {
    (removed as f64 * ratio + 1e-9).floor() as usize
}

/// Appends the first `⌊removed_c · ratio⌋` valid pool CFs of each
/// targeted class, labelled with their desired class.
pub fn augment(reduced: &Reduction, pool: &[CounterfactualResult], kind: ScenarioKind, ratio: f64) -> Augmentation {
    let mut samples = reduced.dataset.samples.clone();
    let (mut added, mut shortfall) = ([0usize; 2], [0usize; 2]);
    for &c in kind.targets() {
        let want = restore_count(reduced.removed[usize::from(c)], ratio);
        let picked: Vec<Sample> = pool
            .iter()
            .filter(|r| r.valid && r.desired_label == c)
            .take(want)
            .map(cf_sample)
            .collect();
        added[usize::from(c)] = picked.len();
        shortfall[usize::from(c)] = want - picked.len();
        samples.extend(picked);
    }
    Augmentation {
        dataset: reduced.dataset.with_samples(samples, DatasetRole::Augmented),
        added,
        shortfall,
    }
}

fn cf_sample(r: &CounterfactualResult) -> Sample {
    Sample::new(
        format!("cf:{}", r.factual.patient_id),
        r.factual.window_index,
        r.cf_values.clone(),
        r.desired_label,
    )
}

/// Where LLM completions come from during an experiment.
#[derive(Clone, Copy)]
pub enum LlmBackend<'a> {
    /// Offline NUN-copy stand-in built on each run's reduced training set.
    NunStub,
    Endpoint(&'a dyn Completer),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    pub budget: usize,
    /// `zero` or `few:K`.
    pub prompt: String,
    pub diverse: DiverseConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::Mock,
            budget: 200,
            prompt: "zero".to_owned(),
            diverse: DiverseConfig::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn prompt_spec(&self) -> Option<PromptSpec> {
        Some(PromptSpec {
            mode: PromptMode::parse(&self.prompt)?,
            ..PromptSpec::zero_shot()
        })
    }
}

/// Counterfactuals flipping reduced-train samples predicted as `1 − c` into
/// each targeted class `c`, stopping once `needed[c]` are valid. Sources are
/// visited in a seeded order; results keep that order.
pub fn generate_pool(
    reduced: &Dataset,
    model: &dyn BinaryModel,
    kind: ScenarioKind,
    needed: [usize; 2],
    generator: &GeneratorConfig,
    llm: LlmBackend<'_>,
    seed: u64,
) -> Result<Vec<CounterfactualResult>, HarnessError> {
    let index = NunIndex::new(reduced, model);
    let stub = NunCompleter { train: &index };
    let completer: &dyn Completer = match llm {
        LlmBackend::NunStub => &stub,
        LlmBackend::Endpoint(c) => c,
    };
    let suite = GeneratorSuite {
        kind: generator.kind,
        train: &index,
        budget: generator.budget,
        diverse: generator.diverse.clone(),
        prompt: generator.prompt_spec().unwrap_or_default(),
        completer: Some(completer),
        seed,
    };
    let mut pool = Vec::new();
    for &c in kind.targets() {
        let need = needed[usize::from(c)];
        if need == 0 {
            continue;
        }
        let mut sources: Vec<usize> = (0..index.len()).filter(|&i| index.predicted(i) == 1 - c).collect();
        sources.shuffle(&mut ChaCha8Rng::seed_from_u64(
            seed ^ (0x9e37_79b9 * (u64::from(c) + 1)),
        ));
        let mut valid = 0;
        for chunk in sources.chunks(POOL_CHUNK) {
            let batches: Vec<Vec<CounterfactualResult>> = chunk
                .par_iter()
                .map(
                    |&i| match suite.generate(&index.data.samples[i], c, &reduced.schema, model) {
                        Err(GeneratorError::NoUnlikeNeighbor) => Ok(Vec::new()),
                        other => other,
                    },
                )
                .collect::<Result<_, _>>()?;
            for r in batches.into_iter().flatten() {
                valid += usize::from(r.valid);
                pool.push(r);
            }
            if valid >= need {
                break;
            }
        }
    }
    Ok(pool)
}

/// Relative change `(new − old) / old × 100`; `None` when `old` is zero.
pub fn relative_delta(new: f64, old: f64) -> Option<f64> {
    (old != 0.0).then(|| (new - old) / old * 100.0)
}

/// Relative percentage changes per reported metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub acc: Option<f64>,
    pub pre: Option<f64>,
    pub rec: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
}

impl Deltas {
    pub fn between(new: &ClassificationReport, old: &ClassificationReport) -> Self {
        Self {
            acc: relative_delta(new.accuracy, old.accuracy),
            pre: relative_delta(new.precision, old.precision),
            rec: relative_delta(new.recall, old.recall),
            f1: relative_delta(new.f1, old.f1),
            auc: relative_delta(new.auc, old.auc),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationRun {
    pub scenario: ScarcityScenario,
    pub generator_id: String,
    pub ratio: f64,
    pub seed: u64,
    pub baseline_report: ClassificationReport,
    pub reduced_report: ClassificationReport,
    pub augmented_report: ClassificationReport,
    /// Reduced vs baseline.
    pub drop: Deltas,
    /// Augmented vs reduced.
    pub recovery: Deltas,
    pub removed: [usize; 2],
    pub added: [usize; 2],
    pub shortfall: [usize; 2],
    pub test_hash: String,
    /// Quality of the whole CF pool generated for this seed.
    pub cf_report: Option<CFBatchReport>,
    pub diversity: Option<DiversityProfile>,
}

/// Everything an experiment needs besides the data.
#[derive(Clone)]
pub struct Experiment<'a> {
    pub hyper: Hyperparams,
    pub generator: GeneratorConfig,
    pub llm: LlmBackend<'a>,
    pub ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    pub reduction_fraction: f64,
}

impl Default for Experiment<'_> {
    fn default() -> Self {
        Self {
            hyper: Hyperparams::default(),
            generator: GeneratorConfig::default(),
            llm: LlmBackend::NunStub,
            ratios: DEFAULT_RATIOS.to_vec(),
            seeds: (0..10).collect(),
            reduction_fraction: 0.5,
        }
    }
}

/// One seed of one scenario: baseline, reduced and one augmented model per
/// ratio, all trained from scratch with the same seed.
pub fn run_seed(
    train_set: &Dataset,
    test: &Dataset,
    kind: ScenarioKind,
    exp: &Experiment<'_>,
    seed: u64,
) -> Result<Vec<AugmentationRun>, HarnessError> {
    for &r in &exp.ratios {
        check_fraction(r)?;
    }
    let test_hash = test.content_hash();
    let scenario = ScarcityScenario {
        kind,
        reduction_fraction: exp.reduction_fraction,
        seed,
    };
    let baseline = train(train_set, &exp.hyper, seed)?;
    let baseline_report = evaluate(&baseline, test)?;
    let reduced = undersample(train_set, &scenario)?;
    let reduced_model = train(&reduced.dataset, &exp.hyper, seed)?;
    let reduced_report = evaluate(&reduced_model, test)?;

    let max_ratio = exp.ratios.iter().copied().fold(0.0, f64::max);
    let needed = reduced.removed.map(|n| restore_count(n, max_ratio));
    let pool = generate_pool(
        &reduced.dataset,
        &reduced_model,
        kind,
        needed,
        &exp.generator,
        exp.llm,
        seed,
    )?;
    if pool
        .iter()
        .any(|r| r.valid && reduced_model.predict(&r.cf_values).label != r.desired_label)
    {
        return Err(HarnessError::InvalidPoolEntry);
    }
    let generator_id = exp.generator.kind.id();
    let (cf_report, diversity) = if pool.is_empty() {
        (None, None)
    } else {
        (
            Some(batch_report(
                generator_id,
                &pool,
                &reduced_model,
                &reduced.dataset.schema,
            )?),
            Some(diversity_profile(&pool, &reduced.dataset.schema)?),
        )
    };

    let mut runs = Vec::with_capacity(exp.ratios.len());
    for &ratio in &exp.ratios {
        let aug = augment(&reduced, &pool, kind, ratio);
        debug_assert!(aug.dataset.samples.starts_with(&reduced.dataset.samples));
        let model = train(&aug.dataset, &exp.hyper, seed)?;
        let augmented_report = evaluate(&model, test)?;
        assert_eq!(test.content_hash(), test_hash, "test set changed during a run");
        runs.push(AugmentationRun {
            scenario,
            generator_id: generator_id.to_owned(),
            ratio,
            seed,
            drop: Deltas::between(&reduced_report, &baseline_report),
            recovery: Deltas::between(&augmented_report, &reduced_report),
            baseline_report: baseline_report.clone(),
            reduced_report: reduced_report.clone(),
            augmented_report,
            removed: reduced.removed,
            added: aug.added,
            shortfall: aug.shortfall,
            test_hash: test_hash.clone(),
            cf_report: cf_report.clone(),
            diversity: diversity.clone(),
        });
    }
    Ok(runs)
}

/// All seeds of one scenario, concurrently; output ordered by seed, ratio.
pub fn run_scenario(
    train_set: &Dataset,
    test: &Dataset,
    kind: ScenarioKind,
    exp: &Experiment<'_>,
) -> Result<Vec<AugmentationRun>, HarnessError> {
    let per_seed: Vec<Vec<AugmentationRun>> = exp
        .seeds
        .par_iter()
        .map(|&seed| run_seed(train_set, test, kind, exp, seed))
        .collect::<Result<_, _>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub seed: u64,
    pub n_train: usize,
    pub report: ClassificationReport,
}

/// Retrains on seeded uniform subsamples of `⌊n · fraction⌋` training rows.
pub fn reduction_sweep(
    train_set: &Dataset,
    test: &Dataset,
    fractions: &[f64],
    seeds: &[u64],
    hyper: &Hyperparams,
) -> Result<Vec<SweepRow>, HarnessError> {
    for &f in fractions {
        check_fraction(f)?;
    }
    let jobs: Vec<(f64, u64)> = fractions
        .iter()
        .flat_map(|&f| seeds.iter().map(move |&s| (f, s)))
        .collect();
    jobs.par_iter()
        .map(|&(fraction, seed)| {
            let n = (train_set.samples.len() as f64 * fraction + 1e-9).floor() as usize;
            let subset = if n >= train_set.samples.len() {
                train_set.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut keep: Vec<usize> = (0..train_set.samples.len())
                    .collect::<Vec<_>>()
                    .choose_multiple(&mut rng, n)
                    .copied()
                    .collect();
                keep.sort_unstable();
                train_set.with_samples(
                    keep.into_iter().map(|i| train_set.samples[i].clone()).collect(),
                    train_set.role,
                )
            };
            let model = train(&subset, hyper, seed)?;
            Ok(SweepRow {
                fraction,
                seed,
                n_train: subset.samples.len(),
                report: evaluate(&model, test)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
