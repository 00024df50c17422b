//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p cfforge --test acceptance`. Exits non-zero when
//! any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use chrono::{NaiveDate, TimeDelta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use cfforge::cfmetrics::{distance, mean_distance, plausibility, sparsity, validity};
use cfforge::featurize::{build_dataset, enumerate_windows, WindowConfig};
use cfforge::generators::{
    generate_greedy2step_traced, generate_nice, CounterfactualResult, DiverseConfig, GenerationRequest, GeneratorError,
    GeneratorKind, GeneratorSuite, NunCompleter, NunIndex, PromptSpec,
};
use cfforge::harness::{
    reduction_sweep, render_reports, run_scenario, write_reports, AugmentationRun, Deltas, Experiment, GeneratorConfig,
    LlmBackend, ScarcityScenario, ScenarioKind, DEFAULT_RATIOS,
};
use cfforge::llmclient::{Completer, EndpointConfig, LlmClient, Transport, TransportError, TransportResponse};
use cfforge::model::{
    auc_pairwise, auc_trapezoid, classification_report, gradient_check, train, BinaryModel, ClassificationReport,
    Hyperparams,
};
use cfforge::schema::{fit_ranges, read_dataset, read_dataset_with_schema, write_dataset, DatasetRole};
use cfforge::synth::{gaussian_blobs, sensor_bundle, wearable_like, CohortConfig};
use cfforge::util::{median, spearman};
use cfforge::{Dataset, FeatureSchema, FeatureSpec, Sample};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 1

struct Linear(Vec<f64>);

impl BinaryModel for Linear {
    fn probability(&self, values: &[f64]) -> f64 {
        let z: f64 = self.0.iter().zip(values).map(|(w, v)| w * v).sum();
        1.0 / (1.0 + (-z).exp())
    }
}

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut specs: Vec<FeatureSpec> = (0..8)
        .map(|i| FeatureSpec::continuous(format!("c{i}"), None, true))
        .collect();
    for j in 0..4 {
        specs.push(FeatureSpec::categorical(
            format!("k{j}"),
            &["a", "b", "c", "d", "e"],
            true,
        ));
    }
    let raw = FeatureSchema::new(specs).map_err(|e| e.to_string())?;
    // Training rows only use categories a..c so d and e are implausible.
    let train_rows: Vec<Sample> = (0..300)
        .map(|i| {
            let mut v: Vec<f64> = (0..8).map(|_| rng.random_range(-5.0..5.0)).collect();
            v.extend((0..4).map(|_| rng.random_range(0..3) as f64));
            Sample::new(format!("t{i}"), 0, v, (i % 2) as u8)
        })
        .collect();
    let schema = fit_ranges(&Dataset::new(raw, train_rows.clone(), DatasetRole::Train)).map_err(|e| e.to_string())?;
    let model = Linear((0..12).map(|_| rng.random_range(-1.0..1.0)).collect());

    let mut lo = [f64::INFINITY; 8];
    let mut hi = [f64::NEG_INFINITY; 8];
    let mut seen = [[false; 5]; 4];
    for s in &train_rows {
        for i in 0..8 {
            lo[i] = lo[i].min(s.values[i]);
            hi[i] = hi[i].max(s.values[i]);
        }
        for j in 0..4 {
            seen[j][s.values[8 + j] as usize] = true;
        }
    }

    let mut batch = Vec::with_capacity(1000);
    for i in 0..1000 {
        let factual: Vec<f64> = (0..12)
            .map(|f| {
                if f < 8 {
                    rng.random_range(-5.0..5.0)
                } else {
                    rng.random_range(0..3) as f64
                }
            })
            .collect();
        let mut cf = factual.clone();
        for (f, v) in cf.iter_mut().enumerate() {
            if rng.random_bool(0.3) {
                *v = if f < 8 {
                    rng.random_range(-6.0..6.0)
                } else {
                    rng.random_range(0..5) as f64
                };
            }
        }
        let sample = Sample::new(format!("f{i}"), 0, factual, 0);
        let req = GenerationRequest::flip(&sample, &schema, &model, 0);
        batch.push(CounterfactualResult::new(&req, "oracle", cf, false, 0, 0));
    }

    let (mut flips, mut changed, mut inside, mut dist_sum) = (0usize, 0usize, 0usize, 0.0);
    let mut max_pair_err: f64 = 0.0;
    for r in &batch {
        let (a, b) = (&r.factual.values, &r.cf_values);
        let pa = model.probability(a) >= 0.5;
        let pb = model.probability(b) >= 0.5;
        flips += usize::from(pa != pb);
        changed += (0..12).filter(|&f| a[f] != b[f]).count();
        let ok_cont = (0..8).all(|f| b[f] >= lo[f] && b[f] <= hi[f]);
        let ok_cat = (0..4).all(|j| seen[j][b[8 + j] as usize]);
        inside += usize::from(ok_cont && ok_cat);
        let l2 = (0..8)
            .map(|f| ((b[f] - a[f]) / (hi[f] - lo[f])).powi(2))
            .sum::<f64>()
            .sqrt();
        let ham = (8..12).filter(|&f| a[f] != b[f]).count() as f64 / 4.0;
        let d = l2 + ham;
        max_pair_err = max_pair_err.max((distance(a, b, &schema) - d).abs());
        dist_sum += d;
    }
    let n = batch.len() as f64;
    let got_validity = validity(&batch, &model).map_err(|e| e.to_string())?;
    let got_sparsity = sparsity(&batch).map_err(|e| e.to_string())?;
    let got_plaus = plausibility(&batch, &schema).map_err(|e| e.to_string())?;
    let got_dist = mean_distance(&batch, &schema).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let exact = got_validity == flips as f64 / n
        && got_sparsity == changed as f64 / n
        && got_plaus == 100.0 * inside as f64 / n;
    let dist_ok = max_pair_err <= 1e-9 && (got_dist - dist_sum / n).abs() <= 1e-9;
    check(
        exact && dist_ok && elapsed < 5.0 && inside > 0 && inside < batch.len(),
        format!(
            "1000 pairs, validity {got_validity:.3}, sparsity {got_sparsity:.3}, plausibility {got_plaus:.1}%, \
             max |dist err| {max_pair_err:.1e}, {elapsed:.2}s"
        ),
    )
}

// ---------------------------------------------------------------- 2

fn immutability() -> Outcome {
    let start = Instant::now();
    let data = wearable_like(600, 7);
    let hyper = Hyperparams {
        epochs: 40,
        ..Hyperparams::default()
    };
    let model = train(&data, &hyper, 7).map_err(|e| e.to_string())?;
    let index = NunIndex::new(&data, &model);
    let stub = NunCompleter { train: &index };
    let immutable = data.schema.immutable_indices();
    let requests: Vec<&Sample> = data.samples.iter().step_by(3).take(200).collect();
    let mut summary = Vec::new();
    let mut violations = 0usize;
    for kind in [
        GeneratorKind::Llm,
        GeneratorKind::Nice,
        GeneratorKind::Cfnow,
        GeneratorKind::Dice,
        GeneratorKind::Mock,
    ] {
        let suite = GeneratorSuite {
            kind,
            train: &index,
            budget: if kind == GeneratorKind::Llm { 3 } else { 200 },
            diverse: DiverseConfig {
                k: 2,
                population: 20,
                generations: 8,
                ..DiverseConfig::default()
            },
            prompt: PromptSpec::zero_shot(),
            completer: Some(&stub),
            seed: 7,
        };
        let mut produced = 0usize;
        for s in &requests {
            let desired = 1 - model.predict(&s.values).label;
            let results = match suite.generate(s, desired, &data.schema, &model) {
                Ok(rs) => rs,
                Err(GeneratorError::NoUnlikeNeighbor) => continue,
                Err(e) => return Err(format!("{}: {e}", kind.id())),
            };
            for r in results {
                produced += 1;
                violations += immutable.iter().filter(|&&i| r.cf_values[i] != s.values[i]).count();
            }
        }
        summary.push(format!("{} {produced}", kind.id()));
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(
        violations == 0 && elapsed < 60.0,
        format!(
            "{} requests x 5 generators ({}), {violations} immutable changes, {elapsed:.1}s",
            requests.len(),
            summary.join(", ")
        ),
    )
}

// ---------------------------------------------------------------- 3

fn gradients() -> Outcome {
    let data = wearable_like(200, 3);
    let hyper = Hyperparams {
        epochs: 5,
        ..Hyperparams::default()
    };
    let model = train(&data, &hyper, 3).map_err(|e| e.to_string())?;
    let n_params = model.network.param_count();
    let worst = (0..5)
        .map(|i| gradient_check(&model, &data.samples[i * 17], i as u64))
        .fold(0.0, f64::max);
    check(
        worst < 1e-4 && n_params >= 100,
        format!("{n_params} parameters, max relative error {worst:.2e}"),
    )
}

// ---------------------------------------------------------------- 4

fn auc_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for set in 0..50 {
        let n = 20 + set * 7;
        // Distinct scores: a shuffled grid plus small jitter.
        let mut scores: Vec<f64> = (0..n)
            .map(|i| (i as f64 + rng.random_range(0.0..0.5)) / n as f64)
            .collect();
        for i in (1..n).rev() {
            scores.swap(i, rng.random_range(0..=i));
        }
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.4))).collect();
        labels[0] = 0;
        labels[1] = 1;
        let a = auc_pairwise(&scores, &labels).ok_or("pairwise undefined")?;
        let b = auc_trapezoid(&scores, &labels).ok_or("trapezoid undefined")?;
        worst = worst.max((a - b).abs());
    }
    let tie = auc_pairwise(&[0.5, 0.5], &[1, 0]);
    let tie_trap = auc_trapezoid(&[0.5, 0.5], &[1, 0]);
    let tie_report = classification_report(&[0.5, 0.5], &[1, 0]).auc;
    check(
        worst <= 1e-9 && tie == Some(0.5) && tie_trap == Some(0.5) && tie_report == 0.5,
        format!("50 sets, max |pairwise - trapezoid| {worst:.1e}, tie case {tie:?}"),
    )
}

// ---------------------------------------------------------------- 5

fn windowing() -> Outcome {
    let t0 = NaiveDate::from_ymd_opt(2024, 3, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .ok_or("bad date")?;
    let cfg = WindowConfig {
        window_length: TimeDelta::hours(2),
        overlap_fraction: 0.5,
        ..WindowConfig::default()
    };
    let ten = enumerate_windows(t0, t0 + TimeDelta::hours(10), &cfg).len();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    for _ in 0..100 {
        let window_min = rng.random_range(10..=360i64);
        let overlap = [0.0, 0.25, 0.5, 0.75][rng.random_range(0..4)];
        let span_min = rng.random_range(window_min..=window_min * 20);
        let cfg = WindowConfig {
            window_length: TimeDelta::minutes(window_min),
            overlap_fraction: overlap,
            ..WindowConfig::default()
        };
        let stride = cfg.stride().num_seconds();
        let expected = ((span_min * 60 - window_min * 60) / stride + 1) as usize;
        if enumerate_windows(t0, t0 + TimeDelta::minutes(span_min), &cfg).len() != expected {
            mismatches += 1;
        }
    }
    check(
        ten == 9 && mismatches == 0,
        format!("10h/2h/50% -> {ten} windows, {mismatches}/100 random spans off the formula"),
    )
}

// ---------------------------------------------------------------- 6

fn nice_and_greedy() -> Outcome {
    let data = gaussian_blobs(500, 6, 2.56, 6);
    let hyper = Hyperparams {
        epochs: 40,
        ..Hyperparams::default()
    };
    let model = train(&data, &hyper, 6).map_err(|e| e.to_string())?;
    let index = NunIndex::new(&data, &model);
    let (mut nice_total, mut nice_valid) = (0usize, 0usize);
    let (mut greedy_runs, mut non_monotone) = (0usize, 0usize);
    for s in &data.samples {
        let req = GenerationRequest::flip(s, &data.schema, &model, 200);
        match generate_nice(&req, &index) {
            Ok(r) => {
                nice_total += 1;
                nice_valid += usize::from(r.valid);
            }
            Err(GeneratorError::NoUnlikeNeighbor) => {}
            Err(_) => nice_total += 1,
        }
        let (_, trace) = generate_greedy2step_traced(&req);
        greedy_runs += 1;
        non_monotone += usize::from(!trace.is_monotone());
    }
    let v = nice_valid as f64 / nice_total.max(1) as f64;
    check(
        nice_total > 0 && v >= 0.95 && non_monotone == 0,
        format!("NICE validity {v:.3} over {nice_total}, greedy step 2 non-monotone on {non_monotone}/{greedy_runs}"),
    )
}

// ---------------------------------------------------------------- 7, 8

/// Median augmented F1 at ratio 1.0 recorded on the frozen fixture.
const GOLDEN_AUGMENTED_F1: f64 = 0.8966;

struct Recovery {
    runs: Vec<AugmentationRun>,
    elapsed: f64,
}

fn recovery_runs() -> Result<Recovery, String> {
    let start = Instant::now();
    let data = gaussian_blobs(2000, 6, 2.56, 0);
    let (train_rows, test_rows) = data.samples.split_at(1600);
    let train_set = data.with_samples(train_rows.to_vec(), DatasetRole::Train);
    let schema = fit_ranges(&train_set).map_err(|e| e.to_string())?;
    let train_set = Dataset::new(schema.clone(), train_set.samples, DatasetRole::Train);
    let test = Dataset::new(schema, test_rows.to_vec(), DatasetRole::Test);
    let exp = Experiment::default();
    let runs = run_scenario(&train_set, &test, ScenarioKind::A, &exp).map_err(|e| e.to_string())?;
    Ok(Recovery {
        runs,
        elapsed: start.elapsed().as_secs_f64(),
    })
}

fn median_f1(runs: &[AugmentationRun], pick: impl Fn(&AugmentationRun) -> f64) -> f64 {
    median(&runs.iter().map(pick).collect::<Vec<_>>())
}

fn at_ratio(runs: &[AugmentationRun], ratio: f64) -> Vec<AugmentationRun> {
    runs.iter().filter(|r| r.ratio == ratio).cloned().collect()
}

fn recovery(rec: &Recovery) -> Outcome {
    let full = at_ratio(&rec.runs, 1.0);
    let baseline = median_f1(&full, |r| r.baseline_report.f1);
    let reduced = median_f1(&full, |r| r.reduced_report.f1);
    let augmented = median_f1(&full, |r| r.augmented_report.f1);
    let drop_pts = 100.0 * (baseline - reduced);
    let recovered = if drop_pts > 0.0 {
        100.0 * (augmented - reduced) / drop_pts * 100.0
    } else {
        f64::NAN
    };
    let calibrated = (baseline - 0.90).abs() <= 0.02;
    let golden = (augmented - GOLDEN_AUGMENTED_F1).abs() <= 0.02;
    check(
        calibrated && drop_pts >= 3.0 && recovered >= 50.0 && golden && rec.elapsed < 300.0,
        format!(
            "median F1 baseline {baseline:.4}, reduced {reduced:.4} (drop {drop_pts:.2} pts, need >= 3), \
             augmented {augmented:.4} (golden {GOLDEN_AUGMENTED_F1}, recovered {recovered:.0}% of drop), {:.1}s",
            rec.elapsed
        ),
    )
}

fn ratio_trend(rec: &Recovery) -> Outcome {
    let medians: Vec<f64> = DEFAULT_RATIOS
        .iter()
        .map(|&r| median_f1(&at_ratio(&rec.runs, r), |x| x.augmented_report.f1))
        .collect();
    let monotone = medians.windows(2).all(|w| w[1] >= w[0] - 0.01);
    let rho = spearman(&DEFAULT_RATIOS, &medians).unwrap_or(f64::NAN);
    let shown: Vec<String> = medians.iter().map(|m| format!("{m:.4}")).collect();
    check(
        monotone && rho > 0.0,
        format!("median F1 by ratio [{}], Spearman {rho:.2}", shown.join(", ")),
    )
}

// ---------------------------------------------------------------- 9

fn delta_convention() -> Outcome {
    let reports = |f1: f64| ClassificationReport {
        f1,
        ..classification_report(&[0.9, 0.1], &[1, 0])
    };
    let baseline = reports(0.68);
    let reduced = reports(0.58);
    let run = AugmentationRun {
        scenario: ScarcityScenario::new(ScenarioKind::A, 0),
        generator_id: "mock".into(),
        ratio: 1.0,
        seed: 0,
        drop: Deltas::between(&reduced, &baseline),
        recovery: Deltas::between(&reduced, &reduced),
        baseline_report: baseline,
        reduced_report: reduced.clone(),
        augmented_report: reduced,
        removed: [0, 10],
        added: [0, 0],
        shortfall: [0, 10],
        test_hash: String::new(),
        cf_report: None,
        diversity: None,
    };
    let bundle = render_reports(&[run], &[]).map_err(|e| e.to_string())?;
    let header: Vec<&str> = bundle.table5.lines().next().unwrap_or("").split(',').collect();
    let row: Vec<&str> = bundle.table5.lines().nth(1).unwrap_or("").split(',').collect();
    let col = header.iter().position(|h| *h == "drop_f1").ok_or("no drop_f1 column")?;
    let cell = row.get(col).copied().unwrap_or("");
    check(cell == "\u{2212}14.71%", format!("drop_f1 cell {cell:?}"))
}

// ---------------------------------------------------------------- 10

/// In-process chat endpoint answering like the NUN stub.
struct StubEndpoint {
    index: NunIndex,
}

impl Transport for StubEndpoint {
    fn post(&self, _url: &str, _key: Option<&str>, body: &Value) -> Result<TransportResponse, TransportError> {
        let prompt = body["messages"][0]["content"].as_str().unwrap_or_default();
        let reply = NunCompleter { train: &self.index }.complete(prompt).unwrap_or_default();
        Ok(TransportResponse {
            status: 200,
            body: json!({"choices": [{"message": {"role": "assistant", "content": reply}}]}).to_string(),
        })
    }
}

struct Offline;

impl Transport for Offline {
    fn post(&self, _url: &str, _key: Option<&str>, _body: &Value) -> Result<TransportResponse, TransportError> {
        Err(TransportError::Connect("network disabled".into()))
    }
}

const PIPELINE_FILES: [&str; 5] = ["runs.jsonl", "table3.csv", "table5.csv", "sweep.csv", "diversity.csv"];

fn pipeline(dir: &Path, client: &LlmClient) -> Result<(), String> {
    let bundle = sensor_bundle(&CohortConfig {
        patients: 10,
        days: 8,
        seed: 11,
    });
    let (train_set, test) = build_dataset(&bundle, &WindowConfig::default(), 11).map_err(|e| e.to_string())?;
    let data_dir = dir.join("data");
    std::fs::create_dir_all(&data_dir).map_err(|e| e.to_string())?;
    write_dataset(&train_set, &data_dir.join("train.csv")).map_err(|e| e.to_string())?;
    write_dataset(&test, &data_dir.join("test.csv")).map_err(|e| e.to_string())?;
    let train_set = read_dataset(&data_dir.join("train.csv"), DatasetRole::Train).map_err(|e| e.to_string())?;
    let test = read_dataset_with_schema(&data_dir.join("test.csv"), train_set.schema.clone(), DatasetRole::Test)
        .map_err(|e| e.to_string())?;

    let exp = Experiment {
        hyper: Hyperparams {
            epochs: 30,
            ..Hyperparams::default()
        },
        generator: GeneratorConfig {
            kind: GeneratorKind::Llm,
            budget: 3,
            prompt: "few:2".into(),
            ..GeneratorConfig::default()
        },
        llm: LlmBackend::Endpoint(client),
        ratios: vec![0.5, 1.0],
        seeds: vec![0, 1],
        reduction_fraction: 0.5,
    };
    let mut runs = Vec::new();
    for kind in [ScenarioKind::A, ScenarioKind::C] {
        runs.extend(run_scenario(&train_set, &test, kind, &exp).map_err(|e| e.to_string())?);
    }
    let sweep = reduction_sweep(&train_set, &test, &[0.5, 1.0], &[0, 1], &exp.hyper).map_err(|e| e.to_string())?;
    let reports = render_reports(&runs, &sweep).map_err(|e| e.to_string())?;
    write_reports(&reports, &dir.join("results")).map_err(|e| e.to_string())
}

fn reproducibility() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cache = tmp.path().join("llm_cache.jsonl");
    let endpoint = |offline: bool| EndpointConfig {
        base_url: "http://stub.invalid/v1".into(),
        cache_path: Some(cache.clone()),
        offline,
        ..EndpointConfig::default()
    };

    let bundle = sensor_bundle(&CohortConfig {
        patients: 10,
        days: 8,
        seed: 11,
    });
    let (train_set, _) = build_dataset(&bundle, &WindowConfig::default(), 11).map_err(|e| e.to_string())?;
    let oracle = train(&train_set, &Hyperparams::default(), 99).map_err(|e| e.to_string())?;
    let warm = LlmClient::with_transport(
        endpoint(false),
        Box::new(StubEndpoint {
            index: NunIndex::new(&train_set, &oracle),
        }),
    )
    .map_err(|e| e.to_string())?;
    pipeline(&tmp.path().join("warm"), &warm)?;
    let warmed = warm.network_calls();
    drop(warm);

    let mut outputs = Vec::new();
    let mut offline_calls = 0;
    for name in ["run1", "run2"] {
        let client = LlmClient::with_transport(endpoint(true), Box::new(Offline)).map_err(|e| e.to_string())?;
        pipeline(&tmp.path().join(name), &client)?;
        offline_calls += client.network_calls();
        let files: Vec<Vec<u8>> = PIPELINE_FILES
            .iter()
            .map(|f| std::fs::read(tmp.path().join(name).join("results").join(f)))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        outputs.push(files);
    }
    let identical = outputs[0] == outputs[1];
    let runs_lines = String::from_utf8_lossy(&outputs[0][0]).lines().count();
    let elapsed = start.elapsed().as_secs_f64();
    check(
        identical && warmed > 0 && offline_calls == 0 && runs_lines > 0,
        format!(
            "{} files byte-identical: {identical}, {runs_lines} runs, {warmed} requests warmed the cache, \
             {offline_calls} network calls offline, {elapsed:.1}s",
            PIPELINE_FILES.len()
        ),
    )
}

// ----------------------------------------------------------------

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| (*s).to_owned()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    })
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n} [{name}]: {tag} - {detail}");
    };
    report(1, "metric oracle", guarded(metric_oracle));
    report(2, "immutability", guarded(immutability));
    report(3, "gradient check", guarded(gradients));
    report(4, "AUC exactness", guarded(auc_exactness));
    report(5, "windowing", guarded(windowing));
    report(6, "NICE validity / greedy monotone", guarded(nice_and_greedy));
    let rec = catch_unwind(recovery_runs).unwrap_or_else(|_| Err("panicked".into()));
    match rec {
        Ok(rec) => {
            report(7, "synthetic recovery", guarded(|| recovery(&rec)));
            report(8, "ratio trend", guarded(|| ratio_trend(&rec)));
        }
        Err(e) => {
            report(7, "synthetic recovery", Err(e.clone()));
            report(8, "ratio trend", Err(e));
        }
    }
    report(9, "delta convention", guarded(delta_convention));
    report(10, "reproducibility", guarded(reproducibility));
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
