use super::*;
use crate::generators::GenerationRequest;
use crate::model::BinaryModel;
use crate::schema::{FeatureSchema, FeatureSpec};
use crate::synth::gaussian_blobs;

fn balanced(n_per_class: usize) -> Dataset {
    let schema = FeatureSchema::new(vec![FeatureSpec::continuous_with_range("x", 0.0, 1.0, true)]).unwrap();
    let samples = (0..2 * n_per_class)
        .map(|i| Sample::new(format!("p{i}"), 0, vec![i as f64 / 1000.0], (i % 2) as u8))
        .collect();
    Dataset::new(schema, samples, DatasetRole::Train)
}

#[test]
fn undersample_counts_and_determinism() {
    let ds = balanced(100);
    let a = undersample(&ds, &ScarcityScenario::new(ScenarioKind::A, 1)).unwrap();
    assert_eq!(a.dataset.class_counts(), [100, 50]);
    assert_eq!(a.removed, [0, 50]);
    let b = undersample(&ds, &ScarcityScenario::new(ScenarioKind::B, 1)).unwrap();
    assert_eq!(b.dataset.class_counts(), [50, 100]);
    let c = undersample(&ds, &ScarcityScenario::new(ScenarioKind::C, 1)).unwrap();
    assert_eq!(c.dataset.class_counts(), [50, 50]);
    let again = undersample(&ds, &ScarcityScenario::new(ScenarioKind::A, 1)).unwrap();
    assert_eq!(a.dataset.samples, again.dataset.samples);
    let other = undersample(&ds, &ScarcityScenario::new(ScenarioKind::A, 2)).unwrap();
    assert_ne!(a.dataset.samples, other.dataset.samples);
}

#[test]
fn undersample_rejects_tiny_class_and_bad_fraction() {
    let ds = balanced(1);
    assert!(matches!(
        undersample(&ds, &ScarcityScenario::new(ScenarioKind::A, 0)),
        Err(HarnessError::ClassTooSmall { class: 1, count: 1 })
    ));
    let mut s = ScarcityScenario::new(ScenarioKind::A, 0);
    s.reduction_fraction = 1.0;
    assert!(matches!(
        undersample(&balanced(10), &s),
        Err(HarnessError::InvalidFraction(_))
    ));
}

struct Threshold;
impl BinaryModel for Threshold {
    fn probability(&self, v: &[f64]) -> f64 {
        if v[0] > 0.5 {
            0.9
        } else {
            0.1
        }
    }
}

fn pool(valid: usize, invalid: usize, desired: Label) -> Vec<CounterfactualResult> {
    let schema = balanced(1).schema;
    let f = Sample::new("src", 3, vec![0.1], 0);
    let req = GenerationRequest::new(&f, desired.max(1), &schema, &Threshold, 1).unwrap();
    let mut out = Vec::new();
    for i in 0..valid + invalid {
        let mut r = CounterfactualResult::new(&req, "mock", vec![0.6 + i as f64 * 1e-3], i < valid, 1, 1);
        r.desired_label = desired;
        out.push(r);
    }
    out
}

#[test]
fn augment_counts_and_shortfall() {
    let ds = balanced(100);
    let red = undersample(&ds, &ScarcityScenario::new(ScenarioKind::A, 1)).unwrap();
    let mut p = pool(80, 10, 1);
    p.rotate_right(10);
    p.extend(pool(40, 0, 0));
    let full = augment(&red, &p, ScenarioKind::A, 1.0);
    assert_eq!(full.added, [0, 50]);
    assert_eq!(full.shortfall, [0, 0]);
    assert_eq!(full.dataset.class_counts(), [100, 100]);
    assert!(full.dataset.samples.starts_with(&red.dataset.samples));
    assert!(full.dataset.samples[red.dataset.len()..]
        .iter()
        .all(|s| s.label == 1 && s.patient_id == "cf:src"));
    assert_eq!(augment(&red, &p, ScenarioKind::A, 0.2).added, [0, 10]);
    let short = augment(&red, &pool(30, 5, 1), ScenarioKind::A, 1.0);
    assert_eq!((short.added, short.shortfall), ([0, 30], [0, 20]));
}

#[test]
fn restore_count_handles_float_ratios() {
    assert_eq!(restore_count(50, 0.6), 30);
    assert_eq!(restore_count(10, 0.3), 3);
    assert_eq!(restore_count(50, 1.0), 50);
}

#[test]
fn delta_formatting() {
    assert_eq!(format_delta(relative_delta(0.58, 0.68)), "\u{2212}14.71%");
    assert_eq!(format_delta(Some(22.41)), "+22.41%");
    assert_eq!(format_delta(Some(-0.001)), "+0.00%");
    assert_eq!(format_delta(relative_delta(0.5, 0.0)), "n/a");
}

fn report(f1: f64) -> ClassificationReport {
    ClassificationReport {
        accuracy: f1,
        precision: f1,
        recall: f1,
        f1,
        auc: f1,
        n: 10,
        undefined: vec![],
    }
}

fn fake_run(kind: ScenarioKind, ratio: f64, seed: u64, base: f64, red: f64, aug: f64) -> AugmentationRun {
    AugmentationRun {
        scenario: ScarcityScenario::new(kind, seed),
        generator_id: "mock".into(),
        ratio,
        seed,
        drop: Deltas::between(&report(red), &report(base)),
        recovery: Deltas::between(&report(aug), &report(red)),
        baseline_report: report(base),
        reduced_report: report(red),
        augmented_report: report(aug),
        removed: [0, 50],
        added: [0, 50],
        shortfall: [0, 0],
        test_hash: "h".into(),
        cf_report: None,
        diversity: None,
    }
}

#[test]
fn single_run_gives_one_table5_row() {
    let t = table5_csv(&[fake_run(ScenarioKind::A, 1.0, 0, 0.68, 0.58, 0.71)]);
    let lines: Vec<&str> = t.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], TABLE5_HEADER);
    let cells: Vec<&str> = lines[1].split(',').collect();
    let col = |name: &str| TABLE5_HEADER.split(',').position(|h| h == name).unwrap();
    assert_eq!(cells[col("drop_f1")], "\u{2212}14.71%");
    assert_eq!(cells[col("recovery_f1")], "+22.41%");
}

#[test]
fn rendering_is_order_independent_and_repeatable() {
    let runs = vec![
        fake_run(ScenarioKind::B, 0.2, 1, 0.7, 0.6, 0.65),
        fake_run(ScenarioKind::A, 1.0, 0, 0.68, 0.58, 0.7),
        fake_run(ScenarioKind::A, 0.2, 1, 0.69, 0.59, 0.6),
    ];
    let mut reversed = runs.clone();
    reversed.reverse();
    let a = render_reports(&runs, &[]).unwrap();
    assert_eq!(a, render_reports(&reversed, &[]).unwrap());
    assert_eq!(a.runs_jsonl.lines().count(), 3);
    assert_eq!(a.table5.lines().count(), 4);
    assert!(a.table5.lines().nth(1).unwrap().starts_with("A,mock,0.2,"));
    assert!(matches!(render_reports(&[], &[]), Err(HarnessError::NoRuns)));
}

#[test]
fn config_parses_partial_toml() {
    let cfg = ExperimentConfig::from_toml(
        r#"
        [model]
        epochs = 5
        [generator]
        kind = "nice"
        prompt = "few:2"
        [endpoint]
        model_name = "local"
        [experiment]
        ratios = [0.5, 1.0]
        seeds = 3
        first_seed = 7
        "#,
    )
    .unwrap();
    assert_eq!(cfg.model.epochs, 5);
    assert_eq!(cfg.model.hidden, vec![32, 16]);
    assert_eq!(cfg.generator.kind, GeneratorKind::Nice);
    assert_eq!(cfg.endpoint.temperature, 0.2);
    assert_eq!(cfg.seeds(), vec![7, 8, 9]);
    assert_eq!(cfg.window.to_config(), crate::featurize::WindowConfig::default());
    assert!(ExperimentConfig::from_toml("[experiment]\nratios = [0.0]").is_err());
    assert!(ExperimentConfig::from_toml("[generator]\nprompt = \"many\"").is_err());
    assert!(ExperimentConfig::from_toml("[endpoint]\napi_key = \"x\"").is_ok_and(|c| c.endpoint.api_key.is_none()));
}

fn quick() -> Experiment<'static> {
    Experiment {
        hyper: Hyperparams {
            epochs: 30,
            ..Hyperparams::default()
        },
        ratios: vec![0.5, 1.0],
        seeds: vec![0, 1],
        ..Experiment::default()
    }
}

fn split(ds: &Dataset, n_train: usize) -> (Dataset, Dataset) {
    let (a, b) = ds.samples.split_at(n_train);
    (
        ds.with_samples(a.to_vec(), DatasetRole::Train),
        ds.with_samples(b.to_vec(), DatasetRole::Test),
    )
}

#[test]
fn run_seed_produces_one_run_per_ratio() {
    let (tr, te) = split(&gaussian_blobs(400, 3, 2.5, 3), 300);
    for kind in ScenarioKind::ALL {
        let runs = run_seed(&tr, &te, kind, &quick(), 4).unwrap();
        assert_eq!(runs.len(), 2);
        for r in &runs {
            assert_eq!(r.test_hash, te.content_hash());
            for &c in kind.targets() {
                let c = usize::from(c);
                assert_eq!(r.added[c] + r.shortfall[c], restore_count(r.removed[c], r.ratio));
            }
            assert_eq!(r.baseline_report, runs[0].baseline_report);
            let cf = r.cf_report.as_ref().unwrap();
            assert_eq!(cf.classes[0].is_some(), kind.targets().contains(&0));
        }
    }
}

#[test]
fn run_scenario_matches_per_seed_runs() {
    let (tr, te) = split(&gaussian_blobs(300, 3, 2.5, 5), 200);
    let exp = quick();
    let all = run_scenario(&tr, &te, ScenarioKind::A, &exp).unwrap();
    let mut one = run_seed(&tr, &te, ScenarioKind::A, &exp, 0).unwrap();
    one.extend(run_seed(&tr, &te, ScenarioKind::A, &exp, 1).unwrap());
    assert_eq!(all, one);
}

#[test]
fn sweep_shape_and_identity_row() {
    let (tr, te) = split(&gaussian_blobs(300, 3, 2.5, 6), 200);
    let hp = quick().hyper;
    let rows = reduction_sweep(&tr, &te, &[0.5, 1.0], &[0, 1, 2], &hp).unwrap();
    assert_eq!(rows.len(), 6);
    let full = rows.iter().find(|r| r.fraction == 1.0 && r.seed == 1).unwrap();
    assert_eq!(full.report, evaluate(&train(&tr, &hp, 1).unwrap(), &te).unwrap());
    assert!(rows.iter().filter(|r| r.fraction == 0.5).all(|r| r.n_train == 100));
    assert_eq!(sweep_csv(&rows).lines().count(), 7);
}
