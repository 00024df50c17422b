//! Synthetic fixtures: a simulated wearable cohort and small tabular datasets.
//!
//! The cohort simulator couples daily stress with sleep architecture, glucose
//! and activity so the featurized dataset carries a learnable signal.

use std::collections::BTreeMap;

use chrono::{NaiveDate, TimeDelta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::featurize::{Demographics, Reading, SensorBundle, SleepRecord, SleepStage};
use crate::schema::{fit_ranges, Dataset, DatasetRole, FeatureSchema, FeatureSpec, Sample};

#[derive(Debug, Clone, Copy)]
pub struct CohortConfig {
    pub patients: usize,
    pub days: usize,
    pub seed: u64,
}

const COHORT_START: (i32, u32, u32) = (2024, 3, 1);

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("finite sd").sample(rng)
}

/// Simulates `patients` patients over `days` days with 5-minute CGM, 15-minute
/// steps and stress, and nightly sleep stages.
pub fn sensor_bundle(cfg: &CohortConfig) -> SensorBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (y, m, d) = COHORT_START;
    let day0 = NaiveDate::from_ymd_opt(y, m, d).expect("valid date");
    let mut bundle = SensorBundle::default();
    let subgroups = [
        ("healthy", "none"),
        ("prediabetes", "none"),
        ("oral_t2d", "oral"),
        ("insulin_t2d", "insulin"),
    ];

    for p in 0..cfg.patients {
        let id = format!("p{p:03}");
        let (subgroup, medication) = subgroups[rng.random_range(0..subgroups.len())];
        let glucose_base = match subgroup {
            "healthy" => 105.0,
            "prediabetes" => 125.0,
            "oral_t2d" => 150.0,
            _ => 165.0,
        };
        let age = rng.random_range(40..86) as f64;
        let gender = if rng.random_bool(0.5) { "F" } else { "M" };
        bundle.demographics.insert(
            id.clone(),
            Demographics {
                age,
                gender: gender.into(),
                medication: medication.into(),
                subgroup: subgroup.into(),
            },
        );
        let stress_base = normal(&mut rng, 68.0, 8.0);

        let (mut cgm, mut steps, mut stress) = (Vec::new(), Vec::new(), Vec::new());
        for day in 0..cfg.days {
            let date = day0 + TimeDelta::days(day as i64);
            // Latent daily stress in [-1, 1]-ish drives every stream.
            let z = normal(&mut rng, 0.0, 1.0);
            let daily_stress = (stress_base + 12.0 * z).clamp(5.0, 98.0);

            let night = date - TimeDelta::days(1);
            let total = normal(&mut rng, 420.0, 40.0).max(180.0);
            let deep = (0.19 - 0.035 * z + normal(&mut rng, 0.0, 0.02)).clamp(0.03, 0.35);
            let rem = (0.21 - 0.025 * z + normal(&mut rng, 0.0, 0.02)).clamp(0.05, 0.35);
            let awake = (0.08 + 0.03 * z + normal(&mut rng, 0.0, 0.015)).clamp(0.01, 0.3);
            let light = (1.0 - deep - rem - awake).max(0.05);
            for (stage, frac) in [
                (SleepStage::Awake, awake),
                (SleepStage::Light, light),
                (SleepStage::Deep, deep),
                (SleepStage::Rem, rem),
            ] {
                bundle.sleep.push(SleepRecord {
                    patient_id: id.clone(),
                    night,
                    stage,
                    minutes: (total * frac).round(),
                });
            }

            let start = date.and_hms_opt(0, 0, 0).expect("midnight");
            let glucose_day = glucose_base + 14.0 * z;
            for k in 0..288 {
                if rng.random_bool(0.02) {
                    continue;
                }
                let at = start + TimeDelta::minutes(5 * k);
                let hour = k as f64 / 12.0;
                let meal: f64 = [8.0, 13.0, 19.0]
                    .iter()
                    .map(|&h| {
                        let dt = hour - h;
                        if (0.0..3.0).contains(&dt) {
                            45.0 * (dt * std::f64::consts::PI / 3.0).sin()
                        } else {
                            0.0
                        }
                    })
                    .sum();
                let g = (glucose_day + meal + normal(&mut rng, 0.0, 8.0)).round().max(40.0);
                cgm.push(Reading { at, value: g });
            }
            for k in 0..96 {
                let at = start + TimeDelta::minutes(15 * k);
                let hour = k as f64 / 4.0;
                let awake_hours = (7.0..22.0).contains(&hour);
                let level = if awake_hours { (90.0 - 30.0 * z).max(5.0) } else { 2.0 };
                let s = (level + normal(&mut rng, 0.0, level * 0.5)).round().max(0.0);
                steps.push(Reading { at, value: s });
                if awake_hours {
                    let st = (daily_stress + normal(&mut rng, 0.0, 10.0)).round().clamp(0.0, 100.0);
                    stress.push(Reading { at, value: st });
                }
            }
        }
        bundle.cgm.insert(id.clone(), cgm);
        bundle.steps.insert(id.clone(), steps);
        bundle.stress.insert(id, stress);
    }
    bundle
}

fn continuous_schema(d: usize) -> FeatureSchema {
    FeatureSchema::new(
        (0..d)
            .map(|i| FeatureSpec::continuous(format!("x{i}"), None, true))
            .collect(),
    )
    .expect("unique names")
}

fn fitted(schema: FeatureSchema, samples: Vec<Sample>) -> Dataset {
    let ds = Dataset::new(schema, samples, DatasetRole::Train);
    let schema = fit_ranges(&ds).expect("non-empty finite data");
    Dataset::new(schema, ds.samples, DatasetRole::Train)
}

/// Two isotropic Gaussian classes in `d` dimensions with centres
/// `±separation/2 · 1/√d`, so `separation` is the Mahalanobis distance
/// between the means. Labels alternate, giving a balanced dataset.
pub fn gaussian_blobs(n: usize, d: usize, separation: f64, seed: u64) -> Dataset {
    gaussian_blobs_with_prior(n, d, separation, 0.5, seed)
}

/// Like [`gaussian_blobs`] with a fraction `positive` of class-1 samples,
/// spread evenly through the sample order so any prefix keeps the prior.
pub fn gaussian_blobs_with_prior(n: usize, d: usize, separation: f64, positive: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = separation / 2.0 / (d as f64).sqrt();
    let samples = (0..n)
        .map(|i| {
            let label = u8::from(((i + 1) as f64 * positive).floor() > (i as f64 * positive).floor());
            let sign = if label == 1 { 1.0 } else { -1.0 };
            let values = (0..d).map(|_| normal(&mut rng, sign * offset, 1.0)).collect();
            Sample::new(format!("s{i:05}"), 0, values, label)
        })
        .collect();
    fitted(continuous_schema(d), samples)
}

/// Uniform points in `[-1, 1]²` labelled by the sign of `x·y`.
pub fn xor_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|i| {
            let x: f64 = rng.random_range(-1.0..1.0);
            let y: f64 = rng.random_range(-1.0..1.0);
            Sample::new(format!("s{i:05}"), 0, vec![x, y], u8::from(x * y > 0.0))
        })
        .collect();
    fitted(continuous_schema(2), samples)
}

/// A 12-feature tabular cohort shaped like the featurized wearable data:
/// eight mutable continuous features, immutable age, and three immutable
/// categorical demographics. Labels follow a noisy logistic rule.
pub fn wearable_like(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut specs: Vec<FeatureSpec> = [
        ("awake_pct", "%"),
        ("light_pct", "%"),
        ("deep_pct", "%"),
        ("rem_pct", "%"),
        ("mean_steps", "steps"),
        ("mean_glucose", "mg/dL"),
        ("hyper_events", "count"),
        ("tir_pct", "%"),
    ]
    .iter()
    .map(|(n, u)| FeatureSpec::continuous(*n, Some(u), true))
    .collect();
    specs.push(FeatureSpec::continuous("age", Some("years"), false));
    specs.push(FeatureSpec::categorical("gender", &["F", "M"], false));
    specs.push(FeatureSpec::categorical(
        "medication",
        &["insulin", "none", "oral"],
        false,
    ));
    specs.push(FeatureSpec::categorical(
        "subgroup",
        &["healthy", "insulin_t2d", "oral_t2d", "prediabetes"],
        false,
    ));
    let schema = FeatureSchema::new(specs).expect("unique names");

    let mut samples = Vec::with_capacity(n);
    let mut per_patient: BTreeMap<usize, (f64, f64, f64, f64)> = BTreeMap::new();
    for i in 0..n {
        let patient = i / 10;
        let &mut (age, gender, med, sub) = per_patient.entry(patient).or_insert_with(|| {
            (
                rng.random_range(40..86) as f64,
                rng.random_range(0..2) as f64,
                rng.random_range(0..3) as f64,
                rng.random_range(0..4) as f64,
            )
        });
        let z = normal(&mut rng, 0.0, 1.0);
        let deep = (19.0 - 3.5 * z + normal(&mut rng, 0.0, 2.0)).clamp(3.0, 35.0);
        let rem = (21.0 - 2.5 * z + normal(&mut rng, 0.0, 2.0)).clamp(5.0, 35.0);
        let awake = (8.0 + 3.0 * z + normal(&mut rng, 0.0, 1.5)).clamp(1.0, 30.0);
        let light = 100.0 - deep - rem - awake;
        let steps = (90.0 - 30.0 * z + normal(&mut rng, 0.0, 20.0)).max(0.0);
        let glucose = 130.0 + 14.0 * z + normal(&mut rng, 0.0, 15.0);
        let hyper = f64::from(u8::from(glucose > 160.0)) + f64::from(rng.random_range(0u8..2));
        let tir = (100.0 - (glucose - 120.0).max(0.0) * 1.2 + normal(&mut rng, 0.0, 8.0)).clamp(0.0, 100.0);
        let label = u8::from(z + normal(&mut rng, 0.0, 0.6) > 0.4);
        samples.push(Sample::new(
            format!("p{patient:03}"),
            (i % 10) as u64,
            vec![
                awake, light, deep, rem, steps, glucose, hyper, tir, age, gender, med, sub,
            ],
            label,
        ));
    }
    fitted(schema, samples)
}
