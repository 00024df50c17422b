//! Windowed feature extraction from raw wearable streams.
//!
//! Each emitted sample pairs one two-hour window of CGM and step readings with
//! the sleep architecture of the most recent completed night and the
//! patient's demographics. Labels come from the mean stress level of the
//! calendar day the window starts on.

mod io;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{fit_ranges, Dataset, DatasetRole, FeatureSchema, FeatureSpec, Label, Sample, SchemaError};

pub use io::{read_bundle, write_bundle, LoadReport};

#[derive(Debug, Error)]
pub enum FeaturizeError {
    #[error("no sleep recorded for patient `{patient}` on night {night}")]
    MissingNight { patient: String, night: NaiveDate },
    #[error("no stress readings for patient `{patient}` on {day}")]
    NoStressData { patient: String, day: NaiveDate },
    #[error("need at least 2 patients with usable windows, found {0}")]
    InsufficientPatients(usize),
    #[error("invalid window config: {0}")]
    InvalidConfig(String),
    #[error("invalid sensor bundle: {0}")]
    InvalidBundle(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SleepStage {
    Awake,
    Light,
    Deep,
    Rem,
}

impl SleepStage {
    pub const ALL: [SleepStage; 4] = [SleepStage::Awake, SleepStage::Light, SleepStage::Deep, SleepStage::Rem];

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "awake" | "wake" => Some(Self::Awake),
            "light" | "light sleep" => Some(Self::Light),
            "deep" | "deep sleep" => Some(Self::Deep),
            "rem" | "rem sleep" => Some(Self::Rem),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Awake => "Awake",
            Self::Light => "Light",
            Self::Deep => "Deep",
            Self::Rem => "REM",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SleepRecord {
    pub patient_id: String,
    /// Calendar date the night starts on.
    pub night: NaiveDate,
    pub stage: SleepStage,
    pub minutes: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub at: NaiveDateTime,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub age: f64,
    pub gender: String,
    pub medication: String,
    pub subgroup: String,
}

/// Raw streams for a cohort. Per-patient readings are kept sorted by time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SensorBundle {
    pub sleep: Vec<SleepRecord>,
    pub cgm: BTreeMap<String, Vec<Reading>>,
    pub steps: BTreeMap<String, Vec<Reading>>,
    pub stress: BTreeMap<String, Vec<Reading>>,
    pub demographics: BTreeMap<String, Demographics>,
}

impl SensorBundle {
    /// Checks ordering and value-domain invariants.
    pub fn validate(&self) -> Result<(), FeaturizeError> {
        let streams = [
            ("cgm", &self.cgm, (f64::MIN_POSITIVE, f64::INFINITY)),
            ("steps", &self.steps, (0.0, f64::INFINITY)),
            ("stress", &self.stress, (0.0, 100.0)),
        ];
        for (name, stream, (lo, hi)) in streams {
            for (patient, readings) in stream {
                if readings.windows(2).any(|w| w[0].at >= w[1].at) {
                    return Err(FeaturizeError::InvalidBundle(format!(
                        "{name} timestamps for `{patient}` are not strictly increasing"
                    )));
                }
                if let Some(r) = readings.iter().find(|r| !(r.value >= lo && r.value <= hi)) {
                    return Err(FeaturizeError::InvalidBundle(format!(
                        "{name} value {} for `{patient}` outside [{lo}, {hi}]",
                        r.value
                    )));
                }
            }
        }
        if let Some(r) = self.sleep.iter().find(|r| r.minutes.is_nan() || r.minutes < 0.0) {
            return Err(FeaturizeError::InvalidBundle(format!(
                "negative sleep duration for `{}`",
                r.patient_id
            )));
        }
        Ok(())
    }

    pub fn patients(&self) -> BTreeSet<&str> {
        self.demographics.keys().map(String::as_str).collect()
    }

    fn stage_minutes(&self, patient: &str, night: NaiveDate) -> [f64; 4] {
        let mut minutes = [0.0; 4];
        for r in self
            .sleep
            .iter()
            .filter(|r| r.patient_id == patient && r.night == night)
        {
            minutes[r.stage as usize] += r.minutes;
        }
        minutes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_length: TimeDelta,
    pub overlap_fraction: f64,
    pub min_cgm_readings: usize,
    pub hyper_threshold: f64,
    pub tir_low: f64,
    pub tir_high: f64,
    pub stress_high_threshold: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_length: TimeDelta::hours(2),
            overlap_fraction: 0.5,
            min_cgm_readings: 6,
            hyper_threshold: 180.0,
            tir_low: 70.0,
            tir_high: 180.0,
            stress_high_threshold: 75.0,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), FeaturizeError> {
        let bad = |m: &str| Err(FeaturizeError::InvalidConfig(m.to_owned()));
        if self.window_length <= TimeDelta::zero() {
            return bad("window_length must be positive");
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return bad("overlap_fraction must be in [0, 1)");
        }
        if self.tir_low.partial_cmp(&self.tir_high) != Some(std::cmp::Ordering::Less) {
            return bad("tir_low must be below tir_high");
        }
        if self.hyper_threshold.is_nan() || self.hyper_threshold <= 0.0 {
            return bad("hyper_threshold must be positive");
        }
        if self.stride() <= TimeDelta::zero() {
            return bad("stride rounds to zero");
        }
        Ok(())
    }

    /// `window_length × (1 − overlap_fraction)`, rounded to the millisecond.
    pub fn stride(&self) -> TimeDelta {
        let ms = self.window_length.num_milliseconds() as f64 * (1.0 - self.overlap_fraction);
        TimeDelta::milliseconds(ms.round() as i64)
    }
}

/// Half-open interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Window {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
}

impl Window {
    pub fn contains(&self, t: NaiveDateTime) -> bool {
        t >= self.start && t < self.end
    }
}

/// All windows of `config.window_length` that fit inside `[start, end]`,
/// starting at `start` and advancing by the stride.
pub fn enumerate_windows(start: NaiveDateTime, end: NaiveDateTime, config: &WindowConfig) -> Vec<Window> {
    let stride = config.stride();
    let mut windows = Vec::new();
    if stride <= TimeDelta::zero() || config.window_length <= TimeDelta::zero() {
        return windows;
    }
    let mut t = start;
    while t + config.window_length <= end {
        windows.push(Window {
            start: t,
            end: t + config.window_length,
        });
        t += stride;
    }
    windows
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowFeatures {
    pub mean_steps: f64,
    pub mean_glucose: f64,
    pub hyper_event_count: usize,
    pub tir_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WindowOutcome {
    Features(WindowFeatures),
    Dropped(String),
}

fn readings_in<'a>(readings: &'a [Reading], window: &Window) -> &'a [Reading] {
    let lo = readings.partition_point(|r| r.at < window.start);
    let hi = readings.partition_point(|r| r.at < window.end);
    &readings[lo..hi]
}

/// Number of maximal runs of consecutive values strictly above `threshold`.
pub fn count_hyper_events(glucose: impl IntoIterator<Item = f64>, threshold: f64) -> usize {
    let mut events = 0;
    let mut in_run = false;
    for g in glucose {
        let above = g > threshold;
        if above && !in_run {
            events += 1;
        }
        in_run = above;
    }
    events
}

/// Percentage of values within `[low, high]`.
pub fn time_in_range_pct(glucose: &[f64], low: f64, high: f64) -> f64 {
    if glucose.is_empty() {
        return 0.0;
    }
    let inside = glucose.iter().filter(|&&g| g >= low && g <= high).count();
    100.0 * inside as f64 / glucose.len() as f64
}

pub fn extract_window_features(
    bundle: &SensorBundle,
    patient: &str,
    window: &Window,
    config: &WindowConfig,
) -> WindowOutcome {
    let empty: &[Reading] = &[];
    let cgm = readings_in(bundle.cgm.get(patient).map_or(empty, Vec::as_slice), window);
    if cgm.len() < config.min_cgm_readings {
        return WindowOutcome::Dropped("insufficient CGM".into());
    }
    let glucose: Vec<f64> = cgm.iter().map(|r| r.value).collect();
    let steps = readings_in(bundle.steps.get(patient).map_or(empty, Vec::as_slice), window);
    // A window without step records counts as no recorded activity.
    let mean_steps = if steps.is_empty() {
        0.0
    } else {
        steps.iter().map(|r| r.value).sum::<f64>() / steps.len() as f64
    };
    WindowOutcome::Features(WindowFeatures {
        mean_steps,
        mean_glucose: glucose.iter().sum::<f64>() / glucose.len() as f64,
        hyper_event_count: count_hyper_events(glucose.iter().copied(), config.hyper_threshold),
        tir_pct: time_in_range_pct(&glucose, config.tir_low, config.tir_high),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SleepFeatures {
    pub awake_pct: f64,
    pub light_pct: f64,
    pub deep_pct: f64,
    pub rem_pct: f64,
}

impl SleepFeatures {
    pub fn as_array(&self) -> [f64; 4] {
        [self.awake_pct, self.light_pct, self.deep_pct, self.rem_pct]
    }
}

pub fn extract_sleep_features(
    bundle: &SensorBundle,
    patient: &str,
    night: NaiveDate,
) -> Result<SleepFeatures, FeaturizeError> {
    let minutes = bundle.stage_minutes(patient, night);
    let total: f64 = minutes.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(FeaturizeError::MissingNight {
            patient: patient.to_owned(),
            night,
        });
    }
    let pct = |m: f64| 100.0 * m / total;
    Ok(SleepFeatures {
        awake_pct: pct(minutes[0]),
        light_pct: pct(minutes[1]),
        deep_pct: pct(minutes[2]),
        rem_pct: pct(minutes[3]),
    })
}

/// Mean daily stress strictly above the threshold gives label 1.
pub fn label_windows(
    bundle: &SensorBundle,
    patient: &str,
    day: NaiveDate,
    config: &WindowConfig,
) -> Result<Label, FeaturizeError> {
    let readings = bundle.stress.get(patient).map(Vec::as_slice).unwrap_or(&[]);
    let (sum, n) = readings
        .iter()
        .filter(|r| r.at.date() == day)
        .fold((0.0, 0usize), |(s, n), r| (s + r.value, n + 1));
    if n == 0 {
        return Err(FeaturizeError::NoStressData {
            patient: patient.to_owned(),
            day,
        });
    }
    Ok(Label::from(sum / n as f64 > config.stress_high_threshold))
}

/// Hour of the following morning at which a night counts as completed.
pub const NIGHT_END_HOUR: u32 = 8;
/// Windows starting later than this after the last completed night are dropped.
pub const MAX_SLEEP_GAP_HOURS: i64 = 36;
pub const TRAIN_PATIENT_FRACTION: f64 = 0.8;

pub const FEATURE_NAMES: [&str; 12] = [
    "awake_pct",
    "light_pct",
    "deep_pct",
    "rem_pct",
    "mean_steps",
    "mean_glucose",
    "hyper_events",
    "tir_pct",
    "age",
    "gender",
    "medication",
    "subgroup",
];

fn night_end(night: NaiveDate) -> NaiveDateTime {
    (night + TimeDelta::days(1))
        .and_hms_opt(NIGHT_END_HOUR, 0, 0)
        .expect("valid hour")
}

/// Most recent night completed at or before `t`, if within the gap limit.
fn preceding_night(nights: &[NaiveDate], t: NaiveDateTime) -> Option<NaiveDate> {
    let idx = nights.partition_point(|&n| night_end(n) <= t);
    let night = *nights.get(idx.checked_sub(1)?)?;
    (t - night_end(night) <= TimeDelta::hours(MAX_SLEEP_GAP_HOURS)).then_some(night)
}

/// The 12-feature schema, with category vocabularies taken from the cohort.
pub fn cohort_schema(bundle: &SensorBundle) -> Result<FeatureSchema, SchemaError> {
    let vocab = |f: fn(&Demographics) -> &String| -> Vec<String> {
        let set: BTreeSet<&String> = bundle.demographics.values().map(f).collect();
        set.into_iter().cloned().collect()
    };
    FeatureSchema::new(vec![
        FeatureSpec::continuous("awake_pct", Some("%"), true),
        FeatureSpec::continuous("light_pct", Some("%"), true),
        FeatureSpec::continuous("deep_pct", Some("%"), true),
        FeatureSpec::continuous("rem_pct", Some("%"), true),
        FeatureSpec::continuous("mean_steps", Some("steps"), true),
        FeatureSpec::continuous("mean_glucose", Some("mg/dL"), true),
        FeatureSpec::continuous("hyper_events", Some("count"), true),
        FeatureSpec::continuous("tir_pct", Some("%"), true),
        FeatureSpec::continuous("age", Some("years"), false),
        FeatureSpec::categorical("gender", &vocab(|d| &d.gender), false),
        FeatureSpec::categorical("medication", &vocab(|d| &d.medication), false),
        FeatureSpec::categorical("subgroup", &vocab(|d| &d.subgroup), false),
    ])
}

/// All usable samples for one patient, keyed by enumeration index.
pub fn patient_samples(
    bundle: &SensorBundle,
    schema: &FeatureSchema,
    patient: &str,
    config: &WindowConfig,
) -> Vec<Sample> {
    let Some(demo) = bundle.demographics.get(patient) else {
        return Vec::new();
    };
    let Some(cgm) = bundle.cgm.get(patient).filter(|c| !c.is_empty()) else {
        return Vec::new();
    };
    let nights: Vec<NaiveDate> = {
        let set: BTreeSet<NaiveDate> = bundle
            .sleep
            .iter()
            .filter(|r| r.patient_id == patient)
            .map(|r| r.night)
            .collect();
        set.into_iter().collect()
    };
    let code = |feature: &str, value: &str| schema.feature(schema.index_of(feature).unwrap()).code_of(value);
    let (Some(gender), Some(medication), Some(subgroup)) = (
        code("gender", &demo.gender),
        code("medication", &demo.medication),
        code("subgroup", &demo.subgroup),
    ) else {
        return Vec::new();
    };

    let mut labels: BTreeMap<NaiveDate, Option<Label>> = BTreeMap::new();
    let windows = enumerate_windows(cgm[0].at, cgm[cgm.len() - 1].at, config);
    let mut samples = Vec::new();
    for (index, window) in windows.iter().enumerate() {
        let WindowOutcome::Features(wf) = extract_window_features(bundle, patient, window, config) else {
            continue;
        };
        let Some(night) = preceding_night(&nights, window.start) else {
            continue;
        };
        let Ok(sleep) = extract_sleep_features(bundle, patient, night) else {
            continue;
        };
        let day = window.start.date();
        let label = *labels
            .entry(day)
            .or_insert_with(|| label_windows(bundle, patient, day, config).ok());
        let Some(label) = label else {
            continue;
        };
        let mut values = sleep.as_array().to_vec();
        values.extend([
            wf.mean_steps,
            wf.mean_glucose,
            wf.hyper_event_count as f64,
            wf.tir_pct,
            demo.age,
            gender as f64,
            medication as f64,
            subgroup as f64,
        ]);
        samples.push(Sample::new(patient, index as u64, values, label));
    }
    samples
}

/// Splits patient ids into (train, test) with a seeded shuffle.
pub fn split_patients(patients: &[String], seed: u64) -> (Vec<String>, Vec<String>) {
    let mut ids: Vec<String> = patients.to_vec();
    ids.sort();
    ids.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n = ids.len();
    let n_train = ((n as f64 * TRAIN_PATIENT_FRACTION).round() as usize).clamp(1.min(n), n.saturating_sub(1));
    let test = ids.split_off(n_train);
    (ids, test)
}

/// Featurizes the whole cohort and splits it 80/20 by patient.
pub fn build_dataset(
    bundle: &SensorBundle,
    config: &WindowConfig,
    seed: u64,
) -> Result<(Dataset, Dataset), FeaturizeError> {
    config.validate()?;
    bundle.validate()?;
    let schema = cohort_schema(bundle)?;
    let patients: Vec<&str> = bundle.patients().into_iter().collect();
    let mut per_patient: Vec<(String, Vec<Sample>)> = patients
        .par_iter()
        .map(|&p| (p.to_owned(), patient_samples(bundle, &schema, p, config)))
        .filter(|(_, s)| !s.is_empty())
        .collect();
    per_patient.sort_by(|a, b| a.0.cmp(&b.0));
    if per_patient.len() < 2 {
        return Err(FeaturizeError::InsufficientPatients(per_patient.len()));
    }
    let ids: Vec<String> = per_patient.iter().map(|(p, _)| p.clone()).collect();
    let (train_ids, _) = split_patients(&ids, seed);
    let train_set: BTreeSet<&str> = train_ids.iter().map(String::as_str).collect();

    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (patient, samples) in per_patient {
        if train_set.contains(patient.as_str()) {
            train.extend(samples);
        } else {
            test.extend(samples);
        }
    }
    let train = Dataset::new(schema, train, DatasetRole::Train);
    let fitted = fit_ranges(&train)?;
    Ok((
        Dataset::new(fitted.clone(), train.samples, DatasetRole::Train),
        Dataset::new(fitted, test, DatasetRole::Test),
    ))
}
