//! Loading and writing the raw sensor CSVs.
//!
//! Malformed rows are dropped and counted rather than failing the load.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use log::warn;
use serde::Serialize;

use super::{Demographics, FeaturizeError, Reading, SensorBundle, SleepRecord, SleepStage};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    /// Dropped row count per input file.
    pub dropped: BTreeMap<String, usize>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FeaturizeError + '_ {
    move |source| FeaturizeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f"))
        .ok()
        .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|t| t.naive_utc()))
}

fn format_timestamp(t: NaiveDateTime) -> String {
    t.format("%Y-%m-%dT%H:%M:%S").to_string()
}

fn rows(path: &Path) -> Result<Vec<csv::StringRecord>, FeaturizeError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    Ok(reader.records().filter_map(Result::ok).collect())
}

fn load_readings(
    path: &Path,
    valid: impl Fn(f64) -> bool,
    report: &mut LoadReport,
) -> Result<BTreeMap<String, Vec<Reading>>, FeaturizeError> {
    let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
    let mut out: BTreeMap<String, Vec<Reading>> = BTreeMap::new();
    let mut dropped = 0;
    for row in rows(path)? {
        let parsed = (row.len() == 3)
            .then(|| Some((parse_timestamp(&row[1])?, row[2].parse::<f64>().ok()?)))
            .flatten()
            .filter(|&(_, v)| valid(v));
        match parsed {
            Some((at, value)) => out.entry(row[0].to_owned()).or_default().push(Reading { at, value }),
            None => dropped += 1,
        }
    }
    for readings in out.values_mut() {
        readings.sort_by_key(|r| r.at);
        let before = readings.len();
        readings.dedup_by_key(|r| r.at);
        dropped += before - readings.len();
    }
    if dropped > 0 {
        warn!("{name}: dropped {dropped} malformed rows");
    }
    report.dropped.insert(name, dropped);
    Ok(out)
}

/// Reads `sleep.csv`, `cgm.csv`, `steps.csv`, `stress.csv` and
/// `demographics.csv` from `dir`.
pub fn read_bundle(dir: &Path) -> Result<(SensorBundle, LoadReport), FeaturizeError> {
    let mut report = LoadReport::default();
    let cgm = load_readings(&dir.join("cgm.csv"), |v| v > 0.0 && v.is_finite(), &mut report)?;
    let steps = load_readings(&dir.join("steps.csv"), |v| v >= 0.0 && v.is_finite(), &mut report)?;
    let stress = load_readings(&dir.join("stress.csv"), |v| (0.0..=100.0).contains(&v), &mut report)?;

    let mut sleep = Vec::new();
    let mut dropped = 0;
    for row in rows(&dir.join("sleep.csv"))? {
        let rec = (row.len() == 4)
            .then(|| {
                Some(SleepRecord {
                    patient_id: row[0].to_owned(),
                    night: NaiveDate::parse_from_str(&row[1], "%Y-%m-%d").ok()?,
                    stage: SleepStage::parse(&row[2])?,
                    minutes: row[3].parse::<f64>().ok().filter(|m| *m >= 0.0)?,
                })
            })
            .flatten();
        match rec {
            Some(r) => sleep.push(r),
            None => dropped += 1,
        }
    }
    report.dropped.insert("sleep.csv".into(), dropped);

    let mut demographics = BTreeMap::new();
    let mut dropped = 0;
    for row in rows(&dir.join("demographics.csv"))? {
        let age = row.get(1).and_then(|a| a.parse::<f64>().ok()).filter(|a| a.is_finite());
        match (row.len() == 5, age) {
            (true, Some(age)) => {
                demographics.insert(
                    row[0].to_owned(),
                    Demographics {
                        age,
                        gender: row[2].to_owned(),
                        medication: row[3].to_owned(),
                        subgroup: row[4].to_owned(),
                    },
                );
            }
            _ => dropped += 1,
        }
    }
    report.dropped.insert("demographics.csv".into(), dropped);

    Ok((
        SensorBundle {
            sleep,
            cgm,
            steps,
            stress,
            demographics,
        },
        report,
    ))
}

fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), FeaturizeError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| FeaturizeError::InvalidBundle(e.to_string()))?;
    let to_err = |e: csv::Error| FeaturizeError::InvalidBundle(e.to_string());
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(to_err)?;
    }
    w.flush().map_err(io_err(path))
}

fn readings_rows(stream: &BTreeMap<String, Vec<Reading>>) -> impl Iterator<Item = Vec<String>> + '_ {
    stream.iter().flat_map(|(p, rs)| {
        rs.iter()
            .map(move |r| vec![p.clone(), format_timestamp(r.at), format!("{}", r.value)])
    })
}

/// Writes a bundle in the layout [`read_bundle`] expects.
pub fn write_bundle(bundle: &SensorBundle, dir: &Path) -> Result<(), FeaturizeError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_csv(
        &dir.join("sleep.csv"),
        &["patient_id", "night_date", "stage", "duration_min"],
        bundle.sleep.iter().map(|r| {
            vec![
                r.patient_id.clone(),
                r.night.format("%Y-%m-%d").to_string(),
                r.stage.as_str().to_owned(),
                format!("{}", r.minutes),
            ]
        }),
    )?;
    write_csv(
        &dir.join("cgm.csv"),
        &["patient_id", "timestamp_iso8601", "glucose_mg_dl"],
        readings_rows(&bundle.cgm),
    )?;
    write_csv(
        &dir.join("steps.csv"),
        &["patient_id", "timestamp", "steps"],
        readings_rows(&bundle.steps),
    )?;
    write_csv(
        &dir.join("stress.csv"),
        &["patient_id", "timestamp", "stress_0_100"],
        readings_rows(&bundle.stress),
    )?;
    write_csv(
        &dir.join("demographics.csv"),
        &["patient_id", "age", "gender", "medication", "subgroup"],
        bundle.demographics.iter().map(|(p, d)| {
            vec![
                p.clone(),
                format!("{}", d.age),
                d.gender.clone(),
                d.medication.clone(),
                d.subgroup.clone(),
            ]
        }),
    )
}
