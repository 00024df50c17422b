//! Deterministic rendering of experiment results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{AugmentationRun, HarnessError, ScenarioKind, SweepRow};
use crate::cfmetrics::{diversity_csv, table3_csv, CFBatchReport, DiversityProfile};
use crate::model::ClassificationReport;
use crate::util::median;

/// Signed relative change with two decimals, using U+2212 for negatives.
pub fn format_delta(delta: Option<f64>) -> String {
    match delta {
        None => "n/a".to_owned(),
        Some(d) => {
            let s = format!("{:.2}", d.abs());
            if d < 0.0 && s != "0.00" {
                format!("\u{2212}{s}%")
            } else {
                format!("+{s}%")
            }
        }
    }
}

type Getter = fn(&ClassificationReport) -> f64;

const METRICS: [(&str, Getter); 5] = [
    ("acc", |r| r.accuracy),
    ("pre", |r| r.precision),
    ("rec", |r| r.recall),
    ("f1", |r| r.f1),
    ("auc", |r| r.auc),
];

pub const TABLE5_HEADER: &str = "scenario,generator,ratio,seeds,\
baseline_acc,baseline_pre,baseline_rec,baseline_f1,baseline_auc,\
reduced_acc,reduced_pre,reduced_rec,reduced_f1,reduced_auc,\
drop_acc,drop_pre,drop_rec,drop_f1,drop_auc,\
augmented_acc,augmented_pre,augmented_rec,augmented_f1,augmented_auc,\
recovery_acc,recovery_pre,recovery_rec,recovery_f1,recovery_auc";

fn medians<'a>(reports: impl Iterator<Item = &'a ClassificationReport> + Clone) -> [f64; 5] {
    METRICS.map(|(_, get)| median(&reports.clone().map(get).collect::<Vec<_>>()))
}

fn push_values(out: &mut String, values: &[f64; 5]) {
    for v in values {
        let _ = write!(out, ",{v:.4}");
    }
}

fn push_deltas(out: &mut String, new: &[f64; 5], old: &[f64; 5]) {
    for (n, o) in new.iter().zip(old) {
        let _ = write!(out, ",{}", format_delta(super::relative_delta(*n, *o)));
    }
}

type GroupKey = (ScenarioKind, String, u64);

fn groups(runs: &[AugmentationRun]) -> BTreeMap<GroupKey, Vec<&AugmentationRun>> {
    let mut g: BTreeMap<GroupKey, Vec<&AugmentationRun>> = BTreeMap::new();
    for r in runs {
        g.entry((r.scenario.kind, r.generator_id.clone(), r.ratio.to_bits()))
            .or_default()
            .push(r);
    }
    g
}

/// One row per (scenario, generator, ratio) with medians across seeds.
/// Deltas compare the medians, not per-seed deltas.
pub fn table5_csv(runs: &[AugmentationRun]) -> String {
    let mut out = String::from(TABLE5_HEADER);
    out.push('\n');
    for ((kind, generator, ratio_bits), rs) in groups(runs) {
        let baseline = medians(rs.iter().map(|r| &r.baseline_report));
        let reduced = medians(rs.iter().map(|r| &r.reduced_report));
        let augmented = medians(rs.iter().map(|r| &r.augmented_report));
        let _ = write!(
            out,
            "{},{generator},{},{}",
            kind.name(),
            f64::from_bits(ratio_bits),
            rs.len()
        );
        push_values(&mut out, &baseline);
        push_values(&mut out, &reduced);
        push_deltas(&mut out, &reduced, &baseline);
        push_values(&mut out, &augmented);
        push_deltas(&mut out, &augmented, &reduced);
        out.push('\n');
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.fraction.total_cmp(&b.fraction).then(a.seed.cmp(&b.seed)));
    let mut out = String::from("fraction,seed,n_train,acc,pre,rec,f1,auc\n");
    for r in sorted {
        let _ = write!(out, "{},{},{}", r.fraction, r.seed, r.n_train);
        push_values(&mut out, &METRICS.map(|(_, get)| get(&r.report)));
        out.push('\n');
    }
    out
}

/// Per-seed pool artifacts, each counted once regardless of ratio count.
fn per_pool<T>(runs: &[AugmentationRun], get: impl Fn(&AugmentationRun) -> Option<&T>) -> BTreeMap<String, Vec<&T>> {
    let mut seen: BTreeMap<(String, ScenarioKind, u64), &T> = BTreeMap::new();
    for r in runs {
        if let Some(x) = get(r) {
            seen.entry((r.generator_id.clone(), r.scenario.kind, r.seed))
                .or_insert(x);
        }
    }
    let mut out: BTreeMap<String, Vec<&T>> = BTreeMap::new();
    for ((generator, _, _), x) in seen {
        out.entry(generator).or_default().push(x);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportBundle {
    pub runs_jsonl: String,
    pub table3: String,
    pub table5: String,
    pub sweep: String,
    pub diversity: String,
}

pub fn render_reports(runs: &[AugmentationRun], sweep: &[SweepRow]) -> Result<ReportBundle, HarnessError> {
    if runs.is_empty() {
        return Err(HarnessError::NoRuns);
    }
    let mut sorted: Vec<&AugmentationRun> = runs.iter().collect();
    sorted.sort_by(|a, b| {
        (a.scenario.kind, &a.generator_id, a.ratio.to_bits(), a.seed).cmp(&(
            b.scenario.kind,
            &b.generator_id,
            b.ratio.to_bits(),
            b.seed,
        ))
    });
    let mut runs_jsonl = String::new();
    for r in sorted {
        runs_jsonl.push_str(&serde_json::to_string(r).map_err(std::io::Error::other)?);
        runs_jsonl.push('\n');
    }
    let cf_reports: Vec<CFBatchReport> = per_pool(runs, |r| r.cf_report.as_ref())
        .into_iter()
        .map(|(g, reports)| CFBatchReport::merge(&g, &reports))
        .collect();
    let profiles: Vec<(String, DiversityProfile)> = per_pool(runs, |r| r.diversity.as_ref())
        .into_iter()
        .filter_map(|(g, ps)| Some((g, DiversityProfile::merge(&ps)?)))
        .collect();
    Ok(ReportBundle {
        runs_jsonl,
        table3: table3_csv(&cf_reports),
        table5: table5_csv(runs),
        sweep: sweep_csv(sweep),
        diversity: diversity_csv(&profiles),
    })
}

pub fn write_reports(bundle: &ReportBundle, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, text) in [
        ("runs.jsonl", &bundle.runs_jsonl),
        ("table3.csv", &bundle.table3),
        ("table5.csv", &bundle.table5),
        ("sweep.csv", &bundle.sweep),
        ("diversity.csv", &bundle.diversity),
    ] {
        std::fs::write(dir.join(name), text)?;
    }
    Ok(())
}
