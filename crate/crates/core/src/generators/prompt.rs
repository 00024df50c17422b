//! Prompt rendering for the LLM generator.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{generate_mock, GenerationRequest, NunIndex};
use crate::schema::{FeatureSchema, Label, Sample};

pub const TEMPLATE_ID: &str = "cf-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    FewShot(usize),
}

impl PromptMode {
    /// `zero` or `few:K`.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "zero" | "zero-shot" => Some(Self::ZeroShot),
            _ => {
                let k: usize = s.strip_prefix("few:")?.parse().ok()?;
                (k >= 1).then_some(Self::FewShot(k))
            }
        }
    }
}

/// A worked (factual, counterfactual) pair drawn from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub factual: Sample,
    pub from_label: Label,
    pub cf_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub mode: PromptMode,
    pub exemplars: Vec<Exemplar>,
    pub template_id: String,
    pub class_names: [String; 2],
}

impl Default for PromptSpec {
    fn default() -> Self {
        Self::zero_shot()
    }
}

impl PromptSpec {
    pub fn zero_shot() -> Self {
        Self {
            mode: PromptMode::ZeroShot,
            exemplars: Vec::new(),
            template_id: TEMPLATE_ID.to_owned(),
            class_names: ["not stressed".to_owned(), "stressed".to_owned()],
        }
    }

    /// Few-shot with `k = exemplars.len()`; zero-shot when the list is empty.
    pub fn few_shot(exemplars: Vec<Exemplar>) -> Self {
        if exemplars.is_empty() {
            return Self::zero_shot();
        }
        Self {
            mode: PromptMode::FewShot(exemplars.len()),
            exemplars,
            ..Self::zero_shot()
        }
    }
}

/// Up to `k` exemplars: the training samples nearest to the factual that the
/// model assigns to the factual's current class, each paired with its
/// NUN-copy counterfactual. Pairs whose copy does not flip are skipped, and
/// the factual itself is never used.
pub fn select_exemplars(req: &GenerationRequest<'_>, train: &NunIndex, k: usize) -> Vec<Exemplar> {
    let current = 1 - req.desired_label;
    let mut out = Vec::new();
    for i in train.nearest_k(&req.factual.values, current, train.len()) {
        if out.len() == k {
            break;
        }
        let sample = &train.data.samples[i];
        if sample.values == req.factual.values {
            continue;
        }
        let sub = GenerationRequest {
            factual: sample,
            ..*req
        };
        if let Ok(cf) = generate_mock(&sub, train) {
            if cf.valid && cf.cf_values != sample.values {
                out.push(Exemplar {
                    factual: sample.clone(),
                    from_label: current,
                    cf_values: cf.cf_values,
                });
            }
        }
    }
    out
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_owned()
    } else {
        s.to_owned()
    }
}

fn json_value(schema: &FeatureSchema, i: usize, v: f64) -> Value {
    let spec = schema.feature(i);
    if spec.is_categorical() {
        Value::String(schema.format_value(i, v))
    } else {
        fmt_num(v)
            .parse::<serde_json::Number>()
            .map(Value::Number)
            .unwrap_or(Value::Null)
    }
}

fn object(schema: &FeatureSchema, values: &[f64], only: Option<&[f64]>) -> String {
    let mut map = Map::new();
    for (i, &v) in values.iter().enumerate() {
        if only.is_some_and(|f| f[i] == v) {
            continue;
        }
        map.insert(schema.feature(i).name.clone(), json_value(schema, i, v));
    }
    Value::Object(map).to_string()
}

fn allowed(schema: &FeatureSchema, i: usize) -> String {
    let spec = schema.feature(i);
    if spec.is_categorical() {
        let names: Vec<&str> = match spec.allowed_codes() {
            Some(codes) => codes.iter().map(|&c| spec.categories()[c].as_str()).collect(),
            None => spec.categories().iter().map(String::as_str).collect(),
        };
        format!("{{{}}}", names.join(", "))
    } else {
        match spec.range() {
            Some((lo, hi)) => format!("[{}, {}]", fmt_num(lo), fmt_num(hi)),
            None => "any".to_owned(),
        }
    }
}

pub fn render_prompt(req: &GenerationRequest<'_>, spec: &PromptSpec) -> String {
    let schema = req.schema;
    let names = &spec.class_names;
    let current = 1 - req.desired_label;
    let class = |l: Label| format!("{l} ({})", names[usize::from(l)]);
    let mut p = String::new();

    p.push_str(&format!(
        "You are explaining a binary classifier that predicts {} vs {}.\n",
        class(0),
        class(1)
    ));
    p.push_str(&format!(
        "Task: change the prediction from {} to {} with as few and as small feature changes as possible. \
         Keep every value realistic.\n\n",
        class(current),
        class(req.desired_label)
    ));

    p.push_str("Features:\n| feature | current value | unit | allowed range | mutable |\n");
    for (i, f) in schema.features().iter().enumerate() {
        let value = if f.is_categorical() {
            schema.format_value(i, req.factual.values[i])
        } else {
            fmt_num(req.factual.values[i])
        };
        p.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            f.name,
            value,
            f.unit().unwrap_or("-"),
            allowed(schema, i),
            if f.mutable { "yes" } else { "no" }
        ));
    }

    let immutable: Vec<&str> = schema
        .immutable_indices()
        .iter()
        .map(|&i| schema.feature(i).name.as_str())
        .collect();
    p.push_str("\nImmutable features (must not change): ");
    p.push_str(
        if immutable.is_empty() {
            "none".into()
        } else {
            immutable.join(", ")
        }
        .as_str(),
    );
    p.push('\n');

    if let PromptMode::FewShot(_) = spec.mode {
        p.push_str("\nExamples:\n");
        for (n, ex) in spec.exemplars.iter().enumerate() {
            p.push_str(&format!("Example {}\n", n + 1));
            p.push_str(&format!(
                "Input (predicted {}): {}\n",
                class(ex.from_label),
                object(schema, &ex.factual.values, None)
            ));
            p.push_str(&format!(
                "Answer (predicted {}): {}\n",
                class(1 - ex.from_label),
                object(schema, &ex.cf_values, Some(&ex.factual.values))
            ));
        }
    }

    p.push_str(
        "\nOutput format: reply with a single JSON object that maps each feature you change to its new value, \
         for example {\"<feature>\": <new value>}. Omit unchanged features. Use numbers for continuous \
         features and one of the listed values for categorical features. Do not change immutable features.\n",
    );
    p
}
