//! Parsing and repair of LLM replies.

use serde_json::{Map, Value};
use thiserror::Error;

use super::GenerationRequest;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse failure: {0}")]
pub struct ParseFailure(pub String);

#[derive(Debug, Clone, PartialEq)]
pub struct Repaired {
    pub values: Vec<f64>,
    /// One note per immutable feature that was reset to its factual value.
    pub repairs: Vec<String>,
}

/// The first brace-balanced `{...}` span, ignoring braces inside strings.
pub fn extract_json_object(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let mut from = 0;
    while let Some(off) = text[from..].find('{') {
        let start = from + off;
        let (mut depth, mut in_str, mut escaped) = (0usize, false, false);
        for (j, &b) in bytes.iter().enumerate().skip(start) {
            if in_str {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        let candidate = &text[start..=j];
                        if serde_json::from_str::<Value>(candidate).is_ok() {
                            return Some(candidate);
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
        from = start + 1;
    }
    None
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().trim_end_matches('%').trim().parse().ok(),
        _ => None,
    }
}

/// Applies a "changed features only" JSON reply to the factual.
///
/// Unknown names, non-finite or non-numeric continuous values, and
/// categorical values outside the allowed set are failures. Continuous
/// values outside the training range are kept as-is.
pub fn parse_and_repair(text: &str, req: &GenerationRequest<'_>) -> Result<Repaired, ParseFailure> {
    let schema = req.schema;
    let raw = extract_json_object(text).ok_or_else(|| ParseFailure("no JSON".into()))?;
    let map: Map<String, Value> = match serde_json::from_str(raw) {
        Ok(Value::Object(m)) => m,
        _ => return Err(ParseFailure("no JSON".into())),
    };
    let mut values = req.factual.values.clone();
    let mut repairs = Vec::new();
    for (name, v) in &map {
        let i = schema
            .index_of(name)
            .or_else(|| schema.names().position(|n| n.eq_ignore_ascii_case(name)))
            .ok_or_else(|| ParseFailure(format!("unknown feature {name:?}")))?;
        let spec = schema.feature(i);
        let value = if spec.is_categorical() {
            let label = match v {
                Value::String(s) => s.trim().to_owned(),
                other => other.to_string(),
            };
            let code = spec
                .code_of(&label)
                .ok_or_else(|| ParseFailure(format!("{}: unknown category {label:?}", spec.name)))?;
            if spec.allowed_codes().is_some_and(|a| !a.contains(&code)) {
                return Err(ParseFailure(format!("{}: {label:?} not in allowed values", spec.name)));
            }
            code as f64
        } else {
            number(v)
                .filter(|x| x.is_finite())
                .ok_or_else(|| ParseFailure(format!("{}: not a finite number: {v}", spec.name)))?
        };
        if !spec.mutable {
            if value != req.factual.values[i] {
                repairs.push(format!(
                    "{}: reset immutable {} -> {}",
                    spec.name,
                    schema.format_value(i, value),
                    schema.format_value(i, req.factual.values[i])
                ));
            }
            continue;
        }
        values[i] = value;
    }
    Ok(Repaired { values, repairs })
}
