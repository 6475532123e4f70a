//! Checks that numbers in generated text come from recorded data.
//!
//! A numeric token is a maximal run of ASCII alphanumerics and dots that
//! parses as a number once trailing dots are dropped; runs containing
//! letters (`2CHCS`, `g03`, digests) are not numbers. Signs are ignored. A
//! token with `d` decimals is supported by a source value that rounds to it
//! at `d` decimals.

use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericToken {
    pub value: f64,
    pub decimals: usize,
}

pub fn numeric_tokens(text: &str) -> Vec<NumericToken> {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '.'))
        .filter_map(|run| {
            let run = run.trim_matches('.');
            if run.is_empty() || !run.bytes().all(|b| b.is_ascii_digit() || b == b'.') {
                return None;
            }
            let value: f64 = run.parse().ok()?;
            let decimals = run.split_once('.').map_or(0, |(_, f)| f.len());
            Some(NumericToken { value, decimals })
        })
        .collect()
}

/// Every number found in a JSON document: numeric fields plus the numeric
/// tokens of its strings.
#[derive(Debug, Clone, Default)]
pub struct NumberSet(Vec<f64>);

impl NumberSet {
    pub fn new() -> Self {
        NumberSet::default()
    }

    pub fn from_json(v: &Value) -> Self {
        let mut s = NumberSet::new();
        s.add_json(v);
        s
    }

    pub fn add_json(&mut self, v: &Value) {
        match v {
            Value::Number(n) => self.0.extend(n.as_f64().map(f64::abs)),
            Value::String(t) => self.add_text(t),
            Value::Array(a) => a.iter().for_each(|x| self.add_json(x)),
            Value::Object(o) => o.iter().for_each(|(k, x)| {
                self.add_text(k);
                self.add_json(x);
            }),
            Value::Bool(_) | Value::Null => {}
        }
    }

    pub fn add_text(&mut self, text: &str) {
        self.0.extend(numeric_tokens(text).into_iter().map(|t| t.value));
    }

    pub fn supports(&self, t: NumericToken) -> bool {
        let tol = 0.5 * 10f64.powi(-(t.decimals as i32)) + 1e-9 * t.value.max(1.0);
        self.0.iter().any(|p| (p - t.value).abs() <= tol)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Tokens of `text` that `source` does not support, as written.
pub fn unsupported_numbers(text: &str, source: &NumberSet) -> Vec<String> {
    let mut out = Vec::new();
    for run in text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '.')) {
        for t in numeric_tokens(run) {
            if !source.supports(t) {
                out.push(run.trim_matches('.').to_string());
            }
        }
    }
    out
}
