//! Line-oriented `key=value` reports with `[section]` headers, and the same
//! content as a JSON object.

use std::fmt::Write;

use serde_json::{Map, Value as Json};

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl Value {
    fn text(&self) -> String {
        match self {
            Value::Num(v) => format!("{v}"),
            Value::Int(v) => v.to_string(),
            Value::Bool(v) => v.to_string(),
            Value::Text(v) => v.clone(),
        }
    }

    fn json(&self) -> Json {
        match self {
            // infinite thresholds have no JSON number form
            Value::Num(v) if !v.is_finite() => Json::String(format!("{v}")),
            Value::Num(v) => serde_json::Number::from_f64(*v).map_or(Json::Null, Json::Number),
            Value::Int(v) => Json::from(*v),
            Value::Bool(v) => Json::Bool(*v),
            Value::Text(v) => Json::String(v.clone()),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Num(v)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as u64)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    top: Vec<(String, Value)>,
    sections: Vec<(String, Vec<(String, Value)>)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<Value>) -> &mut Self {
        self.top.push((key.into(), value.into()));
        self
    }

    /// Appends to `section`, creating it after the existing ones.
    pub fn set_in(&mut self, section: &str, key: impl Into<String>, value: impl Into<Value>) -> &mut Self {
        let idx = match self.sections.iter().position(|(s, _)| s == section) {
            Some(i) => i,
            None => {
                self.sections.push((section.to_string(), Vec::new()));
                self.sections.len() - 1
            }
        };
        self.sections[idx].1.push((key.into(), value.into()));
        self
    }

    pub fn get(&self, section: Option<&str>, key: &str) -> Option<&Value> {
        let entries = match section {
            None => &self.top,
            Some(s) => &self.sections.iter().find(|(n, _)| n == s)?.1,
        };
        entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.iter().map(|(s, _)| s.as_str())
    }

    pub fn section_keys(&self, section: &str) -> Vec<&str> {
        self.sections
            .iter()
            .find(|(n, _)| n == section)
            .map(|(_, e)| e.iter().map(|(k, _)| k.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.top {
            writeln!(out, "{k}={}", v.text()).unwrap();
        }
        for (name, entries) in &self.sections {
            if !out.is_empty() {
                out.push('\n');
            }
            writeln!(out, "[{name}]").unwrap();
            for (k, v) in entries {
                writeln!(out, "{k}={}", v.text()).unwrap();
            }
        }
        out
    }

    /// Keys keep their insertion order; sections become nested objects.
    pub fn to_json(&self) -> String {
        let mut root = Map::new();
        for (k, v) in &self.top {
            root.insert(k.clone(), v.json());
        }
        for (name, entries) in &self.sections {
            let obj: Map<String, Json> = entries.iter().map(|(k, v)| (k.clone(), v.json())).collect();
            root.insert(name.clone(), Json::Object(obj));
        }
        let mut s = serde_json::to_string_pretty(&Json::Object(root)).unwrap();
        s.push('\n');
        s
    }

    pub fn render(&self, json: bool) -> String {
        if json {
            self.to_json()
        } else {
            self.to_text()
        }
    }
}

/// Reads back a text report: `(section, key, value)` triples, top-level
/// keys with an empty section.
pub fn parse_text(text: &str) -> Vec<(String, String, String)> {
    let mut section = String::new();
    let mut out = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.to_string();
        } else if let Some((k, v)) = line.split_once('=') {
            out.push((section.clone(), k.to_string(), v.to_string()));
        }
    }
    out
}
