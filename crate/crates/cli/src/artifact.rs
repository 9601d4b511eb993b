//! Artifact files: sorted-key JSON and CSV, both stamped with the tool
//! version and the config hash.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::{CmdResult, Failure};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// SHA-256 of the canonical (sorted-key, compact) form of `doc`.
pub fn config_hash(doc: &Value) -> String {
    let canonical = serde_json::to_string(doc).expect("a JSON value always serialises");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub fn to_value<T: Serialize>(x: &T) -> CmdResult<Value> {
    serde_json::to_value(x).map_err(|e| Failure::Config(format!("cannot serialise report: {e}")))
}

/// Writes artifacts into one output directory.
pub struct Writer {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path, hash: &str) -> CmdResult<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash: hash.to_string(),
            written: Vec::new(),
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn put(&mut self, name: &str, text: &str) -> CmdResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    /// `{"kind", "tool", "version", "config_sha256", "body"}` with sorted keys.
    pub fn json(&mut self, name: &str, kind: &str, body: Value) -> CmdResult<()> {
        let mut doc = Map::new();
        doc.insert("kind".into(), Value::from(kind));
        doc.insert("tool".into(), Value::from("conelq"));
        doc.insert("version".into(), Value::from(VERSION));
        doc.insert("config_sha256".into(), Value::from(self.hash.clone()));
        doc.insert("body".into(), body);
        let mut text = serde_json::to_string_pretty(&Value::Object(doc)).expect("a JSON value always serialises");
        text.push('\n');
        self.put(name, &text)
    }

    /// CSV body prefixed by a `#` provenance line.
    pub fn csv(&mut self, name: &str, body: &[u8]) -> CmdResult<()> {
        let mut text = format!("# conelq {VERSION} config_sha256={}\n", self.hash);
        text.push_str(std::str::from_utf8(body).expect("CSV writers emit UTF-8"));
        self.put(name, &text)
    }

    /// Flattened `key,value` CSV of a JSON report.
    pub fn flat_csv(&mut self, name: &str, body: &Value) -> CmdResult<()> {
        let mut rows = Vec::new();
        flatten("", body, &mut rows);
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Failure::Config(format!("cannot format {name}: {e}"));
        w.write_record(["key", "value"]).map_err(io)?;
        for (k, v) in rows {
            w.write_record([k, v]).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Failure::Config(format!("cannot format {name}: {e}")))?;
        self.csv(name, &bytes)
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, x)| flatten(&join(k), x, out)),
        Value::Array(xs) => xs.iter().enumerate().for_each(|(i, x)| flatten(&join(&i.to_string()), x, out)),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), String::new())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Aligned two-column console table.
pub fn print_table(title: &str, rows: &[(String, String)]) {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{title}");
    for (k, v) in rows {
        let _ = writeln!(out, "  {k:<width$}  {v}");
    }
}

pub fn num(x: f64) -> String {
    format!("{x:.10e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flattening_uses_dotted_keys() {
        let v = serde_json::json!({"a": {"b": [1.5, true]}, "c": null, "d": "x"});
        let mut rows = Vec::new();
        flatten("", &v, &mut rows);
        let want = [("a.b.0", "1.5"), ("a.b.1", "true"), ("c", ""), ("d", "x")];
        let got: Vec<(&str, &str)> = rows.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn hash_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"x": 1, "y": [2, 3]}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"y": [2, 3], "x": 1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_ne!(config_hash(&a), config_hash(&serde_json::json!({"x": 2, "y": [2, 3]})));
    }
}
