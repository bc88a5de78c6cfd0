//! Output files. Every document carries the command, the resolved config and
//! its SHA-256 hash; every CSV row carries the hash in its last column.

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

pub struct Sink {
    dir: PathBuf,
    command: &'static str,
    config: Value,
    hash: String,
    written: Vec<PathBuf>,
}

/// Hex SHA-256 of the compact JSON of `{command, config}` (keys sorted).
pub fn config_hash(command: &str, config: &Value) -> String {
    let mut doc = Map::new();
    doc.insert("command".into(), Value::String(command.into()));
    doc.insert("config".into(), config.clone());
    let bytes = serde_json::to_vec(&Value::Object(doc)).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Sink {
    pub fn new<C: Serialize>(dir: &Path, command: &'static str, config: &C) -> Result<Self, String> {
        let config = serde_json::to_value(config).map_err(|e| e.to_string())?;
        fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
        Ok(Sink { dir: dir.to_path_buf(), command, hash: config_hash(command, &config), config, written: Vec::new() })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    /// Write `body`'s fields after the header fields `command`,
    /// `config_hash`, `seed` and `config`.
    pub fn json<B: Serialize>(&mut self, name: &str, seed: Option<u64>, body: &B) -> Result<(), String> {
        let mut doc = Map::new();
        doc.insert("command".into(), Value::String(self.command.into()));
        doc.insert("config_hash".into(), Value::String(self.hash.clone()));
        doc.insert("seed".into(), seed.map_or(Value::Null, Value::from));
        doc.insert("config".into(), self.config.clone());
        match serde_json::to_value(body).map_err(|e| e.to_string())? {
            Value::Object(m) => doc.extend(m),
            other => {
                doc.insert("result".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(doc)).map_err(|e| e.to_string())?;
        text.push('\n');
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| format!("cannot write {}: {e}", p.display()))
    }

    /// Write a CSV with `header` plus a trailing `config_hash` column.
    pub fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), String>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let p = self.path(name);
        let err = |e: csv::Error| format!("cannot write {}: {e}", p.display());
        let mut w = csv::Writer::from_path(&p).map_err(err)?;
        w.write_record(header.iter().copied().chain(["config_hash"])).map_err(err)?;
        for row in rows {
            let mut rec: Vec<String> = row.into_iter().collect();
            rec.push(self.hash.clone());
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| format!("cannot write {}: {e}", p.display()))
    }
}

/// Shortest round-trip representation.
pub fn num(v: f64) -> String {
    format!("{v}")
}
