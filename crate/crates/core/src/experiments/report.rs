use std::io::Write;
use std::path::{Path, PathBuf};

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::config::{ExperimentConfig, Format};
use crate::gff::Field;
use crate::stats::McEstimate;

/// One data row: ordered keys with JSON values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Row(Vec<(String, Value)>);

impl Row {
    pub fn new() -> Self {
        Row(Vec::new())
    }

    pub fn with(mut self, key: &str, v: impl Into<Value>) -> Self {
        self.0.push((key.to_string(), v.into()));
        self
    }

    /// `mean`, `stderr`, `n`, `seed` under `name`, `stderr`, `n`, `seed`.
    pub fn estimate(self, name: &str, e: &McEstimate) -> Self {
        self.with(name, e.mean).with("stderr", e.stderr).with("n", e.n).with("seed", e.seed)
    }

    /// An exact value: `stderr = 0` and `n = 0`.
    pub fn exact(self, name: &str, v: f64, seed: u64) -> Self {
        self.with(name, v).with("stderr", 0.0).with("n", 0u64).with("seed", seed)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|(k, _)| k.as_str())
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(Value::as_f64)
    }
}

impl Serialize for Row {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub experiment: String,
    /// SHA-256 of the canonical config JSON.
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub gffdisc_version: &'static str,
    pub schema_version: u32,
    pub target: String,
    pub threads: usize,
    pub wall_time_s: f64,
}

pub const SCHEMA_VERSION: u32 = 1;

impl Provenance {
    pub fn new(cfg: &ExperimentConfig, wall_time_s: f64) -> Self {
        Provenance {
            experiment: cfg.experiment.name().to_string(),
            config_hash: config_hash(cfg),
            config: cfg.clone(),
            gffdisc_version: env!("CARGO_PKG_VERSION"),
            schema_version: SCHEMA_VERSION,
            target: format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
            threads: rayon::current_num_threads(),
            wall_time_s,
        }
    }
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    Sha256::digest(cfg.canonical_json().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub struct Report {
    pub rows: Vec<Row>,
    pub provenance: Provenance,
    /// A field written next to the tables, with its seed.
    pub field: Option<(Field, u64)>,
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn to_csv(rows: &[Row]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(first) = rows.first() {
        let header: Vec<&str> = first.keys().collect();
        w.write_record(&header).map_err(csv_err)?;
        for r in rows {
            if !r.keys().eq(header.iter().copied()) {
                return Err(Error::Format("rows of one report must share their keys".into()));
            }
            w.write_record(r.0.iter().map(|(_, v)| cell(v))).map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn to_json(rows: &[Row]) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(rows).map_err(|e| Error::Format(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

/// Writes `<name>.csv`, `<name>.json`, `<name>.provenance.json` and, when
/// present, `<name>.field` into `dir`. Everything is staged in temporary
/// files in `dir` first and renamed into place only after all of them were
/// written, so a failure leaves no partial output.
pub fn write_report(report: &Report, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let name = &report.provenance.experiment;
    let mut staged: Vec<(tempfile::NamedTempFile, PathBuf)> = Vec::new();
    let mut stage = |bytes: &[u8], file: String| -> Result<()> {
        let mut t = tempfile::NamedTempFile::new_in(dir)?;
        t.write_all(bytes)?;
        t.as_file().sync_all()?;
        staged.push((t, dir.join(file)));
        Ok(())
    };
    if matches!(format, Format::Csv | Format::Both) {
        stage(&to_csv(&report.rows)?, format!("{name}.csv"))?;
    }
    if matches!(format, Format::Json | Format::Both) {
        stage(&to_json(&report.rows)?, format!("{name}.json"))?;
    }
    let mut prov = serde_json::to_vec_pretty(&report.provenance).map_err(|e| Error::Format(e.to_string()))?;
    prov.push(b'\n');
    stage(&prov, format!("{name}.provenance.json"))?;
    if let Some((field, seed)) = &report.field {
        let t = tempfile::NamedTempFile::new_in(dir)?;
        field.save(t.path(), *seed)?;
        staged.push((t, dir.join(format!("{name}.field"))));
    }
    let mut out = Vec::new();
    for (t, path) in staged {
        t.persist(&path).map_err(|e| Error::Io(e.error))?;
        out.push(path);
    }
    Ok(out)
}
