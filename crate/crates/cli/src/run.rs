//! The run directory: every artifact carries the config hash, and reads
//! refuse artifacts written under a different config.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

pub const HASH_PREFIX: &str = "# config_hash=";

pub struct RunDir {
    pub root: PathBuf,
    pub hash: String,
    written: RefCell<Vec<String>>,
}

impl RunDir {
    pub fn new(cfg: &PipelineConfig) -> Self {
        RunDir {
            root: cfg.out_dir.join(&cfg.run_id),
            hash: cfg.hash(),
            written: RefCell::new(Vec::new()),
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).exists()
    }

    /// Artifacts written since the last call.
    pub fn take_written(&self) -> Vec<String> {
        std::mem::take(&mut *self.written.borrow_mut())
    }

    fn prepare(&self, rel: &str) -> CliResult<PathBuf> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        self.written.borrow_mut().push(rel.to_string());
        Ok(p)
    }

    /// Let `f` write the file, then put the hash line in front of it.
    pub fn write_csv_with<F>(&self, rel: &str, f: F) -> CliResult<()>
    where
        F: FnOnce(&Path) -> hpfactor::Result<()>,
    {
        let p = self.prepare(rel)?;
        f(&p)?;
        self.stamp(&p)
    }

    /// Register and stamp a CSV some other writer produced.
    pub fn adopt_csv(&self, rel: &str) -> CliResult<()> {
        let p = self.prepare(rel)?;
        self.stamp(&p)
    }

    pub fn stamp(&self, p: &Path) -> CliResult<()> {
        let body = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
        let body = match body.strip_prefix(HASH_PREFIX) {
            Some(rest) => rest.split_once('\n').map(|(_, b)| b).unwrap_or("").to_string(),
            None => body,
        };
        fs::write(p, format!("{HASH_PREFIX}{}\n{body}", self.hash)).map_err(|e| CliError::io(p, e))
    }

    pub fn write_rows<I>(&self, rel: &str, header: &[&str], rows: I) -> CliResult<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let p = self.prepare(rel)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| CliError::Config(format!("{rel}: {e}"));
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(&r).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Config(format!("{rel}: {e}")))?;
        let mut out = format!("{HASH_PREFIX}{}\n", self.hash).into_bytes();
        out.extend(bytes);
        fs::write(&p, out).map_err(|e| CliError::io(&p, e))
    }

    /// Objects get a `config_hash` field; anything else is wrapped.
    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> CliResult<()> {
        let p = self.prepare(rel)?;
        let mut v = serde_json::to_value(value)?;
        match v.as_object_mut() {
            Some(m) => {
                m.insert("config_hash".into(), Value::String(self.hash.clone()));
            }
            None => {
                v = serde_json::json!({ "config_hash": self.hash, "data": v });
            }
        }
        let text = serde_json::to_string_pretty(&v)?;
        fs::write(&p, text + "\n").map_err(|e| CliError::io(&p, e))
    }

    fn missing(&self, rel: &str, producer: &str) -> CliError {
        CliError::MissingArtifact {
            artifact: self.path(rel).display().to_string(),
            producer: producer.to_string(),
        }
    }

    fn check(&self, rel: &str, found: Option<String>) -> CliResult<()> {
        let found = found.unwrap_or_else(|| "<none>".into());
        if found != self.hash {
            return Err(CliError::HashMismatch {
                artifact: self.path(rel).display().to_string(),
                found,
                expected: self.hash.clone(),
            });
        }
        Ok(())
    }

    /// Path of an upstream CSV after checking it exists and matches.
    pub fn require_csv(&self, rel: &str, producer: &str) -> CliResult<PathBuf> {
        let p = self.path(rel);
        if !p.is_file() {
            return Err(self.missing(rel, producer));
        }
        let f = fs::File::open(&p).map_err(|e| CliError::io(&p, e))?;
        let mut first = String::new();
        BufReader::new(f)
            .read_line(&mut first)
            .map_err(|e| CliError::io(&p, e))?;
        let found = first.trim_end().strip_prefix(HASH_PREFIX).map(str::to_string);
        self.check(rel, found)?;
        Ok(p)
    }

    pub fn read_json<T: DeserializeOwned>(&self, rel: &str, producer: &str) -> CliResult<T> {
        let p = self.path(rel);
        if !p.is_file() {
            return Err(self.missing(rel, producer));
        }
        let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        let mut v: Value = serde_json::from_str(&text)?;
        let found = v.get("config_hash").and_then(Value::as_str).map(str::to_string);
        self.check(rel, found)?;
        if let Some(m) = v.as_object_mut() {
            m.remove("config_hash");
            if m.len() == 1 && m.contains_key("data") {
                return Ok(serde_json::from_value(m.remove("data").expect("key present"))?);
            }
        }
        Ok(serde_json::from_value(v)?)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StepRecord {
    pub seconds: f64,
    pub artifacts: Vec<String>,
    pub warnings: Vec<String>,
    pub validation_failures: Vec<String>,
}

/// `run.json`: provenance and timings. Timings differ between runs, so this
/// file is the one artifact excluded from byte comparisons.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub parallel: bool,
    pub last_command: String,
    pub steps: BTreeMap<String, StepRecord>,
}

impl RunManifest {
    /// Previous manifest of the same config, or a fresh one.
    pub fn load_or_new(run: &RunDir, cfg: &PipelineConfig) -> Self {
        let fresh = RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: run.hash.clone(),
            seed: cfg.seed,
            ..Default::default()
        };
        let p = run.path("run.json");
        match fs::read_to_string(&p).ok().and_then(|t| serde_json::from_str::<RunManifest>(&t).ok()) {
            Some(m) if m.config_hash == run.hash => m,
            _ => fresh,
        }
    }

    pub fn save(&self, run: &RunDir) -> CliResult<()> {
        fs::create_dir_all(&run.root).map_err(|e| CliError::io(&run.root, e))?;
        let p = run.path("run.json");
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&p, text + "\n").map_err(|e| CliError::io(&p, e))
    }
}
