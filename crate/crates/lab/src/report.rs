//! Report envelopes: a header holding everything run-dependent (timestamp,
//! worker count) and a body that is a pure function of config and seed.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub generated_unix: u64,
    pub workers: usize,
}

impl Header {
    pub fn new(command: &str, workers: usize) -> Self {
        let generated_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self { tool: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION"), command: command.into(), generated_unix, workers }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Body<'a, T: Serialize> {
    /// Identifier of the statement the run checks.
    pub claim: &'a str,
    pub config: &'a ExperimentConfig,
    /// `sha256:` digest of the canonical config JSON, output block excluded.
    pub input_hash: String,
    pub result: &'a T,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub header: Header,
    pub body: Body<'a, T>,
}

pub fn input_hash(config: &ExperimentConfig) -> String {
    let mut value = serde_json::to_value(config).expect("config serializes");
    if let Some(map) = value.as_object_mut() {
        map.remove("output");
    }
    let bytes = serde_json::to_vec(&value).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

pub fn body<'a, T: Serialize>(claim: &'a str, config: &'a ExperimentConfig, result: &'a T, pass: bool) -> Body<'a, T> {
    Body { claim, config, input_hash: input_hash(config), result, pass }
}

/// Serialized body alone, the part that must be reproducible.
pub fn body_json<T: Serialize>(body: &Body<'_, T>) -> String {
    serde_json::to_string_pretty(body).expect("report serializes")
}

pub struct OutputDir {
    dir: PathBuf,
}

impl OutputDir {
    pub fn create(dir: impl AsRef<Path>) -> io::Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self { dir: dir.as_ref().to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, envelope: &Envelope<'_, T>) -> io::Result<PathBuf> {
        let p = self.path(name);
        let mut text = serde_json::to_string_pretty(envelope).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(&p, text)?;
        Ok(p)
    }

    pub fn write_csv<R: Serialize>(&self, name: &str, rows: &[R]) -> io::Result<PathBuf> {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(&p)?;
        for r in rows {
            w.serialize(r).map_err(io::Error::other)?;
        }
        w.flush()?;
        Ok(p)
    }
}
