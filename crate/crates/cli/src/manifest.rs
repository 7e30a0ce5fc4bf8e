//! Run manifests: the reproducibility record written at the end of every
//! command. The digests are computed from the files as they exist on disk,
//! so `sha256sum` on the outputs must reproduce them exactly.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use pvi_core::error::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct EnvFingerprint {
    pub os: &'static str,
    pub arch: &'static str,
    /// Worker threads actually used by this run.
    pub threads: usize,
    /// Raw value of `PVI_THREADS`, when set.
    pub thread_override: Option<String>,
}

impl EnvFingerprint {
    pub fn collect(threads: usize) -> Self {
        EnvFingerprint {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            threads,
            thread_override: std::env::var("PVI_THREADS").ok(),
        }
    }
}

/// Accumulates the manifest while a command runs.
pub struct ManifestBuilder {
    command: &'static str,
    argv: Vec<String>,
    seed: u64,
    config: serde_json::Value,
    resolved: serde_json::Value,
    environment: EnvFingerprint,
    timings_ms: BTreeMap<&'static str, u128>,
    phase_started: Instant,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    artifact_version: &'static str,
    command: &'static str,
    argv: &'a [String],
    seed: u64,
    config: &'a serde_json::Value,
    resolved: &'a serde_json::Value,
    environment: &'a EnvFingerprint,
    timings_ms: &'a BTreeMap<&'static str, u128>,
    /// File name -> lowercase hex SHA-256 of the file's bytes.
    outputs: BTreeMap<String, String>,
}

impl ManifestBuilder {
    pub fn new(
        command: &'static str,
        seed: u64,
        config_echo: serde_json::Value,
        threads: usize,
    ) -> Self {
        ManifestBuilder {
            command,
            argv: std::env::args().collect(),
            seed,
            config: config_echo,
            resolved: serde_json::Value::Null,
            environment: EnvFingerprint::collect(threads),
            timings_ms: BTreeMap::new(),
            phase_started: Instant::now(),
        }
    }

    /// Record the effective parameters of the run (defaults applied).
    pub fn resolved(&mut self, value: serde_json::Value) {
        self.resolved = value;
    }

    /// Close the current phase under `name` and start the next one.
    pub fn phase(&mut self, name: &'static str) {
        let elapsed = self.phase_started.elapsed().as_millis();
        *self.timings_ms.entry(name).or_insert(0) += elapsed;
        self.phase_started = Instant::now();
    }

    /// Digest the listed output files and write `manifest.json` next to them.
    pub fn finish(mut self, out_dir: &Path, outputs: &[&str]) -> Result<()> {
        self.phase("write");
        let mut digests = BTreeMap::new();
        for name in outputs {
            let path = out_dir.join(name);
            let bytes = std::fs::read(&path).map_err(|e| {
                Error::Config(format!("cannot digest {}: {e}", path.display()))
            })?;
            digests.insert((*name).to_string(), hex(&Sha256::digest(&bytes)));
        }
        let manifest = RunManifest {
            artifact_version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            argv: &self.argv,
            seed: self.seed,
            config: &self.config,
            resolved: &self.resolved,
            environment: &self.environment,
            timings_ms: &self.timings_ms,
            outputs: digests,
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
        write_text(&out_dir.join("manifest.json"), &text)
    }
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Write a text file, creating parent directories as needed.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| Error::Config(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, text)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}
