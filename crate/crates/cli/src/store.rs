//! On-disk artifacts: hashes, manifests and prediction records.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::DataError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// A written file, addressed relative to its output root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

/// Writes `bytes` to `root/rel`, creating parent directories. The file is
/// written under a temporary name first and renamed into place.
pub fn write_artifact(root: &Path, rel: &str, bytes: &[u8]) -> Result<Artifact> {
    let path = root.join(rel);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))?;
    Ok(Artifact { path: rel.to_string(), sha256: sha256_hex(bytes) })
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serialises");
    s.push('\n');
    s.into_bytes()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| DataError::new(format!("{}: {e}", path.display())).into())
}

/// Checks that every artifact still exists with its recorded hash.
pub fn artifacts_intact(root: &Path, artifacts: &[Artifact]) -> bool {
    artifacts
        .iter()
        .all(|a| sha256_file(&root.join(&a.path)).is_ok_and(|h| h == a.sha256))
}

/// One model output. Suite predictions carry the case id and the index of the
/// input within the case (0 is the original); i.i.d. predictions have no case
/// id and index the i.i.d. example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub case_id: Option<u32>,
    pub input_index: usize,
    pub probs: Vec<f64>,
}

pub fn predictions_jsonl(records: &[PredictionRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("record serialises");
        out.push(b'\n');
    }
    out
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| DataError::new(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Manifest of one completed run. It is written last, so its presence marks
/// the run as complete.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub configuration: String,
    pub method: String,
    pub scenario: String,
    pub subset: String,
    pub seed: u64,
    /// Hash over the input hashes and the resolved run configuration.
    pub input_hash: String,
    pub artifacts: Vec<Artifact>,
}

/// What a run directory holds when the runner looks at it.
pub enum RunState {
    Missing,
    Complete,
}

pub fn run_state(root: &Path, dir: &str, input_hash: &str) -> Result<RunState> {
    let path = root.join(dir).join("manifest.json");
    if !path.exists() {
        return Ok(RunState::Missing);
    }
    let manifest: RunManifest = read_json(&path)?;
    if manifest.input_hash != input_hash {
        bail!(DataError::new(format!(
            "{} was produced from different inputs or settings (hash {} , expected {}); \
             use a fresh output directory or remove the stale run",
            path.display(),
            short(&manifest.input_hash),
            short(input_hash)
        )));
    }
    if !artifacts_intact(root, &manifest.artifacts) {
        return Ok(RunState::Missing);
    }
    Ok(RunState::Complete)
}

pub fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

/// Timing is kept apart from the manifests so those stay byte-stable.
pub fn append_timing(root: &Path, run_id: &str, seconds: f64) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(root.join("timing.jsonl"))
        .context("opening timing log")?;
    writeln!(f, "{}", serde_json::json!({ "run": run_id, "seconds": seconds }))?;
    Ok(())
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
