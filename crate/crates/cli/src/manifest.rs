//! Run manifests: what was run, on which inputs, and what came out.

use std::fs;
use std::path::{Path, PathBuf};

use jacdeform::optimizer::LossRecord;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub role: String,
    pub path: String,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalLosses {
    pub iteration: usize,
    pub guidance: f64,
    pub landmark: f64,
    pub opacity: f64,
    pub total: f64,
}

impl From<&LossRecord> for FinalLosses {
    fn from(r: &LossRecord) -> Self {
        Self {
            iteration: r.iteration,
            guidance: r.guidance,
            landmark: r.landmark,
            opacity: r.opacity,
            total: r.total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// Arguments after the program name.
    pub command: Vec<String>,
    /// Working directory the command ran in; relative paths resolve here.
    pub cwd: String,
    /// Resolved configuration in its `key = value` form.
    pub config: String,
    pub config_hash: String,
    /// Endpoint taken from the environment rather than the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance_endpoint_env: Option<String>,
    pub inputs: Vec<FileRecord>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileRecord>,
    pub elapsed_seconds: f64,
    pub final_losses: Option<FinalLosses>,
}

impl RunManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: not a run manifest: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest is plain data");
        fs::write(path, text + "\n").map_err(|e| CliError::io(format!("writing {}", path.display()), e))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the bytes framed as a git blob object (`blob <len>\0<data>`).
pub fn content_hash(data: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", data.len()).as_bytes());
    h.update(data);
    format!("sha256:{}", hex(&h.finalize()))
}

pub fn file_hash(path: &Path) -> CliResult<String> {
    let data = fs::read(path).map_err(|e| CliError::io(format!("hashing {}", path.display()), e))?;
    Ok(content_hash(&data))
}

pub fn record(role: &str, path: &Path) -> CliResult<FileRecord> {
    Ok(FileRecord {
        role: role.to_string(),
        path: path.display().to_string(),
        hash: file_hash(path)?,
    })
}

/// Every file under `dir` except the manifest itself, as sorted relative paths.
pub fn output_records(dir: &Path) -> CliResult<Vec<FileRecord>> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    files
        .into_iter()
        .filter(|rel| rel != Path::new(MANIFEST_NAME))
        .map(|rel| {
            Ok(FileRecord {
                role: "output".into(),
                path: rel.to_string_lossy().replace('\\', "/"),
                hash: file_hash(&dir.join(&rel))?,
            })
        })
        .collect()
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(format!("listing {}", dir.display()), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(format!("listing {}", dir.display()), e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("walked from root").to_path_buf());
        }
    }
    Ok(())
}

/// `argv` with the value of `--out` replaced.
pub fn replace_out(argv: &[String], out: &str) -> CliResult<Vec<String>> {
    let mut result = Vec::with_capacity(argv.len());
    let mut found = false;
    let mut iter = argv.iter();
    while let Some(arg) = iter.next() {
        if arg == "--out" {
            iter.next();
            result.push(arg.clone());
            result.push(out.to_string());
            found = true;
        } else if arg.starts_with("--out=") {
            result.push(format!("--out={out}"));
            found = true;
        } else {
            result.push(arg.clone());
        }
    }
    if !found {
        return Err(CliError::usage("recorded command has no --out"));
    }
    Ok(result)
}
