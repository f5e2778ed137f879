//! Artifact writing, run manifests and replay.

use std::path::{Path, PathBuf};

use minimax_lq::powergrid::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::commands::{self, Seeds};
use crate::{CliError, Command, RunArgs};

pub const MANIFEST_NAME: &str = "manifest.json";
const DEFAULT_OUT_DIR: &str = "out";

/// One output file, held in memory until the command succeeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    pub fn new(name: &str, contents: String) -> Self {
        Self { name: name.to_string(), contents }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub name: String,
    pub sha256: String,
}

/// Everything needed to reproduce a run byte for byte. No timestamps or
/// host details, so re-running writes the same manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub args: RunArgs,
    pub scenario_sha256: Option<String>,
    pub seeds: Seeds,
    pub outputs: Vec<OutputDigest>,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for a in artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.contents).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

fn digests(artifacts: &[Artifact]) -> Vec<OutputDigest> {
    let mut out: Vec<OutputDigest> = artifacts
        .iter()
        .map(|a| OutputDigest { name: a.name.clone(), sha256: sha256_hex(a.contents.as_bytes()) })
        .collect();
    out.sort_by(|a, b| a.name.cmp(&b.name));
    out
}

/// Runs a command, writes its artifacts and manifest, and returns the
/// output directory.
pub fn run_and_write(command: Command, args: &RunArgs) -> Result<PathBuf, CliError> {
    let run = commands::run(command, args)?;
    let dir = args.out.clone().or(run.out_dir).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command,
        args: args.clone(),
        scenario_sha256: run.scenario_sha256,
        seeds: run.seeds,
        outputs: digests(&run.artifacts),
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    let mut artifacts = run.artifacts;
    artifacts.push(Artifact::new(MANIFEST_NAME, json));
    write_all(&dir, &artifacts)?;
    Ok(dir)
}

/// Re-runs the command recorded in a manifest and checks every output
/// against its recorded digest. Returns the number of files compared.
pub fn replay(manifest_path: &Path, out: Option<&Path>) -> Result<usize, CliError> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| io_err(manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("malformed manifest: {e}")))?;
    if let (Some(path), Some(recorded)) = (&manifest.args.scenario, &manifest.scenario_sha256) {
        let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
        let actual = sha256_hex(&bytes);
        if &actual != recorded {
            return Err(CliError::Usage(format!(
                "scenario {} has changed since the manifest was written ({recorded} recorded, {actual} now)",
                path.display()
            )));
        }
    }
    let run = commands::run(manifest.command, &manifest.args)?;
    let fresh = digests(&run.artifacts);
    let mut differing: Vec<String> =
        manifest.outputs.iter().filter(|d| !fresh.contains(d)).map(|d| d.name.clone()).collect();
    differing
        .extend(fresh.iter().filter(|d| !manifest.outputs.iter().any(|o| o.name == d.name)).map(|d| d.name.clone()));
    if let Some(dir) = out {
        write_all(dir, &run.artifacts)?;
    }
    if differing.is_empty() {
        Ok(fresh.len())
    } else {
        Err(CliError::ReplayMismatch(differing))
    }
}
