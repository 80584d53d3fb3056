//! Run manifest and atomic file output.
//!
//! Every emitted file is written to a sibling temp file and renamed into
//! place, so a crash never leaves a truncated artifact behind. The
//! manifest records enough to re-identify a build: config hash, seed,
//! module versions, grid dimensions, build telemetry, and stage wall
//! times. The wall times are measurements and are the one part of an
//! output tree that varies between otherwise identical runs; they live
//! here, not in the artifact store, so rebuilt artifacts stay
//! byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hazbn::study::{BuildTelemetry, StageTiming, StudyArtifacts};

use crate::CliError;

/// Name and version of one workspace module.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleVersion {
    pub name: String,
    pub version: String,
}

/// Grid dimensions of a build, for quick inspection without loading the
/// tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub n_dp: usize,
    pub n_vf: usize,
    pub n_rmax: usize,
    pub n_theta: usize,
    pub n_x0: usize,
    /// Product of the five axis cardinalities.
    pub parameter_combinations: usize,
    /// Per channel: `(label, n_rhat, n_r)`.
    pub channels: Vec<(String, usize, usize)>,
}

/// Record of one build run, written atomically at run end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub label: String,
    pub modules: Vec<ModuleVersion>,
    /// SHA-256 of the config file bytes.
    pub config_sha256: String,
    /// Seed the stage seeds were derived from (after any override).
    pub seed: u64,
    /// Thread cap in force, if one was set.
    pub threads: Option<usize>,
    pub dims: GridDims,
    pub telemetry: BuildTelemetry,
    /// Wall time per pipeline stage — the one nondeterministic field.
    pub timings: Vec<StageTiming>,
}

pub fn module_versions() -> Vec<ModuleVersion> {
    vec![
        ModuleVersion {
            name: "hazbn".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        ModuleVersion {
            name: "hazbn-cli".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    ]
}

/// SHA-256 of a file's bytes, lowercase hex.
pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Dimensions summary straight from the built tables.
pub fn grid_dims(artifacts: &StudyArtifacts) -> GridDims {
    // dp_given_i has scope [i, dp]; the chain CPTs carry the rest.
    let n_dp = artifacts.cpts.dp_given_i.cards()[1];
    let n_vf = artifacts.cpts.vf_given_dp.cards()[1];
    let n_rmax = artifacts.cpts.rmax_given_dp_vf.cards()[2];
    let n_theta = artifacts.cpts.theta_given_dp_vf_rmax.cards()[3];
    let n_x0 = artifacts.cpts.x0.cards()[0];
    GridDims {
        n_dp,
        n_vf,
        n_rmax,
        n_theta,
        n_x0,
        parameter_combinations: n_dp * n_vf * n_rmax * n_theta * n_x0,
        channels: artifacts
            .channels
            .iter()
            .map(|c| {
                (
                    c.label.clone(),
                    c.rbins.rhat().n_bins(),
                    c.rbins.r().n_bins(),
                )
            })
            .collect(),
    }
}

/// Writes bytes atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io_err = |source: std::io::Error| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)?;
    Ok(())
}

/// Serializes a value to pretty JSON (newline-terminated) atomically.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Reads a JSON file into a value.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}
