//! Run manifests: one JSON file per stage tying outputs to their inputs,
//! seed, and config hash.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use condgan_core::checkpoint::sha256_hex;
use condgan_core::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArtifactRef {
    /// File name relative to the workdir, so manifests are identical
    /// across working directories.
    pub name: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<ArtifactRef>,
    pub outputs: Vec<ArtifactRef>,
    pub wall_time_secs: f64,
    pub version: String,
}

fn artifact_ref(workdir: &Path, name: &str) -> Result<ArtifactRef> {
    let bytes = std::fs::read(workdir.join(name))?;
    Ok(ArtifactRef {
        name: name.to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Hashes the named files as they sit on disk and writes
/// `manifest-<command>.json` into the workdir.
pub fn write_manifest(
    workdir: &Path,
    command: &str,
    config_hash: &str,
    seed: u64,
    inputs: &[&str],
    outputs: &[&str],
    started: Instant,
) -> Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        config_hash: config_hash.to_string(),
        seed,
        inputs: inputs
            .iter()
            .map(|n| artifact_ref(workdir, n))
            .collect::<Result<_>>()?,
        outputs: outputs
            .iter()
            .map(|n| artifact_ref(workdir, n))
            .collect::<Result<_>>()?,
        wall_time_secs: started.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let path = workdir.join(format!("manifest-{command}.json"));
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    std::fs::write(&path, bytes)?;
    Ok(())
}

/// Loads a manifest back, mostly for the read-only report stage.
pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_and_hashes_disk_state() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.bin"), b"hello").unwrap();
        std::fs::write(dir.path().join("b.bin"), b"world").unwrap();
        write_manifest(
            dir.path(),
            "test-stage",
            "deadbeef",
            42,
            &["a.bin"],
            &["b.bin"],
            Instant::now(),
        )
        .unwrap();

        let m = load_manifest(&dir.path().join("manifest-test-stage.json")).unwrap();
        assert_eq!(m.command, "test-stage");
        assert_eq!(m.seed, 42);
        assert_eq!(m.inputs.len(), 1);
        assert_eq!(m.inputs[0].name, "a.bin");
        assert_eq!(m.inputs[0].sha256, sha256_hex(b"hello"));
        assert_eq!(m.outputs[0].sha256, sha256_hex(b"world"));
    }

    #[test]
    fn missing_artifact_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = write_manifest(dir.path(), "x", "h", 1, &[], &["ghost.bin"], Instant::now())
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
