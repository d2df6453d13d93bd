//! `model.bin` (little-endian f32 tensors in manifest order) plus a
//! `model.json` manifest describing every tensor.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::{PairNet, PairNetConfig};
use crate::error::{Error, Result};
use crate::fsio::{read, write_atomic};
use crate::scalar::Scalar;

pub const WEIGHTS_FILE: &str = "model.bin";
pub const MANIFEST_FILE: &str = "model.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into `model.bin`.
    pub offset: usize,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: PairNetConfig,
    pub seed: u64,
    pub dtype: String,
    pub total_bytes: usize,
    pub sha256: String,
    pub tensors: Vec<TensorEntry>,
}

/// Writes `model.bin` and `model.json` into `dir`. Parameters are stored as
/// f32 regardless of `T`.
pub fn save_checkpoint<T: Scalar>(
    net: &PairNet<T>,
    seed: u64,
    dir: &Path,
) -> Result<CheckpointManifest> {
    let bytes: Vec<u8> = net
        .params()
        .iter()
        .flat_map(|v| v.to_f32().unwrap_or(f32::NAN).to_le_bytes())
        .collect();
    let manifest = CheckpointManifest {
        config: net.config().clone(),
        seed,
        dtype: "f32le".into(),
        total_bytes: bytes.len(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        tensors: net
            .specs()
            .iter()
            .map(|s| TensorEntry {
                name: s.name.clone(),
                shape: s.shape.clone(),
                offset: s.offset * 4,
                bytes: s.len() * 4,
            })
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_atomic(&dir.join(WEIGHTS_FILE), &bytes)?;
    write_atomic(&dir.join(MANIFEST_FILE), json.as_bytes())?;
    Ok(manifest)
}

/// Reads a checkpoint, checking every tensor shape against the configured
/// architecture and the weights against the manifest size and digest.
pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<(PairNet<T>, CheckpointManifest)> {
    let manifest: CheckpointManifest = serde_json::from_slice(&read(&dir.join(MANIFEST_FILE))?)?;
    if manifest.dtype != "f32le" {
        return Err(Error::Integrity(format!(
            "unsupported dtype {}",
            manifest.dtype
        )));
    }
    manifest.config.validate()?;
    let expected = manifest.config.tensor_specs();
    for (i, spec) in expected.iter().enumerate() {
        let entry = manifest.tensors.get(i).ok_or_else(|| Error::Shape {
            layer: spec.name.clone(),
            expected: spec.shape.clone(),
            found: vec![],
        })?;
        if entry.name != spec.name || entry.shape != spec.shape {
            return Err(Error::Shape {
                layer: spec.name.clone(),
                expected: spec.shape.clone(),
                found: entry.shape.clone(),
            });
        }
        if entry.offset != spec.offset * 4 || entry.bytes != spec.len() * 4 {
            return Err(Error::Integrity(format!(
                "tensor {} has inconsistent byte range",
                entry.name
            )));
        }
    }
    if manifest.tensors.len() != expected.len() {
        let extra = &manifest.tensors[expected.len()];
        return Err(Error::Shape {
            layer: extra.name.clone(),
            expected: vec![],
            found: extra.shape.clone(),
        });
    }
    let bytes = read(&dir.join(WEIGHTS_FILE))?;
    if bytes.len() != manifest.total_bytes {
        return Err(Error::Integrity(format!(
            "{WEIGHTS_FILE} has {} bytes, manifest says {} (truncated or padded)",
            bytes.len(),
            manifest.total_bytes
        )));
    }
    if hex::encode(Sha256::digest(&bytes)) != manifest.sha256 {
        return Err(Error::Integrity(format!(
            "{WEIGHTS_FILE} digest does not match manifest"
        )));
    }
    let params = bytes
        .chunks_exact(4)
        .map(|b| T::from_f32(f32::from_le_bytes([b[0], b[1], b[2], b[3]])).expect("f32 converts"))
        .collect();
    let net = PairNet::from_params(manifest.config.clone(), params)?;
    Ok((net, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PairNetConfig {
        let mut c = PairNetConfig::default();
        c.encoder.side = 16;
        c.encoder.blocks = vec![4, 8];
        c.head_hidden = 8;
        c
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let net = PairNet::<f32>::init(small(), 5).unwrap();
        save_checkpoint(&net, 5, dir.path()).unwrap();
        let bin = std::fs::read(dir.path().join(WEIGHTS_FILE)).unwrap();
        let json = std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap();
        let (loaded, manifest) = load_checkpoint::<f32>(dir.path()).unwrap();
        assert_eq!(manifest.seed, 5);
        assert_eq!(loaded, net);
        let again = tempfile::tempdir().unwrap();
        save_checkpoint(&loaded, 5, again.path()).unwrap();
        assert_eq!(std::fs::read(again.path().join(WEIGHTS_FILE)).unwrap(), bin);
        assert_eq!(
            std::fs::read(again.path().join(MANIFEST_FILE)).unwrap(),
            json
        );
    }

    #[test]
    fn truncated_weights_fail_integrity() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&PairNet::<f32>::init(small(), 1).unwrap(), 1, dir.path()).unwrap();
        let path = dir.path().join(WEIGHTS_FILE);
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(
            load_checkpoint::<f32>(dir.path()),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn corrupted_weights_fail_integrity() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&PairNet::<f32>::init(small(), 1).unwrap(), 1, dir.path()).unwrap();
        let path = dir.path().join(WEIGHTS_FILE);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[10] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint::<f32>(dir.path()),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn shape_mismatch_names_the_layer() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&PairNet::<f32>::init(small(), 1).unwrap(), 1, dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let mut manifest: serde_json::Value =
            serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        manifest["tensors"][2]["shape"] = serde_json::json!([8, 4, 3, 5]);
        std::fs::write(&path, serde_json::to_vec(&manifest).unwrap()).unwrap();
        match load_checkpoint::<f32>(dir.path()) {
            Err(Error::Shape { layer, .. }) => assert_eq!(layer, "encoder.conv1.weight"),
            other => panic!("expected shape error, got {other:?}"),
        }
    }
}
