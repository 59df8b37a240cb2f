//! Single-file checkpoints.
//!
//! Layout:
//!
//! ```text
//! b"AIFSCKPT" | manifest_len: u64 LE | sha256(manifest): 32 bytes | manifest JSON | blob
//! ```
//!
//! The blob holds every tensor as little-endian `f64` in row-major order at
//! the byte offset recorded in the manifest. The manifest carries the SHA-256
//! of the blob, so any corruption of either part is detected on load.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::data::Vocab;
use crate::error::{Error, Result};
use crate::model::ModelDims;
use crate::tensor::{ParamGroup, Parameterized};
use crate::train::AutoIfs;

pub const MAGIC: &[u8; 8] = b"AIFSCKPT";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 8 + 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    /// `model/<param>` or `selector/<param>`
    pub name: String,
    pub shape: Vec<usize>,
    /// byte offset into the blob
    pub offset: u64,
    /// number of `f64` values
    pub len: u64,
}

/// Enough to reproduce the data order of the epochs that follow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub algorithm: String,
    pub seed: u64,
    /// epochs already drawn from the shuffle streams of this stage
    pub epochs_consumed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub stage: String,
    /// completed epochs of `stage`
    pub epoch: usize,
    pub config: RunConfig,
    pub dims: ModelDims,
    pub rng_state: RngState,
    pub vocab: Option<Value>,
    pub tensors: Vec<TensorEntry>,
    pub blob_sha256: String,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub net: AutoIfs,
}

impl Checkpoint {
    pub fn config(&self) -> &RunConfig {
        &self.manifest.config
    }

    pub fn vocab(&self) -> Result<Option<Vocab>> {
        self.manifest.vocab.as_ref().map(Vocab::from_json).transpose()
    }
}

const GROUP_NAMES: [&str; 2] = ["model", "selector"];

/// Serializes `net` with its configuration and (optionally) the vocabulary.
pub fn to_bytes(net: &AutoIfs, cfg: &RunConfig, stage: &str, epoch: usize, vocab: Option<&Vocab>) -> Result<Vec<u8>> {
    let mut blob = Vec::new();
    let mut tensors = Vec::new();
    for (group_name, group) in GROUP_NAMES.iter().zip(net.param_groups()) {
        for p in group.params() {
            if !p.value.is_finite() {
                return Err(Error::Checkpoint(format!("refusing to save non-finite tensor `{}`", p.name)));
            }
            tensors.push(TensorEntry {
                name: format!("{group_name}/{}", p.name),
                shape: p.value.shape().to_vec(),
                offset: blob.len() as u64,
                len: p.value.len() as u64,
            });
            for v in p.value.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        stage: stage.to_string(),
        epoch,
        config: cfg.clone(),
        dims: net.dims().clone(),
        rng_state: RngState {
            algorithm: "chacha8".into(),
            seed: cfg.seed,
            epochs_consumed: epoch,
        },
        vocab: vocab.map(Vocab::to_json),
        tensors,
        blob_sha256: hex::encode(Sha256::digest(&blob)),
    };
    let manifest_bytes = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(HEADER_LEN + manifest_bytes.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(manifest_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&manifest_bytes));
    out.extend_from_slice(&manifest_bytes);
    out.extend_from_slice(&blob);
    Ok(out)
}

pub fn save(path: &Path, net: &AutoIfs, cfg: &RunConfig, stage: &str, epoch: usize, vocab: Option<&Vocab>) -> Result<()> {
    let bytes = to_bytes(net, cfg, stage, epoch, vocab)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(corrupt("not an AutoIFS checkpoint (bad magic)"));
    }
    let manifest_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let manifest_end = HEADER_LEN
        .checked_add(manifest_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| corrupt("truncated manifest"))?;
    let manifest_bytes = &bytes[HEADER_LEN..manifest_end];
    if Sha256::digest(manifest_bytes).as_slice() != &bytes[16..48] {
        return Err(corrupt("manifest hash mismatch"));
    }
    let manifest: Manifest = serde_json::from_slice(manifest_bytes)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let blob = &bytes[manifest_end..];
    if hex::encode(Sha256::digest(blob)) != manifest.blob_sha256 {
        return Err(corrupt("tensor blob hash mismatch"));
    }

    let mut net = AutoIfs::new(manifest.dims.clone(), &manifest.config)?;
    let mut filled = 0usize;
    for entry in &manifest.tensors {
        let (group_name, name) = entry
            .name
            .split_once('/')
            .ok_or_else(|| corrupt(format!("bad tensor name `{}`", entry.name)))?;
        let group: &mut ParamGroup = match group_name {
            "model" => net.model.params_mut(),
            "selector" => net.selector.params_mut(),
            _ => return Err(corrupt(format!("unknown tensor group `{group_name}`"))),
        };
        let id = group
            .find(name)
            .ok_or_else(|| corrupt(format!("unexpected tensor `{}`", entry.name)))?;
        let param = group.get_mut(id);
        if param.value.shape() != entry.shape.as_slice() || param.value.len() as u64 != entry.len {
            return Err(corrupt(format!(
                "tensor `{}` has shape {:?}, expected {:?}",
                entry.name,
                entry.shape,
                param.value.shape()
            )));
        }
        let start = entry.offset as usize;
        let end = start + entry.len as usize * 8;
        let raw = blob
            .get(start..end)
            .ok_or_else(|| corrupt(format!("tensor `{}` runs past the blob", entry.name)))?;
        for (dst, chunk) in param.value.data_mut().iter_mut().zip(raw.chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        if !param.value.is_finite() {
            return Err(corrupt(format!("tensor `{}` contains NaN or Inf", entry.name)));
        }
        filled += 1;
    }
    let expected: usize = net.param_groups().iter().map(|g| g.len()).sum();
    if filled != expected {
        return Err(corrupt(format!("checkpoint holds {filled} tensors, model needs {expected}")));
    }
    Ok(Checkpoint { manifest, net })
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Instance;
    use crate::model::ModelDims;
    use crate::train::{evaluate, GatePolicy};

    fn net() -> (AutoIfs, RunConfig) {
        let cfg = RunConfig {
            embedding_dim: 3,
            hidden_dim: 5,
            rank: 2,
            selector_hidden: vec![4],
            ..Default::default()
        };
        let dims = ModelDims {
            vocab_sizes: vec![4, 6],
            embed_dim: 3,
            hidden_dim: 5,
            rank: 2,
            num_scenarios: 2,
            num_tasks: 2,
        };
        let mut n = AutoIfs::new(dims, &cfg).unwrap();
        // non-trivial B so predictions depend on every tensor
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(9, 9);
        for g in n.param_groups_mut() {
            for p in g.params_mut() {
                p.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            }
        }
        (n, cfg)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let (n, cfg) = net();
        let bytes = to_bytes(&n, &cfg, "stage1", 3, None).unwrap();
        let ck = from_bytes(&bytes).unwrap();
        assert!(ck.net.model.params().values_equal(n.model.params()));
        assert!(ck.net.selector.params().values_equal(n.selector.params()));
        assert_eq!(ck.manifest.epoch, 3);
        assert_eq!(ck.config(), &cfg);

        let data = crate::data::Dataset {
            field_names: vec!["a".into(), "b".into()],
            num_tasks: 2,
            num_scenarios: 2,
            vocab_sizes: vec![4, 6],
            instances: vec![Instance {
                field_ids: vec![2, 5],
                scenario: 1,
                labels: vec![1, 0],
            }],
        };
        for policy in [GatePolicy::Hard, GatePolicy::Continuous { tau: 7.0 }] {
            let a = evaluate(&n, &data, policy, 0).unwrap();
            let b = evaluate(&ck.net, &data, policy, 0).unwrap();
            assert_eq!(a, b);
        }
        // saving the loaded checkpoint reproduces the bytes
        assert_eq!(to_bytes(&ck.net, &cfg, "stage1", 3, None).unwrap(), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let (n, cfg) = net();
        let bytes = to_bytes(&n, &cfg, "stage1", 1, None).unwrap();
        let mut tail = bytes.clone();
        let last = tail.len() - 1;
        tail[last] ^= 1;
        assert!(from_bytes(&tail).unwrap_err().to_string().contains("blob hash"));
        let mut head = bytes.clone();
        head[60] ^= 1;
        assert!(from_bytes(&head).unwrap_err().to_string().contains("manifest hash"));
        assert!(from_bytes(b"nope").is_err());
    }

    #[test]
    fn non_finite_values_rejected() {
        let (mut n, cfg) = net();
        n.model.params_mut().params_mut()[0].value.data_mut()[0] = f64::INFINITY;
        assert!(to_bytes(&n, &cfg, "stage1", 1, None).is_err());
    }

    #[test]
    fn nan_in_blob_rejected_on_load() {
        let (n, cfg) = net();
        let bytes = to_bytes(&n, &cfg, "stage1", 1, None).unwrap();
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let mut manifest: Manifest = serde_json::from_slice(&bytes[HEADER_LEN..HEADER_LEN + len]).unwrap();
        let mut blob = bytes[HEADER_LEN + len..].to_vec();
        blob[..8].copy_from_slice(&f64::NAN.to_le_bytes());
        manifest.blob_sha256 = hex::encode(Sha256::digest(&blob));
        let m = serde_json::to_vec(&manifest).unwrap();
        let mut forged = MAGIC.to_vec();
        forged.extend_from_slice(&(m.len() as u64).to_le_bytes());
        forged.extend_from_slice(&Sha256::digest(&m));
        forged.extend_from_slice(&m);
        forged.extend_from_slice(&blob);
        let err = from_bytes(&forged).unwrap_err().to_string();
        assert!(err.contains("NaN"), "{err}");
    }
}
