//! Checkpoint format, version 1: a directory holding `manifest.json`
//! (tensor-name -> {shape, dtype, byte offset, length}, plus configs,
//! alphabet and seed) and `weights.bin` (raw 32-bit IEEE-754 little-endian
//! values concatenated in manifest order). Save->load->save is bitwise
//! exact.

use crate::nets::{DiscriminatorConfig, ModelBundle, RecogniserConfig};
use crate::textcorpus::{Alphabet, NormalizeMode};
use ndgrad::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("unsupported dtype {0:?} for tensor {1}")]
    Dtype(String, String),
    #[error("checkpoint is inconsistent: {0}")]
    Inconsistent(String),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TensorMeta {
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
    pub length: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub version: u32,
    pub seed: u64,
    pub normalize_mode: NormalizeMode,
    pub alphabet: Vec<String>,
    pub recogniser: RecogniserConfig,
    pub discriminator: DiscriminatorConfig,
    /// BTreeMap keeps serialization sorted by tensor name; offsets are
    /// assigned in that same order.
    pub tensors: BTreeMap<String, TensorMeta>,
}

/// Write the bundle under `dir` (created if needed).
pub fn save<T: Scalar>(bundle: &ModelBundle<T>, dir: &Path) -> Result<(), CheckpointError> {
    fs::create_dir_all(dir)?;
    let mut names: Vec<&str> = bundle.store.iter().map(|(_, e)| e.name.as_str()).collect();
    names.sort_unstable();

    let mut tensors = BTreeMap::new();
    let mut weights: Vec<u8> = Vec::new();
    for name in names {
        let id = bundle.store.lookup(name).unwrap();
        let value = bundle.store.value(id);
        let offset = weights.len() as u64;
        for &v in value.data() {
            weights.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
        tensors.insert(
            name.to_string(),
            TensorMeta {
                shape: value.shape().to_vec(),
                dtype: "f32".to_string(),
                offset,
                length: (value.numel() * 4) as u64,
            },
        );
    }
    let normalize_mode = if bundle.alphabet.unknown_index().is_some() {
        NormalizeMode::Real
    } else {
        NormalizeMode::Synthetic
    };
    let manifest = CheckpointManifest {
        version: CHECKPOINT_VERSION,
        seed: bundle.seed,
        normalize_mode,
        alphabet: bundle.alphabet.symbols().to_vec(),
        recogniser: bundle.rec_cfg.clone(),
        discriminator: bundle.disc_cfg.clone(),
        tensors,
    };
    fs::write(dir.join("weights.bin"), &weights)?;
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn parse_manifest(bytes: &[u8]) -> Result<CheckpointManifest, CheckpointError> {
    let manifest: CheckpointManifest = serde_json::from_slice(bytes)?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(manifest.version));
    }
    let canonical = Alphabet::for_mode(manifest.normalize_mode);
    if manifest.alphabet != canonical.symbols() {
        return Err(CheckpointError::Inconsistent(
            "alphabet does not match the canonical ordering".into(),
        ));
    }
    let mut end = 0u64;
    for (name, meta) in &manifest.tensors {
        if meta.dtype != "f32" {
            return Err(CheckpointError::Dtype(meta.dtype.clone(), name.clone()));
        }
        let numel: usize = meta.shape.iter().product();
        if meta.shape.iter().any(|&e| e == 0) || numel == 0 {
            return Err(CheckpointError::Inconsistent(format!(
                "tensor {name} has an empty shape"
            )));
        }
        if meta.length != (numel * 4) as u64 {
            return Err(CheckpointError::Inconsistent(format!(
                "tensor {name}: length {} does not match shape {:?}",
                meta.length, meta.shape
            )));
        }
        if meta.offset != end {
            return Err(CheckpointError::Inconsistent(format!(
                "tensor {name}: offset {} does not follow manifest order",
                meta.offset
            )));
        }
        end = end
            .checked_add(meta.length)
            .ok_or_else(|| CheckpointError::Inconsistent("offset overflow".into()))?;
    }
    Ok(manifest)
}

/// Read a checkpoint back into a freshly constructed bundle.
pub fn load(dir: &Path) -> Result<ModelBundle<f32>, CheckpointError> {
    let manifest = parse_manifest(&fs::read(dir.join("manifest.json"))?)?;
    let weights = fs::read(dir.join("weights.bin"))?;
    let expected: u64 = manifest.tensors.values().map(|m| m.length).sum();
    if weights.len() as u64 != expected {
        return Err(CheckpointError::Inconsistent(format!(
            "weights.bin is {} bytes, manifest promises {expected}",
            weights.len()
        )));
    }

    let alphabet = Alphabet::for_mode(manifest.normalize_mode);
    let mut bundle = ModelBundle::<f32>::new(
        manifest.recogniser.clone(),
        manifest.discriminator.clone(),
        alphabet,
        manifest.seed,
    );
    let ids: Vec<_> = bundle.store.ids().collect();
    if ids.len() != manifest.tensors.len() {
        return Err(CheckpointError::Inconsistent(format!(
            "checkpoint has {} tensors, model expects {}",
            manifest.tensors.len(),
            ids.len()
        )));
    }
    for id in ids {
        let name = bundle.store.entry(id).name.clone();
        let meta = manifest.tensors.get(&name).ok_or_else(|| {
            CheckpointError::Inconsistent(format!("missing tensor {name}"))
        })?;
        if meta.shape != bundle.store.value(id).shape() {
            return Err(CheckpointError::Inconsistent(format!(
                "tensor {name}: shape {:?} does not match model {:?}",
                meta.shape,
                bundle.store.value(id).shape()
            )));
        }
        let bytes = &weights[meta.offset as usize..(meta.offset + meta.length) as usize];
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if !data.iter().all(|v| v.is_finite()) {
            return Err(CheckpointError::Inconsistent(format!(
                "tensor {name} contains non-finite values"
            )));
        }
        *bundle.store.value_mut(id) = ndgrad::Tensor::new(meta.shape.clone(), data);
    }
    Ok(bundle)
}

/// Load and cast to the requested element type.
pub fn load_as<T: Scalar>(dir: &Path) -> Result<ModelBundle<T>, CheckpointError> {
    Ok(cast_bundle(&load(dir)?))
}

pub fn cast_bundle<S: Scalar, T: Scalar>(bundle: &ModelBundle<S>) -> ModelBundle<T> {
    let mut out = ModelBundle::<T>::new(
        bundle.rec_cfg.clone(),
        bundle.disc_cfg.clone(),
        bundle.alphabet.clone(),
        bundle.seed,
    );
    let ids: Vec<_> = out.store.ids().collect();
    for id in ids {
        let name = out.store.entry(id).name.clone();
        let src = bundle.store.lookup(&name).expect("same parameter set");
        *out.store.value_mut(id) = bundle.store.value(src).cast();
    }
    out
}
