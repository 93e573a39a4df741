//! Dataset shard format, version 1: a directory holding `manifest.json`,
//! `images.bin` (count records of H*W*C unsigned bytes, row-major, index
//! order) and `labels.txt` (one normalized ground-truth string per line).

use crate::synthrender::{generate_samples, DatasetSpec, TextImage, PX_PER_POSITION, RECOG_HEIGHT};
use crate::textcorpus::{encode, normalize, Alphabet, Corpus, NormalizeMode};
use ndgrad::{Scalar, Tensor};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SHARD_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ShardError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("unsupported shard version {0}")]
    Version(u32),
    #[error("shard is inconsistent: {0}")]
    Inconsistent(String),
    #[error("alphabet in manifest does not match the canonical {0:?} ordering")]
    AlphabetMismatch(NormalizeMode),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ShardManifest {
    pub version: u32,
    pub alphabet: Vec<String>,
    pub normalize_mode: NormalizeMode,
    pub n: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub count: usize,
    pub seed: u64,
    /// Generator-config echo (absent for ingested real data).
    pub generator: Option<serde_json::Value>,
}

impl ShardManifest {
    pub fn validate(&self) -> Result<(), ShardError> {
        if self.version != SHARD_VERSION {
            return Err(ShardError::Version(self.version));
        }
        let canonical = Alphabet::for_mode(self.normalize_mode);
        if self.alphabet != canonical.symbols() {
            return Err(ShardError::AlphabetMismatch(self.normalize_mode));
        }
        if self.height != RECOG_HEIGHT || self.width != self.n * PX_PER_POSITION {
            return Err(ShardError::Inconsistent(format!(
                "expected {}x{} images for n={}, manifest says {}x{}",
                RECOG_HEIGHT,
                self.n * PX_PER_POSITION,
                self.n,
                self.height,
                self.width
            )));
        }
        if self.channels == 0 || self.count == 0 {
            return Err(ShardError::Inconsistent(
                "channels and count must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn record_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn parse(bytes: &[u8]) -> Result<ShardManifest, ShardError> {
        let m: ShardManifest = serde_json::from_slice(bytes)?;
        m.validate()?;
        Ok(m)
    }
}

/// Streaming writer that serializes records in index order and cleans up
/// partial output when a write fails.
pub struct ShardWriter {
    dir: PathBuf,
    manifest: ShardManifest,
    images: fs::File,
    labels: Vec<String>,
    written: usize,
}

impl ShardWriter {
    pub fn create(dir: &Path, manifest: ShardManifest) -> Result<Self, ShardError> {
        manifest.validate()?;
        fs::create_dir_all(dir)?;
        let images = fs::File::create(dir.join("images.bin"))?;
        Ok(ShardWriter {
            dir: dir.to_path_buf(),
            manifest,
            images,
            labels: Vec::new(),
            written: 0,
        })
    }

    pub fn append(&mut self, image: &TextImage, label: &str) -> Result<(), ShardError> {
        let bytes = image.to_u8();
        if bytes.len() != self.manifest.record_len() {
            return Err(ShardError::Inconsistent(format!(
                "record {} has {} bytes, expected {}",
                self.written,
                bytes.len(),
                self.manifest.record_len()
            )));
        }
        self.images.write_all(&bytes)?;
        self.labels.push(label.to_string());
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), ShardError> {
        if self.written != self.manifest.count {
            return Err(ShardError::Inconsistent(format!(
                "wrote {} records, manifest promises {}",
                self.written, self.manifest.count
            )));
        }
        self.images.flush()?;
        let mut labels = fs::File::create(self.dir.join("labels.txt"))?;
        for l in &self.labels {
            labels.write_all(l.as_bytes())?;
            labels.write_all(b"\n")?;
        }
        labels.flush()?;
        let manifest_json = serde_json::to_vec_pretty(&self.manifest)?;
        fs::write(self.dir.join("manifest.json"), manifest_json)?;
        Ok(())
    }

    /// Remove any partial output (used on error paths).
    pub fn abort(self) {
        let _ = fs::remove_file(self.dir.join("images.bin"));
        let _ = fs::remove_file(self.dir.join("labels.txt"));
        let _ = fs::remove_file(self.dir.join("manifest.json"));
    }
}

/// Images above this size stay on disk and are read per record.
const PRELOAD_LIMIT: u64 = 512 << 20;

enum Images {
    Mem(Vec<u8>),
    File(std::sync::Mutex<fs::File>),
}

/// An open shard: manifest, labels, and image records.
pub struct Shard {
    pub manifest: ShardManifest,
    pub labels: Vec<String>,
    images: Images,
}

impl Shard {
    pub fn open(dir: &Path) -> Result<Shard, ShardError> {
        let manifest = ShardManifest::parse(&fs::read(dir.join("manifest.json"))?)?;
        let labels_file = fs::File::open(dir.join("labels.txt"))?;
        let mut labels = Vec::with_capacity(manifest.count);
        for line in std::io::BufReader::new(labels_file).lines() {
            labels.push(line?);
        }
        if labels.len() != manifest.count {
            return Err(ShardError::Inconsistent(format!(
                "labels.txt has {} lines, manifest promises {}",
                labels.len(),
                manifest.count
            )));
        }
        let images_path = dir.join("images.bin");
        let size = fs::metadata(&images_path)?.len();
        let expected = manifest.count as u64 * manifest.record_len() as u64;
        if size != expected {
            return Err(ShardError::Inconsistent(format!(
                "images.bin is {size} bytes, expected {expected}"
            )));
        }
        let images = if size <= PRELOAD_LIMIT {
            Images::Mem(fs::read(&images_path)?)
        } else {
            Images::File(std::sync::Mutex::new(fs::File::open(&images_path)?))
        };
        Ok(Shard {
            manifest,
            labels,
            images,
        })
    }

    pub fn len(&self) -> usize {
        self.manifest.count
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.count == 0
    }

    pub fn alphabet(&self) -> Alphabet {
        Alphabet::for_mode(self.manifest.normalize_mode)
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    fn record_bytes(&self, index: usize) -> Vec<u8> {
        let len = self.manifest.record_len();
        match &self.images {
            Images::Mem(all) => all[index * len..(index + 1) * len].to_vec(),
            Images::File(file) => {
                let mut f = file.lock().unwrap();
                let mut buf = vec![0u8; len];
                f.seek(SeekFrom::Start((index * len) as u64)).unwrap();
                f.read_exact(&mut buf).unwrap();
                buf
            }
        }
    }

    pub fn image(&self, index: usize) -> TextImage {
        TextImage::from_u8(
            self.manifest.height,
            self.manifest.width,
            self.manifest.channels,
            &self.record_bytes(index),
        )
    }

    /// Batch of image records as a `[B,H,W,C]` tensor scaled to [0,1].
    pub fn image_batch<T: Scalar>(&self, indices: &[usize]) -> Tensor<T> {
        let m = &self.manifest;
        let rec = m.record_len();
        let mut data = vec![T::zero(); indices.len() * rec];
        let scale = T::from_f64(1.0 / 255.0);
        for (row, &idx) in indices.iter().enumerate() {
            let bytes = self.record_bytes(idx);
            for (dst, &b) in data[row * rec..(row + 1) * rec].iter_mut().zip(&bytes) {
                *dst = T::from_f64(b as f64) * scale;
            }
        }
        Tensor::new(vec![indices.len(), m.height, m.width, m.channels], data)
    }

    /// Labels encoded at the shard's n, flattened batch-major (for the
    /// supervised loss).
    pub fn label_indices(&self, indices: &[usize]) -> Vec<usize> {
        let alphabet = self.alphabet();
        let mut out = Vec::with_capacity(indices.len() * self.manifest.n);
        for &i in indices {
            let enc = encode(self.label(i), &alphabet, self.manifest.n);
            out.extend_from_slice(enc.indices());
        }
        out
    }
}

/// Generate the train and test shards of a synthetic dataset under
/// `out_dir/train` and `out_dir/test`. Train and test text are drawn
/// independently; every label re-normalizes to itself and encodes at `n`.
pub fn generate_dataset(
    corpus: &Corpus,
    spec: &DatasetSpec,
    out_dir: &Path,
) -> Result<(), ShardError> {
    let alphabet = Alphabet::for_mode(spec.normalize_mode);
    let splits = [
        ("train", spec.count_train, spec.seed),
        ("test", spec.count_test, spec.seed ^ 0x7e57_5eed_0000_0001),
    ];
    for (name, count, shard_seed) in splits {
        let manifest = ShardManifest {
            version: SHARD_VERSION,
            alphabet: alphabet.symbols().to_vec(),
            normalize_mode: spec.normalize_mode,
            n: spec.n,
            height: RECOG_HEIGHT,
            width: spec.n * PX_PER_POSITION,
            channels: spec.generator.channels,
            count,
            seed: shard_seed,
            generator: Some(serde_json::to_value(&spec.generator)?),
        };
        let mut writer = ShardWriter::create(&out_dir.join(name), manifest)?;
        let mut failure = None;
        generate_samples(
            corpus,
            &alphabet,
            spec.n,
            count,
            shard_seed,
            &spec.generator,
            |_, rec| {
                debug_assert_eq!(normalize(&rec.text, spec.normalize_mode), rec.text);
                if failure.is_none() {
                    if let Err(e) = writer.append(&rec.image, &rec.text) {
                        failure = Some(e);
                    }
                }
            },
        );
        match failure {
            Some(e) => {
                writer.abort();
                return Err(e);
            }
            None => writer.finish()?,
        }
    }
    Ok(())
}
