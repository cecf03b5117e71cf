//! Model checkpoints, feature matrices and their binary file formats.
//!
//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! b"PGCK" | u32 version | u32 len | JSON header (config + metadata)
//! u32 count | count × (u32 len | UTF-8 symbol)              alphabet listing
//! u32 count | count × (u32 len | name | u32 rank | rank × u64 dim | f64 data)
//! ```
//!
//! Feature archives hold several utterances:
//! `b"PGFT" | u32 count | count × (u32 T | u32 dim | T·dim × f32)`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::ctc::PosteriorGrid;
use crate::inventory::{Alphabet, UnitKind};

use super::model::{check_shapes, encode, output_posteriors, Block, Params};
use super::{AcousticError, EncoderConfig};

const CKPT_MAGIC: &[u8; 4] = b"PGCK";
const CKPT_VERSION: u32 = 1;
const FEAT_MAGIC: &[u8; 4] = b"PGFT";

/// A `T × input_dim` matrix of finite feature frames, `T ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Array2<f64>);

impl FeatureMatrix {
    pub fn new(frames: Array2<f64>) -> Result<Self, AcousticError> {
        if frames.nrows() == 0 || frames.ncols() == 0 {
            return Err(AcousticError::Shape("feature matrix must be non-empty".into()));
        }
        if !frames.iter().all(|v| v.is_finite()) {
            return Err(AcousticError::Numeric("non-finite feature value".into()));
        }
        Ok(FeatureMatrix(frames))
    }

    pub fn frames(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn num_frames(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    /// Free-form provenance, e.g. which languages were used.
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub config: EncoderConfig,
    pub params: Params,
    pub alphabet: Alphabet,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: EncoderConfig,
    meta: CheckpointMeta,
    kind: UnitKind,
}

impl ModelCheckpoint {
    /// Fresh model with Gaussian-initialized parameters.
    pub fn init(config: EncoderConfig, alphabet: Alphabet, seed: u64) -> Result<Self, AcousticError> {
        use rand::SeedableRng;
        config.validate()?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let params = Params::init(&config, alphabet.len(), &mut rng);
        Ok(ModelCheckpoint {
            config,
            params,
            alphabet,
            meta: CheckpointMeta {
                seed,
                ..Default::default()
            },
        })
    }

    /// The output matrix W, one row per alphabet unit.
    pub fn output_matrix(&self) -> &Array2<f64> {
        &self.params.output
    }

    pub fn validate(&self) -> Result<(), AcousticError> {
        self.config.validate()?;
        check_shapes(&self.params, &self.config, &self.alphabet)?;
        if !self.params.all_finite() {
            return Err(AcousticError::Numeric("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), AcousticError> {
        w.write_all(CKPT_MAGIC)?;
        w.write_all(&CKPT_VERSION.to_le_bytes())?;
        let header = serde_json::to_vec(&Header {
            config: self.config,
            meta: self.meta.clone(),
            kind: self.alphabet.kind(),
        })?;
        write_bytes(&mut w, &header)?;
        w.write_all(&(self.alphabet.len() as u32).to_le_bytes())?;
        for s in self.alphabet.symbols() {
            write_bytes(&mut w, s.as_bytes())?;
        }
        let mut tensors: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
        self.params
            .visit(|n, shape, data| tensors.push((n.to_string(), shape.to_vec(), data.to_vec())));
        w.write_all(&(tensors.len() as u32).to_le_bytes())?;
        for (name, shape, data) in tensors {
            write_bytes(&mut w, name.as_bytes())?;
            w.write_all(&(shape.len() as u32).to_le_bytes())?;
            for d in shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, AcousticError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CKPT_MAGIC {
            return Err(AcousticError::Format("not a checkpoint file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CKPT_VERSION {
            return Err(AcousticError::Format(format!("unsupported version {version}")));
        }
        let header: Header = serde_json::from_slice(&read_bytes(&mut r)?)?;
        let n = read_u32(&mut r)? as usize;
        let mut listing = Vec::with_capacity(n);
        for _ in 0..n {
            listing.push(
                String::from_utf8(read_bytes(&mut r)?)
                    .map_err(|_| AcousticError::Format("symbol is not UTF-8".into()))?,
            );
        }
        let alphabet = Alphabet::from_listing(header.kind, listing)?;
        let count = read_u32(&mut r)? as usize;
        let mut tensors = std::collections::HashMap::new();
        for _ in 0..count {
            let name = String::from_utf8(read_bytes(&mut r)?)
                .map_err(|_| AcousticError::Format("tensor name is not UTF-8".into()))?;
            let rank = read_u32(&mut r)? as usize;
            if rank == 0 || rank > 2 {
                return Err(AcousticError::Format(format!("{name}: unsupported rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let len: usize = shape.iter().product();
            if len > 1 << 28 {
                return Err(AcousticError::Format(format!("{name}: tensor too large")));
            }
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            tensors.insert(name, (shape, data));
        }
        let mut take2 = |name: &str| -> Result<Array2<f64>, AcousticError> {
            let (shape, data) = tensors
                .remove(name)
                .ok_or_else(|| AcousticError::Format(format!("missing tensor {name}")))?;
            if shape.len() != 2 {
                return Err(AcousticError::Shape(format!("{name} must be a matrix")));
            }
            Array2::from_shape_vec((shape[0], shape[1]), data)
                .map_err(|e| AcousticError::Shape(e.to_string()))
        };
        let conv_w = take2("conv.weight")?;
        let output = take2("output.weight")?;
        let mut blocks_w = Vec::new();
        for i in 0..header.config.num_blocks {
            blocks_w.push((
                take2(&format!("blocks.{i}.ff1.weight"))?,
                take2(&format!("blocks.{i}.ff2.weight"))?,
            ));
        }
        let mut take1 = |name: &str| -> Result<Array1<f64>, AcousticError> {
            let (shape, data) = tensors
                .remove(name)
                .ok_or_else(|| AcousticError::Format(format!("missing tensor {name}")))?;
            if shape.len() != 1 {
                return Err(AcousticError::Shape(format!("{name} must be a vector")));
            }
            Ok(Array1::from_vec(data))
        };
        let conv_b = take1("conv.bias")?;
        let mut blocks = Vec::new();
        for (i, (ff1_w, ff2_w)) in blocks_w.into_iter().enumerate() {
            blocks.push(Block {
                ff1_w,
                ff1_b: take1(&format!("blocks.{i}.ff1.bias"))?,
                ff2_w,
                ff2_b: take1(&format!("blocks.{i}.ff2.bias"))?,
                ln_gain: take1(&format!("blocks.{i}.ln.gain"))?,
                ln_bias: take1(&format!("blocks.{i}.ln.bias"))?,
            });
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(AcousticError::Format(format!("unexpected tensor {extra}")));
        }
        let ckpt = ModelCheckpoint {
            config: header.config,
            params: Params {
                conv_w,
                conv_b,
                blocks,
                output,
            },
            alphabet,
            meta: header.meta,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), AcousticError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AcousticError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

/// Runs the encoder and the softmax output layer (inference mode).
pub fn forward(ckpt: &ModelCheckpoint, features: &FeatureMatrix) -> Result<PosteriorGrid, AcousticError> {
    if features.dim() != ckpt.config.input_dim {
        return Err(AcousticError::Shape(format!(
            "feature dim {} does not match model input_dim {}",
            features.dim(),
            ckpt.config.input_dim
        )));
    }
    let cache = encode::<rand_chacha::ChaCha8Rng>(&ckpt.params, &ckpt.config, features.frames().view(), None);
    output_posteriors(&ckpt.params.output, cache.hidden())
}

fn write_bytes<W: Write>(w: &mut W, b: &[u8]) -> std::io::Result<()> {
    w.write_all(&(b.len() as u32).to_le_bytes())?;
    w.write_all(b)
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_bytes<R: Read>(r: &mut R) -> Result<Vec<u8>, AcousticError> {
    let n = read_u32(r)? as usize;
    if n > 1 << 26 {
        return Err(AcousticError::Format("length field too large".into()));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn write_features<W: Write>(mut w: W, utts: &[FeatureMatrix]) -> Result<(), AcousticError> {
    w.write_all(FEAT_MAGIC)?;
    w.write_all(&(utts.len() as u32).to_le_bytes())?;
    for u in utts {
        w.write_all(&(u.num_frames() as u32).to_le_bytes())?;
        w.write_all(&(u.dim() as u32).to_le_bytes())?;
        for v in u.frames().iter() {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_features<R: Read>(mut r: R) -> Result<Vec<FeatureMatrix>, AcousticError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FEAT_MAGIC {
        return Err(AcousticError::Format("not a feature archive".into()));
    }
    let count = read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let t = read_u32(&mut r)? as usize;
        let d = read_u32(&mut r)? as usize;
        if t.saturating_mul(d) > 1 << 28 {
            return Err(AcousticError::Format("utterance too large".into()));
        }
        let mut buf = vec![0u8; t * d * 4];
        r.read_exact(&mut buf)?;
        let data = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let m = Array2::from_shape_vec((t, d), data).map_err(|e| AcousticError::Shape(e.to_string()))?;
        out.push(FeatureMatrix::new(m)?);
    }
    Ok(out)
}

pub fn save_features(path: &Path, utts: &[FeatureMatrix]) -> Result<(), AcousticError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_features(&mut w, utts)?;
    w.flush()?;
    Ok(())
}

pub fn load_features(path: &Path) -> Result<Vec<FeatureMatrix>, AcousticError> {
    read_features(std::io::BufReader::new(std::fs::File::open(path)?))
}
