use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Gpt, LmError, ModelConfig, ParamLayout, Real};

const MAGIC: &[u8; 8] = b"PSCKPT\0\0";
const VERSION: u32 = 1;

/// A weight snapshot with the metadata needed to reload and audit it.
///
/// On disk: magic, version u32 LE, header length u64 LE, JSON header, then
/// every parameter as f32 LE in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    /// Digest of the tokenizer the model was trained with; empty if unknown.
    pub tokenizer_digest: String,
    pub step: usize,
    pub validation_perplexity: f64,
    pub params: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tokenizer_digest: String,
    step: usize,
    validation_perplexity: f64,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn snapshot<T: Real>(model: &Gpt<T>, step: usize, validation_perplexity: f64) -> Self {
        Self {
            config: model.config().clone(),
            tokenizer_digest: String::new(),
            step,
            validation_perplexity,
            params: model.params().iter().map(|p| p.as_f64() as f32).collect(),
        }
    }

    pub fn model<T: Real>(&self) -> Result<Gpt<T>, LmError> {
        Gpt::from_params(
            self.config.clone(),
            self.params.iter().map(|&p| T::from_f64_lossy(f64::from(p))).collect(),
        )
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<(), LmError> {
        let layout = ParamLayout::new(&self.config);
        let header = Header {
            config: self.config.clone(),
            tokenizer_digest: self.tokenizer_digest.clone(),
            step: self.step,
            validation_perplexity: self.validation_perplexity,
            tensors: layout
                .tensors()
                .iter()
                .map(|t| TensorEntry {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    offset: t.offset,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| LmError::Checkpoint(e.to_string()))?;
        let mut w = BufWriter::new(w);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, LmError> {
        let bad = |m: String| LmError::Checkpoint(m);
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return Err(bad(format!("unsupported version {version} (expected {VERSION})")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let len = u64::from_le_bytes(b8) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| bad(e.to_string()))?;
        header.config.validate()?;
        let layout = ParamLayout::new(&header.config);
        let consistent = header.tensors.len() == layout.tensors().len()
            && header
                .tensors
                .iter()
                .zip(layout.tensors())
                .all(|(a, b)| a.name == b.name && a.shape == b.shape && a.offset == b.offset);
        if !consistent {
            return Err(bad("tensor table does not match the model configuration".into()));
        }
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != layout.total() * 4 {
            return Err(bad(format!(
                "expected {} weights, found {} bytes",
                layout.total(),
                bytes.len()
            )));
        }
        let params = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Self {
            config: header.config,
            tokenizer_digest: header.tokenizer_digest,
            step: header.step,
            validation_perplexity: header.validation_perplexity,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), LmError> {
        self.write_to(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, LmError> {
        Self::read_from(std::fs::File::open(path)?)
    }
}
