use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CorpusError;
use crate::tokenizer::Tokenizer;

const MAGIC: &[u8; 8] = b"PSBLOCKS";
const VERSION: u32 = 1;

/// One training example of exactly `context` ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExampleBlock {
    pub ids: Vec<u32>,
    pub pad_count: usize,
}

/// Concatenates the encodings of `lines` in order.
pub fn token_stream<I, S>(tokenizer: &Tokenizer, lines: I) -> Vec<u32>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = Vec::new();
    for line in lines {
        out.extend(tokenizer.encode(line.as_ref()));
    }
    out
}

/// Cuts `stream` into consecutive `context`-sized blocks; only the last is padded.
pub fn build_blocks(stream: &[u32], context: usize, pad_id: u32) -> Result<Vec<ExampleBlock>, CorpusError> {
    if context == 0 {
        return Err(CorpusError::ZeroContext);
    }
    Ok(stream
        .chunks(context)
        .map(|chunk| {
            let pad_count = context - chunk.len();
            let mut ids = chunk.to_vec();
            ids.resize(context, pad_id);
            ExampleBlock { ids, pad_count }
        })
        .collect())
}

/// Blocks stored contiguously, as written to and read from disk.
///
/// File layout, little-endian: magic `PSBLOCKS`, version u32, context u32,
/// pad id u32, final pad count u32, block count u64, then the ids as u32.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockStore {
    context: usize,
    pad_id: u32,
    last_pad: usize,
    data: Vec<u32>,
}

impl BlockStore {
    pub fn from_stream(stream: &[u32], context: usize, pad_id: u32) -> Result<Self, CorpusError> {
        let blocks = build_blocks(stream, context, pad_id)?;
        Ok(Self::from_blocks(&blocks, context, pad_id))
    }

    pub fn from_blocks(blocks: &[ExampleBlock], context: usize, pad_id: u32) -> Self {
        Self {
            context,
            pad_id,
            last_pad: blocks.last().map_or(0, |b| b.pad_count),
            data: blocks.iter().flat_map(|b| b.ids.iter().copied()).collect(),
        }
    }

    pub fn context(&self) -> usize {
        self.context
    }

    pub fn pad_id(&self) -> u32 {
        self.pad_id
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.context
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn block(&self, i: usize) -> &[u32] {
        &self.data[i * self.context..(i + 1) * self.context]
    }

    pub fn pad_count(&self, i: usize) -> usize {
        if i + 1 == self.len() {
            self.last_pad
        } else {
            0
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> {
        self.data.chunks(self.context)
    }

    /// Number of ids that are not padding.
    pub fn token_count(&self) -> usize {
        self.data.len() - self.last_pad
    }

    /// Largest id stored, padding included.
    pub fn max_id(&self) -> Option<u32> {
        self.data.iter().copied().max()
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<(), CorpusError> {
        let mut w = BufWriter::new(w);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.context as u32).to_le_bytes())?;
        w.write_all(&self.pad_id.to_le_bytes())?;
        w.write_all(&(self.last_pad as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for id in &self.data {
            w.write_all(&id.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, CorpusError> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CorpusError::Format("not a block store file".into()));
        }
        let mut u32_buf = [0u8; 4];
        let mut read_u32 = |r: &mut BufReader<R>| -> Result<u32, CorpusError> {
            r.read_exact(&mut u32_buf)?;
            Ok(u32::from_le_bytes(u32_buf))
        };
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(CorpusError::Format(format!(
                "unsupported block store version {version} (expected {VERSION})"
            )));
        }
        let context = read_u32(&mut r)? as usize;
        let pad_id = read_u32(&mut r)?;
        let last_pad = read_u32(&mut r)? as usize;
        let mut u64_buf = [0u8; 8];
        r.read_exact(&mut u64_buf)?;
        let count = u64::from_le_bytes(u64_buf) as usize;
        if context == 0 || (count > 0 && last_pad >= context) || (count == 0 && last_pad != 0) {
            return Err(CorpusError::Format(format!(
                "inconsistent header: context {context}, final padding {last_pad}"
            )));
        }
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != count * context * 4 {
            return Err(CorpusError::Format(format!(
                "expected {count} blocks of {context} ids, found {} bytes",
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Self {
            context,
            pad_id,
            last_pad,
            data,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        self.write_to(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

/// Endless stream of batches of block indices, drawn uniformly with replacement.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    blocks: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(blocks: usize, batch_size: usize, seed: u64) -> Result<Self, CorpusError> {
        if blocks == 0 {
            return Err(CorpusError::NoBlocks);
        }
        if batch_size == 0 {
            return Err(CorpusError::ZeroBatch);
        }
        Ok(Self {
            blocks,
            batch_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }
}

impl Iterator for BatchSampler {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let n = self.blocks as u64;
        Some(
            (0..self.batch_size)
                .map(|_| self.rng.random_range(0..n) as usize)
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn block_shapes() {
        let stream: Vec<u32> = (0..300).collect();
        let blocks = build_blocks(&stream, 128, 1).unwrap();
        assert_eq!(blocks.len(), 3);
        assert!(blocks.iter().all(|b| b.ids.len() == 128));
        assert_eq!(blocks.iter().map(|b| b.pad_count).collect::<Vec<_>>(), [0, 0, 84]);
        assert!(blocks[2].ids[44..].iter().all(|&id| id == 1));

        let exact = build_blocks(&stream[..128], 128, 1).unwrap();
        assert_eq!(exact.len(), 1);
        assert_eq!(exact[0].pad_count, 0);

        assert!(build_blocks(&[], 128, 1).unwrap().is_empty());
        assert!(matches!(build_blocks(&stream, 0, 1), Err(CorpusError::ZeroContext)));
    }

    #[test]
    fn store_round_trip() {
        let stream: Vec<u32> = (0..77).map(|i| i * 3).collect();
        let store = BlockStore::from_stream(&stream, 16, 1).unwrap();
        let mut bytes = Vec::new();
        store.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 32 + 5 * 16 * 4);
        let back = BlockStore::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, store);
        assert_eq!(back.token_count(), 77);
        assert_eq!(back.pad_count(4), 3);
        assert_eq!(back.pad_count(0), 0);

        bytes.truncate(bytes.len() - 4);
        assert!(BlockStore::read_from(bytes.as_slice()).is_err());
        assert!(BlockStore::read_from(&b"NOTBLOCKS"[..]).is_err());
    }

    #[test]
    fn sampler_is_seeded() {
        let a: Vec<_> = BatchSampler::new(10, 4, 7).unwrap().take(20).collect();
        let b: Vec<_> = BatchSampler::new(10, 4, 7).unwrap().take(20).collect();
        let c: Vec<_> = BatchSampler::new(10, 4, 8).unwrap().take(20).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|batch| batch.len() == 4));
    }

    #[test]
    fn single_block_batches() {
        let batches: Vec<_> = BatchSampler::new(1, 4, 0).unwrap().take(5).collect();
        assert!(batches.iter().all(|b| b == &[0, 0, 0, 0]));
        assert!(matches!(BatchSampler::new(0, 4, 0), Err(CorpusError::NoBlocks)));
        assert!(matches!(BatchSampler::new(3, 0, 0), Err(CorpusError::ZeroBatch)));
    }

    #[test]
    fn sampling_is_uniform() {
        let mut counts = [0usize; 10];
        let draws = 100_000;
        for batch in BatchSampler::new(10, 10, 42).unwrap().take(draws / 10) {
            for i in batch {
                counts[i] += 1;
            }
        }
        let expected = draws as f64 / 10.0;
        for c in counts {
            assert!((c as f64 - expected).abs() <= 0.05 * expected, "{counts:?}");
        }
    }

    proptest! {
        #[test]
        fn conservation(len in 0usize..700, context in 1usize..200) {
            let stream: Vec<u32> = (0..len as u32).map(|i| i + 3).collect();
            let blocks = build_blocks(&stream, context, 1).unwrap();
            let non_pad: usize = blocks.iter().map(|b| context - b.pad_count).sum();
            prop_assert_eq!(non_pad, len);
            prop_assert_eq!(blocks.len(), len.div_ceil(context));
            for b in blocks.iter().rev().skip(1) {
                prop_assert_eq!(b.pad_count, 0);
            }
            let flat: Vec<u32> = blocks.iter().flat_map(|b| b.ids[..context - b.pad_count].to_vec()).collect();
            prop_assert_eq!(flat, stream);
        }
    }
}
