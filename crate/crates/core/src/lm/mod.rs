//! Decoder-only transformer language model: training, checkpoints and scoring.

mod bigram;
mod checkpoint;
mod config;
mod model;
mod real;
mod train;

use thiserror::Error;

use crate::corpus::BlockStore;

pub use bigram::BigramModel;
pub use checkpoint::Checkpoint;
pub use config::{ModelConfig, Preset, TrainConfig};
pub use model::{Activations, Gpt, ParamLayout, TensorRole, TensorSpec, IGNORE};
pub use real::Real;
pub use train::{train, train_with_checkpoints, LogKind, LogRow, TrainOutcome, Trainer};

#[derive(Debug, Error)]
pub enum LmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("token id {id} is outside the vocabulary of {vocab}")]
    IdOutOfRange { id: u32, vocab: usize },
    #[error("sequence of {len} tokens exceeds the context of {context}")]
    TooLong { len: usize, context: usize },
    #[error("sequence of {0} tokens is too short to score")]
    TooShort(usize),
    #[error("bad input shape: {0}")]
    Shape(String),
    #[error("non-finite loss at step {step} (lr {lr:.3e}, grad norm {grad_norm:.3e})")]
    NonFinite { step: usize, lr: f64, grad_norm: f64 },
    #[error("no blocks to {0}")]
    NoBlocks(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Anything that assigns next-token distributions to token sequences.
pub trait LanguageModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Longest sequence the model accepts.
    fn context(&self) -> usize;

    /// Row `t` of the `len x vocab` result is log P(next | ids[..=t]).
    fn next_token_logprobs(&self, ids: &[u32]) -> Result<Vec<f64>, LmError>;

    /// For each of `batch` sequences of length `len`, the log-probability of
    /// every token after the first given its prefix: `batch x (len - 1)` values.
    fn successor_logprobs(&self, ids: &[u32], batch: usize, len: usize) -> Result<Vec<f64>, LmError> {
        if len == 0 || ids.len() != batch * len {
            return Err(LmError::Shape(format!(
                "{} ids do not form {batch} sequences of length {len}",
                ids.len()
            )));
        }
        let v = self.vocab_size();
        let mut out = Vec::with_capacity(batch * (len - 1));
        for seq in ids.chunks(len) {
            let lp = self.next_token_logprobs(seq)?;
            for t in 0..len - 1 {
                out.push(lp[t * v + seq[t + 1] as usize]);
            }
        }
        Ok(out)
    }
}

/// Sum of log P(ids[t] | ids[..t]) for t >= 1.
pub fn sequence_logprob(model: &dyn LanguageModel, ids: &[u32]) -> Result<f64, LmError> {
    if ids.len() < 2 {
        return Err(LmError::TooShort(ids.len()));
    }
    if ids.len() > model.context() {
        return Err(LmError::TooLong {
            len: ids.len(),
            context: model.context(),
        });
    }
    Ok(model.successor_logprobs(ids, 1, ids.len())?.iter().sum())
}

/// Per-position log P(ids[t] | ids[..t]) for t >= 1.
pub fn token_logprobs(model: &dyn LanguageModel, ids: &[u32]) -> Result<Vec<f64>, LmError> {
    if ids.len() < 2 {
        return Err(LmError::TooShort(ids.len()));
    }
    model.successor_logprobs(ids, 1, ids.len())
}

/// exp of the mean NLL over positions whose successor is not padding.
pub fn perplexity(model: &dyn LanguageModel, blocks: &BlockStore) -> Result<f64, LmError> {
    const EVAL_BATCH: usize = 16;
    if blocks.is_empty() {
        return Err(LmError::NoBlocks("evaluate"));
    }
    let c = blocks.context();
    let pad = blocks.pad_id();
    let mut nll = 0.0;
    let mut count = 0usize;
    let mut start = 0;
    while start < blocks.len() {
        let end = (start + EVAL_BATCH).min(blocks.len());
        let ids: Vec<u32> = (start..end).flat_map(|i| blocks.block(i).iter().copied()).collect();
        let lp = model.successor_logprobs(&ids, end - start, c)?;
        for (b, i) in (start..end).enumerate() {
            let real = c - blocks.pad_count(i);
            for t in 0..real.saturating_sub(1) {
                debug_assert_ne!(blocks.block(i)[t + 1], pad);
                nll -= lp[b * (c - 1) + t];
                count += 1;
            }
        }
        start = end;
    }
    if count == 0 {
        return Err(LmError::NoBlocks("evaluate (no scored positions)"));
    }
    Ok((nll / count as f64).exp())
}
