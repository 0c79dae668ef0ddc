use super::{LanguageModel, LmError};

/// A first-order Markov model given as a table of next-token log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct BigramModel {
    vocab: usize,
    context: usize,
    /// Row `a` holds log P(b | a).
    table: Vec<f64>,
}

impl BigramModel {
    /// Builds from per-row probabilities; each row must sum to 1.
    pub fn from_probs(probs: &[Vec<f64>], context: usize) -> Result<Self, LmError> {
        let vocab = probs.len();
        let mut table = Vec::with_capacity(vocab * vocab);
        for (a, row) in probs.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.len() != vocab || (sum - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < 0.0) {
                return Err(LmError::Config(format!(
                    "row {a} is not a distribution over {vocab} tokens"
                )));
            }
            table.extend(row.iter().map(|p| p.ln()));
        }
        Ok(Self {
            vocab,
            context,
            table,
        })
    }

    /// Add-`alpha` smoothed maximum-likelihood estimate from token sequences.
    pub fn fit<'a, I>(sequences: I, vocab: usize, alpha: f64, context: usize) -> Self
    where
        I: IntoIterator<Item = &'a [u32]>,
    {
        let mut counts = vec![alpha; vocab * vocab];
        for seq in sequences {
            for w in seq.windows(2) {
                counts[w[0] as usize * vocab + w[1] as usize] += 1.0;
            }
        }
        let mut table = counts;
        for row in table.chunks_mut(vocab) {
            let total: f64 = row.iter().sum();
            for x in row.iter_mut() {
                *x = if total > 0.0 { (*x / total).ln() } else { -(vocab as f64).ln() };
            }
        }
        Self {
            vocab,
            context,
            table,
        }
    }

    pub fn logprob(&self, prev: u32, next: u32) -> f64 {
        self.table[prev as usize * self.vocab + next as usize]
    }
}

impl LanguageModel for BigramModel {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn context(&self) -> usize {
        self.context
    }

    fn next_token_logprobs(&self, ids: &[u32]) -> Result<Vec<f64>, LmError> {
        let mut out = Vec::with_capacity(ids.len() * self.vocab);
        for &id in ids {
            if id as usize >= self.vocab {
                return Err(LmError::IdOutOfRange { id, vocab: self.vocab });
            }
            out.extend_from_slice(&self.table[id as usize * self.vocab..][..self.vocab]);
        }
        Ok(out)
    }
}
