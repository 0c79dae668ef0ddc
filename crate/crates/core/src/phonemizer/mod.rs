//! Orthographic text to IPA phoneme streams.
//!
//! Words are looked up in a pronunciation [`Lexicon`]; words the lexicon does
//! not know go through a context-sensitive [`RuleSet`]. Punctuation is
//! dropped and word boundaries become explicit [`PhonemeUnit::WordBoundary`]
//! items, rendered as the reserved [`WORD_BOUNDARY`] token on disk.

mod inventory;
mod lexicon;
mod normalize;
mod rules;

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use inventory::{PhonemeInventory, EN_US_INVENTORY};
pub use lexicon::{Lexicon, EN_US_LEXICON};
pub use normalize::{normalize_utterance, spell_number};
pub use rules::{ContextItem, RewriteRule, RuleOutcome, RuleSet, EN_US_RULES};

/// Serialized form of a word boundary in phoneme streams.
pub const WORD_BOUNDARY: &str = "WORD_BOUNDARY";

#[derive(Debug, Error)]
pub enum PhonemizerError {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("word {word:?}: phoneme {symbol:?} is not in the {accent} inventory")]
    UnknownPhoneme {
        word: String,
        symbol: String,
        accent: String,
    },
    #[error("rule on line {line}: output phoneme {symbol:?} is not in the inventory")]
    UnknownRulePhoneme { line: usize, symbol: String },
    #[error("invalid inventory: {0}")]
    Inventory(String),
    #[error("invalid phoneme string: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PhonemeUnit {
    Phoneme(String),
    WordBoundary,
}

/// Phonemes with word boundaries between words.
///
/// Never starts or ends with a boundary and never holds two boundaries in a
/// row; the end of the sequence is the utterance boundary.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct PhonemeString {
    units: Vec<PhonemeUnit>,
}

impl PhonemeString {
    /// Joins per-word phoneme lists, skipping words with no phonemes.
    pub fn from_words<I, W>(words: I) -> Self
    where
        I: IntoIterator<Item = W>,
        W: IntoIterator<Item = String>,
    {
        let mut units = Vec::new();
        for word in words {
            let mut phonemes = word.into_iter().peekable();
            if phonemes.peek().is_none() {
                continue;
            }
            if !units.is_empty() {
                units.push(PhonemeUnit::WordBoundary);
            }
            units.extend(phonemes.map(PhonemeUnit::Phoneme));
        }
        Self { units }
    }

    /// Parses a serialized line, checking the boundary invariants.
    pub fn parse(line: &str, boundary: &str) -> Result<Self, PhonemizerError> {
        let mut units = Vec::new();
        for tok in line.split_whitespace() {
            if tok == boundary {
                match units.last() {
                    None => {
                        return Err(PhonemizerError::Malformed(
                            "leading word boundary".into(),
                        ))
                    }
                    Some(PhonemeUnit::WordBoundary) => {
                        return Err(PhonemizerError::Malformed(
                            "consecutive word boundaries".into(),
                        ))
                    }
                    _ => units.push(PhonemeUnit::WordBoundary),
                }
            } else {
                units.push(PhonemeUnit::Phoneme(tok.to_string()));
            }
        }
        if units.last() == Some(&PhonemeUnit::WordBoundary) {
            return Err(PhonemizerError::Malformed("trailing word boundary".into()));
        }
        Ok(Self { units })
    }

    pub fn units(&self) -> &[PhonemeUnit] {
        &self.units
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn phonemes(&self) -> impl Iterator<Item = &str> {
        self.units.iter().filter_map(|u| match u {
            PhonemeUnit::Phoneme(p) => Some(p.as_str()),
            PhonemeUnit::WordBoundary => None,
        })
    }

    pub fn word_count(&self) -> usize {
        if self.units.is_empty() {
            0
        } else {
            1 + self
                .units
                .iter()
                .filter(|u| **u == PhonemeUnit::WordBoundary)
                .count()
        }
    }

    /// Space-separated phonemes with `boundary` between words.
    pub fn render(&self, boundary: &str) -> String {
        let mut out = String::new();
        for (i, u) in self.units.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            match u {
                PhonemeUnit::Phoneme(p) => out.push_str(p),
                PhonemeUnit::WordBoundary => out.push_str(boundary),
            }
        }
        out
    }
}

impl fmt::Display for PhonemeString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(WORD_BOUNDARY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordSource {
    Lexicon,
    Rules,
}

/// Phonemes for one word plus where they came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordOutcome {
    pub phonemes: Vec<String>,
    pub source: WordSource,
    pub misses: usize,
}

/// Counters reported by [`Phonemizer::phonemize_corpus`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionStats {
    pub lines: u64,
    pub words: u64,
    pub phonemes: u64,
    pub lexicon_hits: u64,
    pub rule_fallbacks: u64,
    pub coverage_misses: u64,
}

impl ConversionStats {
    fn absorb(&mut self, other: &ConversionStats) {
        self.lines += other.lines;
        self.words += other.words;
        self.phonemes += other.phonemes;
        self.lexicon_hits += other.lexicon_hits;
        self.rule_fallbacks += other.rule_fallbacks;
        self.coverage_misses += other.coverage_misses;
    }
}

impl fmt::Display for ConversionStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lines={} words={} phonemes={} lexicon_hits={} rule_fallbacks={} coverage_misses={}",
            self.lines,
            self.words,
            self.phonemes,
            self.lexicon_hits,
            self.rule_fallbacks,
            self.coverage_misses
        )
    }
}

/// Knobs for corpus conversion.
#[derive(Debug, Clone)]
pub struct CorpusOptions {
    /// Worker threads; 1 converts on the calling thread.
    pub jobs: usize,
    /// Token written between words.
    pub boundary: String,
    /// Lines converted per parallel batch.
    pub chunk_lines: usize,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            boundary: WORD_BOUNDARY.to_string(),
            chunk_lines: 4096,
        }
    }
}

/// Inventory, lexicon and rules for one accent. Immutable once built and
/// safe to share between threads.
#[derive(Debug, Clone)]
pub struct Phonemizer {
    inventory: PhonemeInventory,
    lexicon: Lexicon,
    rules: RuleSet,
}

impl Phonemizer {
    pub fn new(inventory: PhonemeInventory, lexicon: Lexicon, rules: RuleSet) -> Self {
        Self {
            inventory,
            lexicon,
            rules,
        }
    }

    /// Bundled en-US inventory, seed lexicon and rules.
    pub fn en_us() -> Self {
        let inventory = PhonemeInventory::en_us();
        let lexicon = Lexicon::en_us(&inventory);
        let rules = RuleSet::en_us(&inventory);
        Self::new(inventory, lexicon, rules)
    }

    /// Loads all three assets from disk.
    pub fn load(
        inventory: &Path,
        lexicon: &Path,
        rules: &Path,
        accent_id: &str,
    ) -> Result<Self, PhonemizerError> {
        let inventory = PhonemeInventory::load(accent_id, inventory)?;
        let lexicon = Lexicon::load(lexicon, &inventory)?;
        let rules = RuleSet::load(rules, &inventory)?;
        Ok(Self::new(inventory, lexicon, rules))
    }

    pub fn inventory(&self) -> &PhonemeInventory {
        &self.inventory
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn phonemize_word(&self, word: &str) -> Vec<String> {
        self.phonemize_word_traced(word).phonemes
    }

    /// Lexicon first; the rule engine only sees words the lexicon lacks.
    pub fn phonemize_word_traced(&self, word: &str) -> WordOutcome {
        if let Some(entry) = self.lexicon.get(word) {
            return WordOutcome {
                phonemes: entry.to_vec(),
                source: WordSource::Lexicon,
                misses: 0,
            };
        }
        let out = self.rules.apply(word);
        WordOutcome {
            phonemes: out.phonemes,
            source: WordSource::Rules,
            misses: out.misses,
        }
    }

    pub fn phonemize_utterance(&self, text: &str) -> PhonemeString {
        self.phonemize_line(text).0
    }

    fn phonemize_line(&self, text: &str) -> (PhonemeString, ConversionStats) {
        let mut stats = ConversionStats {
            lines: 1,
            ..Default::default()
        };
        let words = normalize_utterance(text);
        let mut phonemized = Vec::with_capacity(words.len());
        for word in &words {
            let out = self.phonemize_word_traced(word);
            match out.source {
                WordSource::Lexicon => stats.lexicon_hits += 1,
                WordSource::Rules => stats.rule_fallbacks += 1,
            }
            stats.coverage_misses += out.misses as u64;
            phonemized.push(out.phonemes);
        }
        let ps = PhonemeString::from_words(phonemized);
        stats.words = ps.word_count() as u64;
        stats.phonemes = ps.phonemes().count() as u64;
        (ps, stats)
    }

    /// Converts one utterance per line, writing one serialized phoneme string
    /// per input line in input order.
    pub fn phonemize_corpus<R: BufRead, W: Write>(
        &self,
        input: R,
        mut output: W,
        options: &CorpusOptions,
    ) -> Result<ConversionStats, PhonemizerError> {
        let pool = if options.jobs > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(options.jobs)
                    .build()
                    .map_err(|e| PhonemizerError::Io(std::io::Error::other(e)))?,
            )
        } else {
            None
        };
        let chunk_lines = options.chunk_lines.max(1);
        let mut total = ConversionStats::default();
        let mut lines = input.lines();
        loop {
            let mut chunk = Vec::with_capacity(chunk_lines);
            for line in lines.by_ref().take(chunk_lines) {
                chunk.push(line?);
            }
            if chunk.is_empty() {
                break;
            }
            let convert = |line: &String| {
                let (ps, stats) = self.phonemize_line(line.trim_end_matches('\r'));
                (ps.render(&options.boundary), stats)
            };
            let converted: Vec<(String, ConversionStats)> = match &pool {
                Some(pool) => pool.install(|| chunk.par_iter().map(convert).collect()),
                None => chunk.iter().map(convert).collect(),
            };
            for (text, stats) in &converted {
                output.write_all(text.as_bytes())?;
                output.write_all(b"\n")?;
                total.absorb(stats);
            }
        }
        output.flush()?;
        Ok(total)
    }
}
