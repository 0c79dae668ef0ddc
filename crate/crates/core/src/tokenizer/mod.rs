//! Character and BPE tokenizers over orthographic or phonemic lines.
//!
//! Every configuration in [`TransformFlags`] yields a [`Tokenizer`]. Encoded
//! sequences start with the utterance-boundary token. The word-boundary unit
//! is a space for orthographic text and [`WORD_BOUNDARY`] for phoneme
//! streams; it is dropped entirely when `remove_word_boundaries` is set.

mod bpe;
mod flags;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::phonemizer::WORD_BOUNDARY;

pub use flags::{TransformFlags, Transformation};

pub const UTT_BOUNDARY_ID: u32 = 0;
pub const PAD_ID: u32 = 1;
pub const UNK_ID: u32 = 2;
pub const SPECIAL_TOKENS: [&str; 3] = ["UTT_BOUNDARY", "PAD", "UNK"];
pub const FILE_VERSION: u32 = 1;

/// Token ids; position 0 is [`UTT_BOUNDARY_ID`] when produced by [`Tokenizer::encode`].
pub type TokenSequence = Vec<u32>;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("training corpus has no tokens")]
    EmptyCorpus,
    #[error("vocab size {requested} is too small: the base vocabulary already has {base} entries")]
    VocabTooSmall { requested: usize, base: usize },
    #[error("flags {flags} do not describe a {expected} tokenizer")]
    FlagMismatch {
        flags: TransformFlags,
        expected: &'static str,
    },
    #[error("token id {id} is out of range for a vocabulary of {size}")]
    IdOutOfRange { id: u32, size: usize },
    #[error("unsupported tokenizer file version {found} (expected {expected})")]
    Version { found: u64, expected: u32 },
    #[error("malformed tokenizer file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerKind {
    Char,
    Bpe,
}

/// Id/token bijection with the three specials at ids 0 to 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, u32>,
}

impl Vocabulary {
    fn with_specials() -> Self {
        let mut v = Self {
            id_to_token: Vec::new(),
            token_to_id: HashMap::new(),
        };
        for s in SPECIAL_TOKENS {
            v.insert(s.to_string());
        }
        v
    }

    fn from_tokens(tokens: Vec<String>) -> Result<Self, TokenizerError> {
        if tokens.len() < SPECIAL_TOKENS.len()
            || tokens.iter().zip(SPECIAL_TOKENS).any(|(t, s)| t != s)
        {
            return Err(TokenizerError::Malformed(format!(
                "vocabulary must start with {SPECIAL_TOKENS:?}"
            )));
        }
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if token_to_id.insert(t.clone(), i as u32).is_some() {
                return Err(TokenizerError::Malformed(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self {
            id_to_token: tokens,
            token_to_id,
        })
    }

    /// Returns the id of `token`, adding it if new.
    fn insert(&mut self, token: String) -> u32 {
        if let Some(&id) = self.token_to_id.get(&token) {
            return id;
        }
        let id = self.id_to_token.len() as u32;
        self.token_to_id.insert(token.clone(), id);
        self.id_to_token.push(token);
        id
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }
}

/// How lines are cut into atomic units.
#[derive(Debug, Clone, Copy)]
struct Units {
    phonemic: bool,
    keep_boundaries: bool,
}

/// One atomic unit of a line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit<'a> {
    Symbol(&'a str),
    Boundary,
}

impl Units {
    fn boundary_str(self) -> &'static str {
        if self.phonemic {
            WORD_BOUNDARY
        } else {
            " "
        }
    }

    fn joiner(self) -> &'static str {
        if self.phonemic {
            " "
        } else {
            ""
        }
    }

    /// Units of `line` with boundary runs collapsed and edges trimmed.
    /// Boundaries are kept regardless of the flag.
    fn split_all(self, line: &str) -> Vec<Unit<'_>> {
        fn push<'a>(u: Unit<'a>, out: &mut Vec<Unit<'a>>) {
            if u == Unit::Boundary && matches!(out.last(), None | Some(Unit::Boundary)) {
                return;
            }
            out.push(u);
        }
        let mut out = Vec::new();
        if self.phonemic {
            for tok in line.split_whitespace() {
                let u = if tok == WORD_BOUNDARY {
                    Unit::Boundary
                } else {
                    Unit::Symbol(tok)
                };
                push(u, &mut out);
            }
        } else {
            for (i, c) in line.char_indices() {
                let u = if c.is_whitespace() {
                    Unit::Boundary
                } else {
                    Unit::Symbol(&line[i..i + c.len_utf8()])
                };
                push(u, &mut out);
            }
        }
        if out.last() == Some(&Unit::Boundary) {
            out.pop();
        }
        out
    }

    fn split(self, line: &str) -> Vec<Unit<'_>> {
        let mut units = self.split_all(line);
        if !self.keep_boundaries {
            units.retain(|u| *u != Unit::Boundary);
        }
        units
    }

    fn unit_str<'a>(self, u: Unit<'a>) -> &'a str {
        match u {
            Unit::Symbol(s) => s,
            Unit::Boundary => self.boundary_str(),
        }
    }

    /// Pretokens for BPE: one per word with the boundary leading the next
    /// word, or the whole line when boundaries are removed.
    fn pretokens<'a>(self, units: &[Unit<'a>]) -> Vec<Vec<Unit<'a>>> {
        if !self.keep_boundaries {
            return if units.is_empty() {
                Vec::new()
            } else {
                vec![units.to_vec()]
            };
        }
        let mut out: Vec<Vec<Unit<'a>>> = Vec::new();
        for &u in units {
            if u == Unit::Boundary || out.is_empty() {
                out.push(Vec::new());
            }
            out.last_mut().unwrap().push(u);
        }
        out
    }
}

/// A trained tokenizer. Immutable after training and safe to share across threads.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    flags: TransformFlags,
    kind: TokenizerKind,
    vocab: Vocabulary,
    merges: Vec<(u32, u32)>,
    merge_ranks: HashMap<(u32, u32), (usize, u32)>,
}

impl Tokenizer {
    /// Trains a character or BPE tokenizer depending on `flags.character_tokenization`.
    /// `vocab_size` is ignored for character tokenizers.
    pub fn train<I, S>(corpus: I, flags: TransformFlags, vocab_size: usize) -> Result<Self, TokenizerError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if flags.character_tokenization {
            Self::train_char(corpus, flags)
        } else {
            Self::train_bpe(corpus, flags, vocab_size)
        }
    }

    /// Vocabulary is the specials plus every distinct atomic unit, sorted.
    pub fn train_char<I, S>(corpus: I, flags: TransformFlags) -> Result<Self, TokenizerError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if !flags.character_tokenization {
            return Err(TokenizerError::FlagMismatch {
                flags,
                expected: "character",
            });
        }
        let units = units_for(flags);
        let alphabet = collect_alphabet(corpus, units)?;
        let mut vocab = Vocabulary::with_specials();
        for s in alphabet {
            vocab.insert(s);
        }
        Ok(Self::assemble(flags, TokenizerKind::Char, vocab, Vec::new()))
    }

    /// Byte-pair encoding over atomic units. Merging stops at `vocab_size`
    /// or when no pair occurs at least twice.
    pub fn train_bpe<I, S>(corpus: I, flags: TransformFlags, vocab_size: usize) -> Result<Self, TokenizerError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if flags.character_tokenization {
            return Err(TokenizerError::FlagMismatch { flags, expected: "BPE" });
        }
        let units = units_for(flags);
        let mut word_counts: HashMap<Vec<String>, u64> = HashMap::new();
        let mut alphabet = BTreeSet::new();
        for line in corpus {
            let split = units.split(line.as_ref());
            for pre in units.pretokens(&split) {
                let strs: Vec<String> = pre.iter().map(|&u| units.unit_str(u).to_string()).collect();
                alphabet.extend(strs.iter().cloned());
                *word_counts.entry(strs).or_default() += 1;
            }
        }
        if alphabet.is_empty() {
            return Err(TokenizerError::EmptyCorpus);
        }
        let mut vocab = Vocabulary::with_specials();
        for s in alphabet {
            vocab.insert(s);
        }
        if vocab_size <= vocab.len() {
            return Err(TokenizerError::VocabTooSmall {
                requested: vocab_size,
                base: vocab.len(),
            });
        }
        // sorted so that training never depends on hash order
        let mut words: Vec<(Vec<String>, u64)> = word_counts.into_iter().collect();
        words.sort();
        let words: Vec<(Vec<u32>, u64)> = words
            .into_iter()
            .map(|(w, c)| (w.iter().map(|s| vocab.id(s).unwrap()).collect(), c))
            .collect();
        let merges = bpe::learn_merges(words, &mut vocab, units.joiner(), vocab_size);
        Ok(Self::assemble(flags, TokenizerKind::Bpe, vocab, merges))
    }

    fn assemble(
        flags: TransformFlags,
        kind: TokenizerKind,
        vocab: Vocabulary,
        merges: Vec<(u32, u32)>,
    ) -> Self {
        let units = units_for(flags);
        let merge_ranks = merges
            .iter()
            .enumerate()
            .map(|(rank, &(l, r))| {
                let joined = join_tokens(&vocab, l, r, units.joiner());
                ((l, r), (rank, vocab.id(&joined).expect("merged token in vocabulary")))
            })
            .collect();
        Self {
            flags,
            kind,
            vocab,
            merges,
            merge_ranks,
        }
    }

    pub fn flags(&self) -> TransformFlags {
        self.flags
    }

    pub fn kind(&self) -> TokenizerKind {
        self.kind
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Merge table as (left, right) token ids in rank order.
    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    fn units(&self) -> Units {
        units_for(self.flags)
    }

    fn unit_id(&self, units: Units, u: Unit<'_>) -> u32 {
        self.vocab.id(units.unit_str(u)).unwrap_or(UNK_ID)
    }

    pub fn encode(&self, line: &str) -> TokenSequence {
        let units = self.units();
        let split = units.split(line);
        let mut ids = Vec::with_capacity(split.len() + 1);
        ids.push(UTT_BOUNDARY_ID);
        match self.kind {
            TokenizerKind::Char => ids.extend(split.iter().map(|&u| self.unit_id(units, u))),
            TokenizerKind::Bpe => {
                for pre in units.pretokens(&split) {
                    let base: Vec<u32> = pre.iter().map(|&u| self.unit_id(units, u)).collect();
                    ids.extend(self.apply_merges(base).into_iter().map(|(id, _)| id));
                }
            }
        }
        ids
    }

    /// Repeatedly merges the lowest-ranked adjacent pair. Returns each token
    /// with the number of atomic units it covers.
    fn apply_merges(&self, ids: Vec<u32>) -> Vec<(u32, usize)> {
        let mut toks: Vec<(u32, usize)> = ids.into_iter().map(|id| (id, 1)).collect();
        loop {
            let best = toks
                .windows(2)
                .filter_map(|w| self.merge_ranks.get(&(w[0].0, w[1].0)).map(|&(rank, _)| rank))
                .min();
            let Some(rank) = best else { break };
            let (l, r) = self.merges[rank];
            let merged = self.merge_ranks[&(l, r)].1;
            let mut out = Vec::with_capacity(toks.len());
            let mut i = 0;
            while i < toks.len() {
                if i + 1 < toks.len() && toks[i].0 == l && toks[i + 1].0 == r {
                    out.push((merged, toks[i].1 + toks[i + 1].1));
                    i += 2;
                } else {
                    out.push(toks[i]);
                    i += 1;
                }
            }
            toks = out;
        }
        toks
    }

    /// Renders ids back to a line. Specials are omitted.
    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let units = self.units();
        let mut out = String::new();
        for &id in ids {
            let tok = self.vocab.token(id).ok_or(TokenizerError::IdOutOfRange {
                id,
                size: self.vocab.len(),
            })?;
            if (id as usize) < SPECIAL_TOKENS.len() {
                continue;
            }
            if units.phonemic && !out.is_empty() {
                out.push(' ');
            }
            out.push_str(tok);
        }
        Ok(out)
    }

    /// Token ids whose text spans a word boundary of the original line.
    ///
    /// Only meaningful for BPE tokenizers without boundaries, whose merges
    /// may join the end of one word to the start of the next.
    pub fn boundary_crossing_tokens<I, S>(&self, lines: I) -> BTreeSet<u32>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let units = self.units();
        let mut found = BTreeSet::new();
        for line in lines {
            let all = units.split_all(line.as_ref());
            let mut cuts = BTreeSet::new();
            let mut base = Vec::with_capacity(all.len());
            for u in all {
                if u == Unit::Boundary {
                    cuts.insert(base.len());
                } else {
                    base.push(self.unit_id(units, u));
                }
            }
            let toks = if self.kind == TokenizerKind::Bpe && !units.keep_boundaries {
                self.apply_merges(base)
            } else {
                continue;
            };
            let mut start = 0;
            for (id, len) in toks {
                if cuts.range(start + 1..start + len).next().is_some() {
                    found.insert(id);
                }
                start += len;
            }
        }
        found
    }

    /// Canonical file bytes. Identical tokenizers give identical bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let file = TokenizerFile {
            version: FILE_VERSION,
            kind: self.kind,
            flags: self.flags,
            specials: Specials {
                utt_boundary: UTT_BOUNDARY_ID,
                pad: PAD_ID,
                unk: UNK_ID,
            },
            vocabulary: self.vocab.id_to_token.clone(),
            merges: self
                .merges
                .iter()
                .map(|&(l, r)| {
                    [
                        self.vocab.id_to_token[l as usize].clone(),
                        self.vocab.id_to_token[r as usize].clone(),
                    ]
                })
                .collect(),
        };
        let mut bytes = serde_json::to_vec_pretty(&file).expect("tokenizer serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TokenizerError> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| TokenizerError::Malformed(e.to_string()))?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| TokenizerError::Malformed("missing version".into()))?;
        if version != u64::from(FILE_VERSION) {
            return Err(TokenizerError::Version {
                found: version,
                expected: FILE_VERSION,
            });
        }
        let file: TokenizerFile =
            serde_json::from_value(value).map_err(|e| TokenizerError::Malformed(e.to_string()))?;
        if file.specials
            != (Specials {
                utt_boundary: UTT_BOUNDARY_ID,
                pad: PAD_ID,
                unk: UNK_ID,
            })
        {
            return Err(TokenizerError::Malformed("special ids must be 0, 1, 2".into()));
        }
        let expected_kind = if file.flags.character_tokenization {
            TokenizerKind::Char
        } else {
            TokenizerKind::Bpe
        };
        if file.kind != expected_kind {
            return Err(TokenizerError::Malformed(format!(
                "kind {:?} disagrees with flags {}",
                file.kind, file.flags
            )));
        }
        if file.kind == TokenizerKind::Char && !file.merges.is_empty() {
            return Err(TokenizerError::Malformed("character tokenizer with merges".into()));
        }
        let vocab = Vocabulary::from_tokens(file.vocabulary)?;
        let units = units_for(file.flags);
        let mut merges = Vec::with_capacity(file.merges.len());
        for [l, r] in &file.merges {
            let lookup = |t: &str| {
                vocab
                    .id(t)
                    .ok_or_else(|| TokenizerError::Malformed(format!("merge token {t:?} not in vocabulary")))
            };
            let pair = (lookup(l)?, lookup(r)?);
            lookup(&format!("{l}{}{r}", units.joiner()))?;
            merges.push(pair);
        }
        Ok(Self::assemble(file.flags, file.kind, vocab, merges))
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Hex SHA-256 of [`Tokenizer::to_bytes`].
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

impl fmt::Display for Tokenizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} tokenizer ({} tokens, {} merges)",
            self.flags,
            self.vocab.len(),
            self.merges.len()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Specials {
    #[serde(rename = "UTT_BOUNDARY")]
    utt_boundary: u32,
    #[serde(rename = "PAD")]
    pad: u32,
    #[serde(rename = "UNK")]
    unk: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenizerFile {
    version: u32,
    kind: TokenizerKind,
    flags: TransformFlags,
    specials: Specials,
    vocabulary: Vec<String>,
    merges: Vec<[String; 2]>,
}

fn units_for(flags: TransformFlags) -> Units {
    Units {
        phonemic: flags.phonemic,
        keep_boundaries: !flags.remove_word_boundaries,
    }
}

fn join_tokens(vocab: &Vocabulary, l: u32, r: u32, joiner: &str) -> String {
    format!(
        "{}{joiner}{}",
        vocab.id_to_token[l as usize], vocab.id_to_token[r as usize]
    )
}

fn collect_alphabet<I, S>(corpus: I, units: Units) -> Result<BTreeSet<String>, TokenizerError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut alphabet = BTreeSet::new();
    for line in corpus {
        for u in units.split(line.as_ref()) {
            let s = units.unit_str(u);
            if !alphabet.contains(s) {
                alphabet.insert(s.to_string());
            }
        }
    }
    if alphabet.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    Ok(alphabet)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAR_B_P: TransformFlags = TransformFlags::new(true, false, true);
    const CHAR_NB_P: TransformFlags = TransformFlags::new(true, true, true);
    const CHAR_B_O: TransformFlags = TransformFlags::new(true, false, false);
    const BPE_B_O: TransformFlags = TransformFlags::new(false, false, false);
    const BPE_NB_O: TransformFlags = TransformFlags::new(false, true, false);

    const WHAT: &str = "w ʌ t WORD_BOUNDARY ʌ WORD_BOUNDARY k ə n ʌ n d ɹ ə m";

    fn tokens(t: &Tokenizer, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| t.vocab().token(i).unwrap().to_string()).collect()
    }

    #[test]
    fn char_vocab_without_space() {
        let t = Tokenizer::train_char(["abab", "ba"], CHAR_B_O).unwrap();
        assert_eq!(t.vocab().tokens(), ["UTT_BOUNDARY", "PAD", "UNK", "a", "b"]);
        assert!(t.merges().is_empty());
    }

    #[test]
    fn boundary_token_is_the_only_difference() {
        let with = Tokenizer::train_char([WHAT], CHAR_B_P).unwrap();
        let without = Tokenizer::train_char([WHAT], CHAR_NB_P).unwrap();
        assert_eq!(with.vocab_size(), without.vocab_size() + 1);
        assert!(with.vocab().id(WORD_BOUNDARY).is_some());
        assert!(without.vocab().id(WORD_BOUNDARY).is_none());
    }

    #[test]
    fn phonemic_char_encoding() {
        let with = Tokenizer::train_char([WHAT], CHAR_B_P).unwrap();
        let ids = with.encode(WHAT);
        assert_eq!(ids[0], UTT_BOUNDARY_ID);
        let mut expected = vec!["UTT_BOUNDARY".to_string()];
        expected.extend(WHAT.split(' ').map(str::to_string));
        assert_eq!(tokens(&with, &ids), expected);
        assert_eq!(with.decode(&ids).unwrap(), WHAT);

        let without = Tokenizer::train_char([WHAT], CHAR_NB_P).unwrap();
        let ids = without.encode(WHAT);
        assert_eq!(ids.len(), 1 + 13);
        assert_eq!(without.decode(&ids).unwrap(), "w ʌ t ʌ k ə n ʌ n d ɹ ə m");
    }

    #[test]
    fn multi_codepoint_phonemes_are_atomic() {
        let t = Tokenizer::train_char(["t ɛ m p ɹ ə tʃ ə ɹ"], CHAR_B_P).unwrap();
        assert!(t.vocab().id("tʃ").is_some());
        assert_eq!(t.encode("tʃ").len(), 2);
    }

    #[test]
    fn empty_line_and_unknown_units() {
        let t = Tokenizer::train_char(["ab"], CHAR_B_O).unwrap();
        assert_eq!(t.encode(""), vec![UTT_BOUNDARY_ID]);
        assert_eq!(t.encode("az")[2], UNK_ID);
        assert!(matches!(
            t.decode(&[1_000_000_000]),
            Err(TokenizerError::IdOutOfRange { .. })
        ));
    }

    #[test]
    fn training_errors() {
        let empty: [&str; 0] = [];
        assert!(matches!(
            Tokenizer::train_char(empty, CHAR_B_O),
            Err(TokenizerError::EmptyCorpus)
        ));
        assert!(matches!(
            Tokenizer::train_bpe(["", "  "], BPE_B_O, 100),
            Err(TokenizerError::EmptyCorpus)
        ));
        assert!(matches!(
            Tokenizer::train_bpe(["ab"], BPE_B_O, 5),
            Err(TokenizerError::VocabTooSmall { requested: 5, base: 5 })
        ));
        assert!(Tokenizer::train_bpe(["ab"], CHAR_B_O, 10).is_err());
    }

    #[test]
    fn single_pair_merge() {
        let t = Tokenizer::train_bpe(["ab", "ab", "ab"], BPE_B_O, 6).unwrap();
        assert_eq!(tokens(&t, &[t.merges()[0].0, t.merges()[0].1]), ["a", "b"]);
        assert_eq!(tokens(&t, &t.encode("ab")), ["UTT_BOUNDARY", "ab"]);
    }

    #[test]
    fn low_lower_lowest() {
        let t = Tokenizer::train_bpe(["low low low lower lowest"], BPE_B_O, 16).unwrap();
        let merged: Vec<String> = t
            .merges()
            .iter()
            .map(|&(l, r)| join_tokens(t.vocab(), l, r, ""))
            .collect();
        assert_eq!(&merged[..2], ["lo", "low"]);
    }

    #[test]
    fn boundary_attaches_to_following_word() {
        let corpus = ["what a conundrum"; 4];
        let t = Tokenizer::train_bpe(corpus, BPE_B_O, 64).unwrap();
        assert_eq!(
            tokens(&t, &t.encode("what a conundrum")),
            ["UTT_BOUNDARY", "what", " a", " conundrum"]
        );
        assert_eq!(t.decode(&t.encode("what  a conundrum ")).unwrap(), "what a conundrum");
    }

    #[test]
    fn boundary_removal_allows_crossing_tokens() {
        let corpus = ["what a conundrum", "a conundrum", "what a con"];
        let t = Tokenizer::train_bpe(corpus, BPE_NB_O, 40).unwrap();
        assert!(t.vocab().id("acon").is_some());
        let crossing = t.boundary_crossing_tokens(corpus);
        assert!(crossing.contains(&t.vocab().id("acon").unwrap()));
        assert_eq!(t.decode(&t.encode("what a conundrum")).unwrap(), "whataconundrum");
    }

    #[test]
    fn phonemic_bpe_tokens_join_with_spaces() {
        let corpus = [WHAT; 3];
        let t = Tokenizer::train_bpe(corpus, TransformFlags::new(false, false, true), 40).unwrap();
        let toks = tokens(&t, &t.encode(WHAT));
        assert_eq!(toks[1], "w ʌ t");
        assert_eq!(toks[2], "WORD_BOUNDARY ʌ");
        assert_eq!(t.decode(&t.encode(WHAT)).unwrap(), WHAT);
    }

    #[test]
    fn file_round_trip_and_digest() {
        let corpus = ["the cat sat", "the cats sat on the mat", "a cat"];
        for flags in TransformFlags::all() {
            let t = Tokenizer::train(corpus, flags, 30).unwrap();
            let back = Tokenizer::from_bytes(&t.to_bytes()).unwrap();
            assert_eq!(back.to_bytes(), t.to_bytes());
            assert_eq!(back.digest(), t.digest());
            for line in corpus {
                assert_eq!(back.encode(line), t.encode(line));
            }
        }
    }

    #[test]
    fn version_mismatch_is_reported() {
        let t = Tokenizer::train_char(["ab"], CHAR_B_O).unwrap();
        let text = String::from_utf8(t.to_bytes()).unwrap().replace("\"version\": 1", "\"version\": 7");
        assert!(matches!(
            Tokenizer::from_bytes(text.as_bytes()),
            Err(TokenizerError::Version { found: 7, expected: 1 })
        ));
        assert!(matches!(
            Tokenizer::from_bytes(b"{\"version\": 1}"),
            Err(TokenizerError::Malformed(_))
        ));
        assert!(Tokenizer::from_bytes(b"not json").is_err());
    }
}
