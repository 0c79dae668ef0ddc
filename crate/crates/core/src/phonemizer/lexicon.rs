use std::collections::HashMap;
use std::path::Path;

use super::{PhonemeInventory, PhonemizerError};

pub const EN_US_LEXICON: &str = include_str!("../../assets/en_us/lexicon.tsv");

/// Pronunciation dictionary: normalized word to phoneme symbols.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, Vec<String>>,
    duplicates: usize,
}

impl Lexicon {
    /// Parses `word<TAB>ph ph ph` lines, validating every symbol against `inventory`.
    ///
    /// `#` lines are comments. When a word appears more than once the first
    /// pronunciation wins and the repeat is counted in [`Lexicon::duplicates`].
    pub fn parse(
        source: &str,
        text: &str,
        inventory: &PhonemeInventory,
    ) -> Result<Self, PhonemizerError> {
        let mut lexicon = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let parse_err = |message: &str| PhonemizerError::Parse {
                source_name: source.to_string(),
                line: line_no,
                message: message.to_string(),
            };
            let (word, pron) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("missing tab between word and pronunciation"))?;
            let word = word.trim();
            if word.is_empty() {
                return Err(parse_err("empty word"));
            }
            if !is_normalized_word(word) {
                return Err(parse_err(&format!(
                    "word {word:?} is not lower-case and punctuation-free"
                )));
            }
            let phonemes: Vec<String> = pron.split_whitespace().map(str::to_string).collect();
            if phonemes.is_empty() {
                return Err(parse_err("empty pronunciation"));
            }
            if let Some(bad) = phonemes.iter().find(|p| !inventory.contains(p)) {
                return Err(PhonemizerError::UnknownPhoneme {
                    word: word.to_string(),
                    symbol: bad.clone(),
                    accent: inventory.accent_id().to_string(),
                });
            }
            if lexicon.entries.contains_key(word) {
                lexicon.duplicates += 1;
            } else {
                lexicon.entries.insert(word.to_string(), phonemes);
            }
        }
        Ok(lexicon)
    }

    pub fn load(path: &Path, inventory: &PhonemeInventory) -> Result<Self, PhonemizerError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&path.display().to_string(), &text, inventory)
    }

    /// The bundled en-US seed lexicon.
    pub fn en_us(inventory: &PhonemeInventory) -> Self {
        Self::parse("en_us/lexicon.tsv", EN_US_LEXICON, inventory)
            .expect("bundled lexicon is valid")
    }

    pub fn get(&self, word: &str) -> Option<&[String]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of repeated words ignored while loading.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Lower-case letters with optional word-internal apostrophes, the form
/// produced by utterance normalization.
fn is_normalized_word(word: &str) -> bool {
    let chars: Vec<char> = word.chars().collect();
    chars.iter().enumerate().all(|(i, &c)| {
        if c == '\'' {
            i > 0 && i + 1 < chars.len() && chars[i - 1].is_alphabetic() && chars[i + 1].is_alphabetic()
        } else {
            c.is_alphabetic() && !c.is_uppercase()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv() -> PhonemeInventory {
        PhonemeInventory::en_us()
    }

    #[test]
    fn single_line() {
        let lex = Lexicon::parse("t", "cat\tk æ t\n", &inv()).unwrap();
        assert_eq!(lex.len(), 1);
        assert_eq!(lex.get("cat").unwrap(), ["k", "æ", "t"]);
    }

    #[test]
    fn empty_file() {
        let lex = Lexicon::parse("t", "", &inv()).unwrap();
        assert!(lex.is_empty());
    }

    #[test]
    fn unknown_symbol_is_named() {
        let err = Lexicon::parse("t", "cat\tk q t\n", &inv()).unwrap_err();
        match err {
            PhonemizerError::UnknownPhoneme { word, symbol, .. } => {
                assert_eq!(word, "cat");
                assert_eq!(symbol, "q");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let err = Lexicon::parse("t", "# header\ncat k æ t\n", &inv()).unwrap_err();
        assert!(matches!(err, PhonemizerError::Parse { line: 2, .. }), "{err}");
        let err = Lexicon::parse("t", "cat\t   \n", &inv()).unwrap_err();
        assert!(matches!(err, PhonemizerError::Parse { line: 1, .. }), "{err}");
        let err = Lexicon::parse("t", "ca.t\tk\n", &inv()).unwrap_err();
        assert!(matches!(err, PhonemizerError::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn duplicates_keep_first() {
        let lex = Lexicon::parse("t", "cat\tk æ t\ncat\tk ɑː t\n", &inv()).unwrap();
        assert_eq!(lex.get("cat").unwrap(), ["k", "æ", "t"]);
        assert_eq!(lex.duplicates(), 1);
    }

    #[test]
    fn bundled_lexicon_is_large_and_valid() {
        let inv = inv();
        let lex = Lexicon::en_us(&inv);
        assert!(lex.len() >= 5000, "{}", lex.len());
        assert_eq!(
            lex.get("temperature").unwrap(),
            ["t", "ɛ", "m", "p", "ɹ", "ə", "tʃ", "ə", "ɹ"]
        );
        assert!(lex.get("don't").is_some());
    }
}
