use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which of the three input transformations a tokenizer applies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransformFlags {
    pub character_tokenization: bool,
    pub remove_word_boundaries: bool,
    pub phonemic: bool,
}

impl TransformFlags {
    pub const fn new(character_tokenization: bool, remove_word_boundaries: bool, phonemic: bool) -> Self {
        Self {
            character_tokenization,
            remove_word_boundaries,
            phonemic,
        }
    }

    /// All eight combinations, in binary order (character, boundaries, phonemic).
    pub fn all() -> [TransformFlags; 8] {
        let mut out = [TransformFlags::default(); 8];
        for (i, f) in out.iter_mut().enumerate() {
            *f = TransformFlags::new(i & 4 != 0, i & 2 != 0, i & 1 != 0);
        }
        out
    }

    pub fn get(self, t: Transformation) -> bool {
        match t {
            Transformation::CharacterTokenization => self.character_tokenization,
            Transformation::WordBoundaryRemoval => self.remove_word_boundaries,
            Transformation::PhonemicTranscription => self.phonemic,
        }
    }

    pub fn with(mut self, t: Transformation, on: bool) -> Self {
        match t {
            Transformation::CharacterTokenization => self.character_tokenization = on,
            Transformation::WordBoundaryRemoval => self.remove_word_boundaries = on,
            Transformation::PhonemicTranscription => self.phonemic = on,
        }
        self
    }
}

impl fmt::Display for TransformFlags {
    /// Short label such as `char+noboundary+phonemic` or `bpe+boundary+ortho`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}+{}+{}",
            if self.character_tokenization { "char" } else { "bpe" },
            if self.remove_word_boundaries { "noboundary" } else { "boundary" },
            if self.phonemic { "phonemic" } else { "ortho" }
        )
    }
}

impl FromStr for TransformFlags {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('+').collect();
        let [tok, bound, repr] = parts[..] else {
            return Err(format!("expected three '+'-separated parts in {s:?}"));
        };
        let character_tokenization = match tok {
            "char" => true,
            "bpe" => false,
            other => return Err(format!("unknown tokenization {other:?}")),
        };
        let remove_word_boundaries = match bound {
            "noboundary" => true,
            "boundary" => false,
            other => return Err(format!("unknown boundary setting {other:?}")),
        };
        let phonemic = match repr {
            "phonemic" => true,
            "ortho" => false,
            other => return Err(format!("unknown representation {other:?}")),
        };
        Ok(Self::new(character_tokenization, remove_word_boundaries, phonemic))
    }
}

/// One of the three ablated input transformations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transformation {
    CharacterTokenization,
    WordBoundaryRemoval,
    PhonemicTranscription,
}

impl Transformation {
    pub const ALL: [Transformation; 3] = [
        Transformation::CharacterTokenization,
        Transformation::WordBoundaryRemoval,
        Transformation::PhonemicTranscription,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Transformation::CharacterTokenization => "character",
            Transformation::WordBoundaryRemoval => "boundaries",
            Transformation::PhonemicTranscription => "phonemic",
        }
    }
}

impl fmt::Display for Transformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Transformation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "character" | "character_tokenization" => Ok(Transformation::CharacterTokenization),
            "boundaries" | "word_boundary_removal" => Ok(Transformation::WordBoundaryRemoval),
            "phonemic" | "phonemic_transcription" => Ok(Transformation::PhonemicTranscription),
            other => Err(format!(
                "unknown transformation {other:?} (expected character, boundaries or phonemic)"
            )),
        }
    }
}
