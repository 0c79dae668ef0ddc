pub mod corpus;
pub mod eval;
pub mod grammar;
pub mod lm;
pub mod phonemizer;
pub mod tokenizer;

pub use phonemizer::{Phonemizer, PhonemeInventory, PhonemeString, WORD_BOUNDARY};
pub use tokenizer::{TokenSequence, Tokenizer, TransformFlags, Transformation};
