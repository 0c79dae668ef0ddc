//! Shared inputs for the pipeline benchmarks.

use phonostream::grammar::Grammar;
use phonostream::{Phonemizer, WORD_BOUNDARY};

/// Orthographic sentences from the bundled toy grammar.
pub fn toy_sentences(n: usize, seed: u64) -> Vec<String> {
    Grammar::toy().sentences(n, seed).expect("toy grammar samples")
}

/// The same sentences as space-separated phoneme strings with word boundaries.
pub fn toy_phonemes(n: usize, seed: u64) -> Vec<String> {
    let p = Phonemizer::en_us();
    toy_sentences(n, seed)
        .iter()
        .map(|s| p.phonemize_utterance(s).render(WORD_BOUNDARY))
        .collect()
}

/// `sentences` joined into one newline-terminated text.
pub fn as_text(sentences: &[String]) -> String {
    let mut text = sentences.join("\n");
    text.push('\n');
    text
}
