use std::collections::HashMap;
use std::path::Path;

use super::{PhonemizerError, WORD_BOUNDARY};

pub const EN_US_INVENTORY: &str = include_str!("../../assets/en_us/inventory.txt");

/// The closed set of phoneme symbols a converted corpus may contain.
///
/// Symbols keep their file order, which is also the order used when an
/// inventory is rendered back to disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeInventory {
    accent_id: String,
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl PhonemeInventory {
    pub fn new<I, S>(accent_id: impl Into<String>, symbols: I) -> Result<Self, PhonemizerError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out = Self {
            accent_id: accent_id.into(),
            symbols: Vec::new(),
            index: HashMap::new(),
        };
        for symbol in symbols {
            let symbol = symbol.into();
            validate_symbol(&symbol)?;
            if out.index.contains_key(&symbol) {
                return Err(PhonemizerError::Inventory(format!(
                    "duplicate symbol {symbol:?}"
                )));
            }
            out.index.insert(symbol.clone(), out.symbols.len());
            out.symbols.push(symbol);
        }
        Ok(out)
    }

    /// Parses the one-symbol-per-line format. Blank lines and `#` comments are skipped.
    pub fn parse(accent_id: impl Into<String>, text: &str) -> Result<Self, PhonemizerError> {
        let symbols = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        Self::new(accent_id, symbols)
    }

    pub fn load(accent_id: impl Into<String>, path: &Path) -> Result<Self, PhonemizerError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(accent_id, &text)
    }

    /// The bundled 47-symbol American English inventory.
    pub fn en_us() -> Self {
        Self::parse("en-US", EN_US_INVENTORY).expect("bundled inventory is valid")
    }

    pub fn accent_id(&self) -> &str {
        &self.accent_id
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.index.contains_key(symbol)
    }

    pub fn position(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }
}

fn validate_symbol(symbol: &str) -> Result<(), PhonemizerError> {
    let n = symbol.chars().count();
    if n == 0 || n > 4 {
        return Err(PhonemizerError::Inventory(format!(
            "symbol {symbol:?} must have 1 to 4 codepoints"
        )));
    }
    if symbol.chars().any(char::is_whitespace) || symbol == WORD_BOUNDARY {
        return Err(PhonemizerError::Inventory(format!(
            "symbol {symbol:?} collides with the word separator"
        )));
    }
    Ok(())
}
