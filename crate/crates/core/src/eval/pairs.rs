use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    /// Orthographic sentences; phonemized before phonemic scoring.
    Syntactic,
    /// Words already written as space-separated phonemes.
    Lexical,
}

impl fmt::Display for PairKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairKind::Syntactic => "syntactic",
            PairKind::Lexical => "lexical",
        })
    }
}

impl FromStr for PairKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "syntactic" => Ok(PairKind::Syntactic),
            "lexical" => Ok(PairKind::Lexical),
            other => Err(format!("unknown pair kind {other:?} (expected syntactic or lexical)")),
        }
    }
}

/// An acceptable stimulus and its minimally different unacceptable twin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalPair {
    pub subtask: String,
    pub kind: PairKind,
    pub good: String,
    pub bad: String,
}

/// Subtask ids are restricted so they can appear unquoted in CSV output.
pub fn valid_subtask_id(id: &str) -> bool {
    !id.is_empty()
        && id != super::MACRO_ROW
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

/// Parses `subtask<TAB>kind<TAB>good<TAB>bad` lines; `#` lines are comments.
pub fn parse_pairs(source: &str, text: &str) -> Result<Vec<MinimalPair>, EvalError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| EvalError::PairsFile {
            source_name: source.to_string(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [subtask, kind, good, bad_side] = fields[..] else {
            return Err(bad(format!("expected 4 tab-separated fields, found {}", fields.len())));
        };
        if !valid_subtask_id(subtask) {
            return Err(bad(format!(
                "subtask {subtask:?} must be a non-empty id of letters, digits, '_', '-' or '.'"
            )));
        }
        let kind: PairKind = kind.parse().map_err(bad)?;
        if good.trim().is_empty() || bad_side.trim().is_empty() {
            return Err(bad("empty stimulus".into()));
        }
        if good == bad_side {
            return Err(bad("good and bad stimuli are identical".into()));
        }
        pairs.push(MinimalPair {
            subtask: subtask.to_string(),
            kind,
            good: good.to_string(),
            bad: bad_side.to_string(),
        });
    }
    if pairs.is_empty() {
        return Err(EvalError::PairsFile {
            source_name: source.to_string(),
            line: 0,
            message: "no pairs".into(),
        });
    }
    Ok(pairs)
}

pub fn load_pairs(path: &Path) -> Result<Vec<MinimalPair>, EvalError> {
    let text = std::fs::read_to_string(path)?;
    parse_pairs(&path.display().to_string(), &text)
}

pub fn write_pairs<W: std::io::Write>(pairs: &[MinimalPair], mut w: W) -> std::io::Result<()> {
    for p in pairs {
        writeln!(w, "{}\t{}\t{}\t{}", p.subtask, p.kind, p.good, p.bad)?;
    }
    Ok(())
}
