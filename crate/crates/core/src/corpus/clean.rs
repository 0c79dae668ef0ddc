use std::ops::AddAssign;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::CorpusError;

pub const DEFAULT_PATTERNS: &str = include_str!("../../assets/cleaning_patterns.txt");
const MAX_PASSES: usize = 8;

/// One named regex substitution.
#[derive(Debug, Clone)]
pub struct AnomalyPattern {
    pub name: String,
    pub regex: Regex,
    pub replacement: String,
}

/// Counters accumulated while cleaning.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanStats {
    pub lines: u64,
    pub control_chars_removed: u64,
    pub spaces_removed: u64,
    pub anomalies_fixed: u64,
}

impl AddAssign for CleanStats {
    fn add_assign(&mut self, o: Self) {
        self.lines += o.lines;
        self.control_chars_removed += o.control_chars_removed;
        self.spaces_removed += o.spaces_removed;
        self.anomalies_fixed += o.anomalies_fixed;
    }
}

/// A versioned list of anomaly patterns plus the fixed cleaning steps.
#[derive(Debug, Clone)]
pub struct Cleaner {
    version: u32,
    patterns: Vec<AnomalyPattern>,
}

impl Cleaner {
    /// Parses `@version N` followed by `name<TAB>regex<TAB>replacement` lines.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut version = None;
        let mut patterns = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let bad = |message: String| CorpusError::Pattern { line: line_no, message };
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            if let Some(v) = raw.strip_prefix("@version") {
                let v = v.trim().parse().map_err(|_| bad(format!("bad version {:?}", v.trim())))?;
                version = Some(v);
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            let [name, re, replacement] = fields[..] else {
                return Err(bad(format!("expected 3 tab-separated fields, found {}", fields.len())));
            };
            let regex = Regex::new(re).map_err(|e| bad(e.to_string()))?;
            patterns.push(AnomalyPattern {
                name: name.to_string(),
                regex,
                replacement: replacement.to_string(),
            });
        }
        let version = version.ok_or(CorpusError::Pattern {
            line: 0,
            message: "missing @version header".into(),
        })?;
        Ok(Self { version, patterns })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The bundled pattern list.
    pub fn bundled() -> &'static Cleaner {
        static CLEANER: OnceLock<Cleaner> = OnceLock::new();
        CLEANER.get_or_init(|| Cleaner::parse(DEFAULT_PATTERNS).expect("bundled patterns are valid"))
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn patterns(&self) -> &[AnomalyPattern] {
        &self.patterns
    }

    /// Cleans one line, repeating until nothing changes so the result is a
    /// fixed point.
    pub fn clean(&self, line: &str) -> (String, CleanStats) {
        let mut stats = CleanStats {
            lines: 1,
            ..CleanStats::default()
        };
        let mut cur = self.pass(line, &mut stats);
        for _ in 1..MAX_PASSES {
            let next = self.pass(&cur, &mut stats);
            if next == cur {
                break;
            }
            cur = next;
        }
        (cur, stats)
    }

    fn pass(&self, line: &str, stats: &mut CleanStats) -> String {
        let mut s = String::with_capacity(line.len());
        for c in line.chars() {
            if c.is_whitespace() {
                s.push(if c.is_control() { ' ' } else { c });
            } else if c.is_control() {
                stats.control_chars_removed += 1;
            } else {
                s.push(c);
            }
        }
        for p in &self.patterns {
            let n = p.regex.find_iter(&s).count();
            if n > 0 {
                stats.anomalies_fixed += n as u64;
                s = p.regex.replace_all(&s, p.replacement.as_str()).into_owned();
            }
        }
        let mut out = String::with_capacity(s.len());
        for word in s.split(char::is_whitespace) {
            if word.is_empty() {
                continue;
            }
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(word);
        }
        let before = s.chars().filter(|c| c.is_whitespace()).count() as u64;
        let after = out.chars().filter(|c| *c == ' ').count() as u64;
        stats.spaces_removed += before - after;
        out
    }
}

/// Cleans a line with the bundled patterns.
pub fn clean_text(line: &str) -> String {
    Cleaner::bundled().clean(line).0
}
