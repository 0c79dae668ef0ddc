use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use super::{PhonemeInventory, PhonemizerError};

pub const EN_US_RULES: &str = include_str!("../../assets/en_us/rules.txt");

/// One element of a rule context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextItem {
    Literal(char),
    /// `V`: one of a, e, i, o, u.
    Vowel,
    /// `C`: any other letter.
    Consonant,
    /// `.`: any letter.
    AnyLetter,
    /// `^` in a left context, `$` in a right context.
    WordEdge,
}

impl ContextItem {
    fn matches(self, c: char) -> bool {
        match self {
            ContextItem::Literal(l) => l == c,
            ContextItem::Vowel => is_vowel_letter(c),
            ContextItem::Consonant => c.is_alphabetic() && !is_vowel_letter(c),
            ContextItem::AnyLetter => c.is_alphabetic(),
            ContextItem::WordEdge => false,
        }
    }
}

fn is_vowel_letter(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

/// A context-sensitive grapheme rewrite, `left | pattern | right -> output ; priority`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteRule {
    pub left_context: Vec<ContextItem>,
    pub grapheme_pattern: Vec<char>,
    pub right_context: Vec<ContextItem>,
    pub output: Vec<String>,
    pub priority: i32,
    /// 1-based line in the source file; zero for rules built in code.
    pub line: usize,
}

impl RewriteRule {
    /// Whether the rule applies at char offset `at` of `word`.
    pub fn matches_at(&self, word: &[char], at: usize) -> bool {
        let end = at + self.grapheme_pattern.len();
        if end > word.len() || word[at..end] != self.grapheme_pattern[..] {
            return false;
        }
        let mut p = at;
        for item in self.left_context.iter().rev() {
            match item {
                ContextItem::WordEdge => {
                    if p != 0 {
                        return false;
                    }
                }
                _ => {
                    if p == 0 || !item.matches(word[p - 1]) {
                        return false;
                    }
                    p -= 1;
                }
            }
        }
        let mut p = end;
        for item in &self.right_context {
            match item {
                ContextItem::WordEdge => {
                    if p != word.len() {
                        return false;
                    }
                }
                _ => {
                    if p >= word.len() || !item.matches(word[p]) {
                        return false;
                    }
                    p += 1;
                }
            }
        }
        true
    }
}

/// Result of running the rule engine over one word.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleOutcome {
    pub phonemes: Vec<String>,
    /// Characters no rule covered; each was skipped.
    pub misses: usize,
}

/// Rules in matching order, indexed by the first grapheme of their pattern.
#[derive(Debug, Default)]
pub struct RuleSet {
    rules: Vec<RewriteRule>,
    by_first: HashMap<char, Vec<usize>>,
    consultations: AtomicU64,
}

impl Clone for RuleSet {
    fn clone(&self) -> Self {
        Self::from_rules(self.rules.clone())
    }
}

impl RuleSet {
    /// Sorts by descending priority, then descending pattern length, then file order.
    pub fn from_rules(mut rules: Vec<RewriteRule>) -> Self {
        // stable sort keeps file order for ties
        rules.sort_by(|a, b| {
            b.priority
                .cmp(&a.priority)
                .then(b.grapheme_pattern.len().cmp(&a.grapheme_pattern.len()))
        });
        let mut by_first: HashMap<char, Vec<usize>> = HashMap::new();
        for (i, r) in rules.iter().enumerate() {
            by_first.entry(r.grapheme_pattern[0]).or_default().push(i);
        }
        Self {
            rules,
            by_first,
            consultations: AtomicU64::new(0),
        }
    }

    pub fn parse(
        source: &str,
        text: &str,
        inventory: &PhonemeInventory,
    ) -> Result<Self, PhonemizerError> {
        let mut rules = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let rule = parse_rule(line, i + 1).map_err(|message| PhonemizerError::Parse {
                source_name: source.to_string(),
                line: i + 1,
                message,
            })?;
            if let Some(bad) = rule.output.iter().find(|p| !inventory.contains(p)) {
                return Err(PhonemizerError::UnknownRulePhoneme {
                    line: i + 1,
                    symbol: bad.clone(),
                });
            }
            rules.push(rule);
        }
        Ok(Self::from_rules(rules))
    }

    pub fn load(path: &Path, inventory: &PhonemeInventory) -> Result<Self, PhonemizerError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&path.display().to_string(), &text, inventory)
    }

    /// The bundled en-US fallback rules.
    pub fn en_us(inventory: &PhonemeInventory) -> Self {
        Self::parse("en_us/rules.txt", EN_US_RULES, inventory).expect("bundled rules are valid")
    }

    /// Rules in matching order.
    pub fn rules(&self) -> &[RewriteRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// How many words have been sent through the engine so far.
    pub fn consultations(&self) -> u64 {
        self.consultations.load(Ordering::Relaxed)
    }

    /// Left-to-right scan; the first matching rule at each position wins.
    pub fn apply(&self, word: &str) -> RuleOutcome {
        self.consultations.fetch_add(1, Ordering::Relaxed);
        let chars: Vec<char> = word.chars().collect();
        let mut out = RuleOutcome::default();
        let mut at = 0;
        while at < chars.len() {
            let hit = self
                .by_first
                .get(&chars[at])
                .and_then(|cands| {
                    cands
                        .iter()
                        .map(|&i| &self.rules[i])
                        .find(|r| r.matches_at(&chars, at))
                });
            match hit {
                Some(rule) => {
                    out.phonemes.extend(rule.output.iter().cloned());
                    at += rule.grapheme_pattern.len();
                }
                None => {
                    out.misses += 1;
                    at += 1;
                }
            }
        }
        out
    }
}

fn parse_rule(line: &str, line_no: usize) -> Result<RewriteRule, String> {
    let (lhs, rhs) = line
        .split_once("->")
        .ok_or_else(|| "missing '->'".to_string())?;
    let parts: Vec<&str> = lhs.split('|').collect();
    if parts.len() != 3 {
        return Err(format!(
            "expected 'left | pattern | right', found {} field(s)",
            parts.len()
        ));
    }
    let pattern: Vec<char> = parts[1].trim().chars().collect();
    if pattern.is_empty() {
        return Err("empty grapheme pattern".into());
    }
    if pattern.iter().any(|c| c.is_whitespace()) {
        return Err("grapheme pattern contains whitespace".into());
    }
    let left_context = parse_context(parts[0].trim(), '^')?;
    let right_context = parse_context(parts[2].trim(), '$')?;
    let (output, priority) = rhs
        .split_once(';')
        .ok_or_else(|| "missing '; priority'".to_string())?;
    let priority: i32 = priority
        .trim()
        .parse()
        .map_err(|_| format!("priority {:?} is not an integer", priority.trim()))?;
    Ok(RewriteRule {
        left_context,
        grapheme_pattern: pattern,
        right_context,
        output: output.split_whitespace().map(str::to_string).collect(),
        priority,
        line: line_no,
    })
}

fn parse_context(text: &str, edge: char) -> Result<Vec<ContextItem>, String> {
    text.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            'V' => Ok(ContextItem::Vowel),
            'C' => Ok(ContextItem::Consonant),
            '.' => Ok(ContextItem::AnyLetter),
            c if c == edge => Ok(ContextItem::WordEdge),
            '^' | '$' => Err(format!("anchor {c:?} is not allowed on this side")),
            c => Ok(ContextItem::Literal(c)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv() -> PhonemeInventory {
        PhonemeInventory::en_us()
    }

    #[test]
    fn parses_contextual_rule() {
        let rules = RuleSet::parse("t", "| c | e -> s ; 10", &inv()).unwrap();
        let r = &rules.rules()[0];
        assert!(r.left_context.is_empty());
        assert_eq!(r.grapheme_pattern, vec!['c']);
        assert_eq!(r.right_context, vec![ContextItem::Literal('e')]);
        assert_eq!(r.output, vec!["s"]);
        assert_eq!(r.priority, 10);
        assert!(r.matches_at(&['c', 'e'], 0));
        assert!(!r.matches_at(&['c', 'a'], 0));
    }

    #[test]
    fn equal_rules_keep_file_order() {
        let text = "| a | -> æ ; 1\n| b | -> b ; 1\n| c | -> k ; 1\n";
        let rules = RuleSet::parse("t", text, &inv()).unwrap();
        let lines: Vec<usize> = rules.rules().iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![1, 2, 3]);
    }

    #[test]
    fn sorted_by_priority_then_length() {
        let text = "| s | -> s ; 1\n| sh | -> ʃ ; 1\n| x | -> k s ; 5\n";
        let rules = RuleSet::parse("t", text, &inv()).unwrap();
        let patterns: Vec<String> = rules
            .rules()
            .iter()
            .map(|r| r.grapheme_pattern.iter().collect())
            .collect();
        assert_eq!(patterns, vec!["x", "sh", "s"]);
    }

    #[test]
    fn unknown_output_symbol() {
        let err = RuleSet::parse("t", "| z | -> zz ; 1", &inv()).unwrap_err();
        assert!(
            matches!(err, PhonemizerError::UnknownRulePhoneme { ref symbol, line: 1 } if symbol == "zz"),
            "{err}"
        );
    }

    #[test]
    fn malformed_rules_report_line() {
        for bad in ["| c | e s ; 1", "| | -> s ; 1", "c | e -> s ; 1", "| c | -> s ; high", "| c | -> s"] {
            let err = RuleSet::parse("t", &format!("# c\n{bad}"), &inv()).unwrap_err();
            assert!(matches!(err, PhonemizerError::Parse { line: 2, .. }), "{bad}: {err}");
        }
        assert!(RuleSet::parse("t", "$ | c | -> s ; 1", &inv()).is_err());
    }

    #[test]
    fn anchors_and_classes() {
        let text = "^ | k | n -> ; 5\n| k | -> k ; 1\n| n | -> n ; 1\n| e | $ -> ; 3\n| e | -> ɛ ; 1\nV | s | V -> z ; 2\n| s | -> s ; 1\n| a | -> æ ; 1\n| i | -> ɪ ; 1\n";
        let rules = RuleSet::parse("t", text, &inv()).unwrap();
        assert_eq!(rules.apply("kne").phonemes, vec!["n"]);
        assert_eq!(rules.apply("ken").phonemes, vec!["k", "ɛ", "n"]);
        assert_eq!(rules.apply("asi").phonemes, vec!["æ", "z", "ɪ"]);
        assert_eq!(rules.apply("sa").phonemes, vec!["s", "æ"]);
    }

    #[test]
    fn misses_skip_one_char() {
        let rules = RuleSet::parse("t", "| a | -> æ ; 1", &inv()).unwrap();
        let out = rules.apply("aqa");
        assert_eq!(out.phonemes, vec!["æ", "æ"]);
        assert_eq!(out.misses, 1);
    }

    #[test]
    fn bundled_rules_cover_every_letter() {
        let inv = inv();
        let rules = RuleSet::en_us(&inv);
        let out = rules.apply("abcdefghijklmnopqrstuvwxyz");
        assert_eq!(out.misses, 0);
        assert!(out.phonemes.iter().all(|p| inv.contains(p)));
    }
}
