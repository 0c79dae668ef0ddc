//! Probabilistic context-free grammar for synthetic corpora and matched
//! minimal pairs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eval::{valid_subtask_id, MinimalPair, PairKind};

const START: &str = "S";
const MAX_DEPTH: usize = 64;
const MAX_ATTEMPTS_PER_PAIR: usize = 1000;

pub const TOY_GRAMMAR: &str = include_str!("../assets/toy_grammar.txt");

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("grammar line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("derivation deeper than {MAX_DEPTH} expansions")]
    TooDeep,
    #[error("could not generate pairs for subtask {0:?}")]
    NoPairs(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
struct Production {
    rhs: Vec<String>,
    weight: f64,
}

#[derive(Debug, Clone)]
enum PairRule {
    /// Word-level contrasts; either form is replaced by the other.
    Swap(HashMap<String, String>),
    /// Drop the last word of sentences whose derivation uses this nonterminal.
    Truncate(String),
}

/// A sampled sentence and the nonterminals its derivation expanded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation {
    pub words: Vec<String>,
    pub used: BTreeSet<String>,
}

impl Derivation {
    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

#[derive(Debug, Clone)]
pub struct Grammar {
    rules: BTreeMap<String, (Vec<Production>, WeightedIndex<f64>)>,
    pair_rules: BTreeMap<String, PairRule>,
}

impl Grammar {
    /// Parses `LHS -> A b C ; weight` rules plus `@swap` and `@truncate` lines.
    pub fn parse(text: &str) -> Result<Self, GrammarError> {
        let mut prods: BTreeMap<String, Vec<Production>> = BTreeMap::new();
        let mut pair_rules: BTreeMap<String, PairRule> = BTreeMap::new();
        let mut truncate_lines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |message: String| GrammarError::Parse { line: i + 1, message };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('@') {
                let f: Vec<&str> = rest.split_whitespace().collect();
                match f[..] {
                    ["swap", subtask, a, b] => {
                        if !valid_subtask_id(subtask) {
                            return Err(err(format!("invalid subtask id {subtask:?}")));
                        }
                        let rule = pair_rules
                            .entry(subtask.to_string())
                            .or_insert_with(|| PairRule::Swap(HashMap::new()));
                        let PairRule::Swap(map) = rule else {
                            return Err(err(format!("subtask {subtask} mixes @swap and @truncate")));
                        };
                        for (x, y) in [(a, b), (b, a)] {
                            if map.insert(x.to_string(), y.to_string()).is_some() {
                                return Err(err(format!("word {x:?} swapped twice in {subtask}")));
                            }
                        }
                    }
                    ["truncate", subtask, nt] => {
                        if !valid_subtask_id(subtask) {
                            return Err(err(format!("invalid subtask id {subtask:?}")));
                        }
                        if pair_rules
                            .insert(subtask.to_string(), PairRule::Truncate(nt.to_string()))
                            .is_some()
                        {
                            return Err(err(format!("subtask {subtask} defined twice")));
                        }
                        truncate_lines.push((i + 1, nt.to_string()));
                    }
                    _ => return Err(err(format!("unrecognized directive {line:?}"))),
                }
                continue;
            }
            let (rule, weight) = line
                .rsplit_once(';')
                .ok_or_else(|| err("missing '; weight'".into()))?;
            let weight: f64 = weight
                .trim()
                .parse()
                .map_err(|e| err(format!("bad weight: {e}")))?;
            if !(weight.is_finite() && weight > 0.0) {
                return Err(err(format!("weight must be positive, got {weight}")));
            }
            let (lhs, rhs) = rule.split_once("->").ok_or_else(|| err("missing '->'".into()))?;
            let lhs = lhs.trim();
            if lhs.is_empty() || lhs.contains(char::is_whitespace) {
                return Err(err(format!("bad left-hand side {lhs:?}")));
            }
            let rhs: Vec<String> = rhs.split_whitespace().map(str::to_string).collect();
            if rhs.is_empty() {
                return Err(err("empty right-hand side".into()));
            }
            prods.entry(lhs.to_string()).or_default().push(Production { rhs, weight });
        }
        if !prods.contains_key(START) {
            return Err(GrammarError::Parse {
                line: 0,
                message: format!("no rules for start symbol {START}"),
            });
        }
        for (lhs, ps) in &prods {
            for p in ps {
                for s in &p.rhs {
                    if is_nonterminal(s) && !prods.contains_key(s) {
                        return Err(GrammarError::Parse {
                            line: 0,
                            message: format!("{lhs} uses undefined nonterminal {s}"),
                        });
                    }
                }
            }
        }
        for (line, nt) in truncate_lines {
            if !prods.contains_key(&nt) {
                return Err(GrammarError::Parse {
                    line,
                    message: format!("unknown nonterminal {nt}"),
                });
            }
        }
        let rules = prods
            .into_iter()
            .map(|(lhs, ps)| {
                let w = WeightedIndex::new(ps.iter().map(|p| p.weight)).expect("weights validated");
                (lhs, (ps, w))
            })
            .collect();
        Ok(Self { rules, pair_rules })
    }

    pub fn load(path: &Path) -> Result<Self, GrammarError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The bundled agreement grammar.
    pub fn toy() -> Self {
        Self::parse(TOY_GRAMMAR).expect("bundled grammar parses")
    }

    pub fn subtasks(&self) -> Vec<String> {
        self.pair_rules.keys().cloned().collect()
    }

    /// Every terminal word the grammar can emit.
    pub fn vocabulary(&self) -> BTreeSet<String> {
        self.rules
            .values()
            .flat_map(|(ps, _)| ps.iter().flat_map(|p| p.rhs.iter()))
            .filter(|s| !is_nonterminal(s))
            .cloned()
            .collect()
    }

    pub fn derive<R: Rng>(&self, rng: &mut R) -> Result<Derivation, GrammarError> {
        let mut d = Derivation {
            words: Vec::new(),
            used: BTreeSet::new(),
        };
        self.expand(START, rng, 0, &mut d)?;
        Ok(d)
    }

    fn expand<R: Rng>(&self, sym: &str, rng: &mut R, depth: usize, d: &mut Derivation) -> Result<(), GrammarError> {
        if depth > MAX_DEPTH {
            return Err(GrammarError::TooDeep);
        }
        let (ps, w) = &self.rules[sym];
        d.used.insert(sym.to_string());
        for s in &ps[w.sample(rng)].rhs {
            if is_nonterminal(s) {
                self.expand(s, rng, depth + 1, d)?;
            } else {
                d.words.push(s.clone());
            }
        }
        Ok(())
    }

    pub fn sentences(&self, n: usize, seed: u64) -> Result<Vec<String>, GrammarError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.derive(&mut rng).map(|d| d.text())).collect()
    }

    fn make_pair(&self, rule: &PairRule, d: &Derivation) -> Option<String> {
        match rule {
            PairRule::Swap(map) => {
                let i = d.words.iter().position(|w| map.contains_key(w))?;
                let mut bad = d.words.clone();
                bad[i] = map[&bad[i]].clone();
                Some(bad.join(" "))
            }
            PairRule::Truncate(nt) => {
                (d.used.contains(nt) && d.words.len() > 1).then(|| d.words[..d.words.len() - 1].join(" "))
            }
        }
    }

    /// `per_subtask` pairs for each listed subtask (all when `subtasks` is empty),
    /// in subtask order.
    pub fn minimal_pairs(&self, subtasks: &[&str], per_subtask: usize, seed: u64) -> Result<Vec<MinimalPair>, GrammarError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names: Vec<String> = if subtasks.is_empty() {
            self.subtasks()
        } else {
            subtasks.iter().map(|s| s.to_string()).collect()
        };
        let mut out = Vec::with_capacity(names.len() * per_subtask);
        for name in names {
            let rule = self.pair_rules.get(&name).ok_or_else(|| GrammarError::NoPairs(name.clone()))?;
            let mut made = 0;
            let mut attempts = 0;
            while made < per_subtask {
                attempts += 1;
                if attempts > MAX_ATTEMPTS_PER_PAIR * per_subtask.max(1) {
                    return Err(GrammarError::NoPairs(name));
                }
                let d = self.derive(&mut rng)?;
                if let Some(bad) = self.make_pair(rule, &d) {
                    out.push(MinimalPair {
                        subtask: name.clone(),
                        kind: PairKind::Syntactic,
                        good: d.text(),
                        bad,
                    });
                    made += 1;
                }
            }
        }
        Ok(out)
    }
}

fn is_nonterminal(s: &str) -> bool {
    s.chars().next().is_some_and(|c| c.is_ascii_uppercase())
}
