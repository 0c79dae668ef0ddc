use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BenchmarkScores, EvalError, MinimalPair, PairKind, MACRO_ROW};
use crate::lm::{sequence_logprob, LanguageModel};
use crate::phonemizer::{Phonemizer, WORD_BOUNDARY};
use crate::tokenizer::{Tokenizer, UTT_BOUNDARY_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Orthographic,
    Phonemic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreNorm {
    /// Summed log-probability.
    #[default]
    None,
    /// Summed log-probability divided by the number of scored tokens.
    PerToken,
}

impl fmt::Display for ScoreNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreNorm::None => "none",
            ScoreNorm::PerToken => "per-token",
        })
    }
}

impl FromStr for ScoreNorm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(ScoreNorm::None),
            "per-token" => Ok(ScoreNorm::PerToken),
            other => Err(format!("unknown normalization {other:?} (expected none or per-token)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub append_terminal_boundary: bool,
    pub representation: Representation,
    pub normalize: ScoreNorm,
}

impl EvalConfig {
    /// Defaults with the representation the tokenizer was trained on.
    pub fn for_tokenizer(tokenizer: &Tokenizer) -> Self {
        Self {
            append_terminal_boundary: true,
            representation: if tokenizer.flags().phonemic {
                Representation::Phonemic
            } else {
                Representation::Orthographic
            },
            normalize: ScoreNorm::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub good: f64,
    pub bad: f64,
    /// Strictly greater; ties are wrong.
    pub correct: bool,
    pub truncated: bool,
}

/// Outcome of scoring a pair file: aggregate scores plus one entry per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRun {
    pub scores: BenchmarkScores,
    pub instances: Vec<PairScore>,
}

/// Scores stimuli with a frozen model and its tokenizer.
pub struct Evaluator<'a> {
    model: &'a dyn LanguageModel,
    tokenizer: &'a Tokenizer,
    phonemizer: &'a Phonemizer,
    config: EvalConfig,
}

fn bundled_phonemizer() -> &'static Phonemizer {
    static P: OnceLock<Phonemizer> = OnceLock::new();
    P.get_or_init(Phonemizer::en_us)
}

impl<'a> Evaluator<'a> {
    pub fn new(model: &'a dyn LanguageModel, tokenizer: &'a Tokenizer, config: EvalConfig) -> Result<Self, EvalError> {
        let phonemic = config.representation == Representation::Phonemic;
        if phonemic != tokenizer.flags().phonemic {
            return Err(EvalError::Representation(format!(
                "{:?} evaluation needs a tokenizer with matching flags, got {}",
                config.representation,
                tokenizer.flags()
            )));
        }
        if model.vocab_size() != tokenizer.vocab_size() {
            return Err(EvalError::VocabMismatch {
                model: model.vocab_size(),
                tokenizer: tokenizer.vocab_size(),
            });
        }
        Ok(Self {
            model,
            tokenizer,
            phonemizer: bundled_phonemizer(),
            config,
        })
    }

    pub fn with_phonemizer(mut self, phonemizer: &'a Phonemizer) -> Self {
        self.phonemizer = phonemizer;
        self
    }

    pub fn config(&self) -> &EvalConfig {
        &self.config
    }

    pub fn with_config(&self, config: EvalConfig) -> Result<Self, EvalError> {
        Ok(Evaluator::new(self.model, self.tokenizer, config)?.with_phonemizer(self.phonemizer))
    }

    /// Token ids as scored, and whether they were cut to the model context.
    pub fn token_ids(&self, text: &str, kind: PairKind) -> (Vec<u32>, bool) {
        let mut ids = match (self.config.representation, kind) {
            (Representation::Phonemic, PairKind::Syntactic) => {
                let ps = self.phonemizer.phonemize_utterance(text);
                self.tokenizer.encode(&ps.render(WORD_BOUNDARY))
            }
            _ => self.tokenizer.encode(text),
        };
        if self.config.append_terminal_boundary {
            ids.push(UTT_BOUNDARY_ID);
        }
        let context = self.model.context();
        let truncated = ids.len() > context;
        ids.truncate(context);
        (ids, truncated)
    }

    pub fn score_ids(&self, ids: &[u32]) -> Result<f64, EvalError> {
        if ids.len() < 2 {
            return Ok(0.0);
        }
        let sum = sequence_logprob(self.model, ids)?;
        Ok(match self.config.normalize {
            ScoreNorm::None => sum,
            ScoreNorm::PerToken => sum / (ids.len() - 1) as f64,
        })
    }

    pub fn score_text(&self, text: &str, kind: PairKind) -> Result<(f64, bool), EvalError> {
        let (ids, truncated) = self.token_ids(text, kind);
        Ok((self.score_ids(&ids)?, truncated))
    }

    pub fn score_pair(&self, pair: &MinimalPair) -> Result<PairScore, EvalError> {
        let (good, tg) = self.score_text(&pair.good, pair.kind)?;
        let (bad, tb) = self.score_text(&pair.bad, pair.kind)?;
        Ok(PairScore {
            good,
            bad,
            correct: good > bad,
            truncated: tg || tb,
        })
    }

    /// Scores every pair (in parallel) and aggregates by subtask.
    pub fn run(&self, pairs: &[MinimalPair]) -> Result<BenchmarkRun, EvalError> {
        let instances = pairs
            .par_iter()
            .map(|p| self.score_pair(p))
            .collect::<Result<Vec<_>, _>>()?;
        let scores = BenchmarkScores::from_outcomes(
            self.tokenizer.flags(),
            pairs
                .iter()
                .zip(&instances)
                .map(|(p, s)| (p.subtask.as_str(), s.correct, s.truncated)),
        );
        Ok(BenchmarkRun { scores, instances })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub append_terminal_boundary: bool,
    pub subtask: String,
    pub accuracy: f64,
}

/// The same benchmark scored without and with a trailing boundary token.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryComparison {
    pub without: BenchmarkRun,
    pub with: BenchmarkRun,
}

impl BoundaryComparison {
    /// Per-subtask rows for both settings followed by the two macro rows.
    pub fn rows(&self) -> Vec<BoundaryRow> {
        let mut rows = Vec::new();
        for (append, run) in [(false, &self.without), (true, &self.with)] {
            rows.extend(run.scores.subtasks.iter().map(|s| BoundaryRow {
                append_terminal_boundary: append,
                subtask: s.subtask.clone(),
                accuracy: s.accuracy(),
            }));
        }
        for (append, run) in [(false, &self.without), (true, &self.with)] {
            rows.push(BoundaryRow {
                append_terminal_boundary: append,
                subtask: MACRO_ROW.to_string(),
                accuracy: run.scores.macro_score(),
            });
        }
        rows
    }

    /// Accuracy with the boundary minus accuracy without, per subtask then macro.
    pub fn deltas(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self
            .with
            .scores
            .subtasks
            .iter()
            .zip(&self.without.scores.subtasks)
            .map(|(w, wo)| (w.subtask.clone(), w.accuracy() - wo.accuracy()))
            .collect();
        out.push((
            MACRO_ROW.to_string(),
            self.with.scores.macro_score() - self.without.scores.macro_score(),
        ));
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "append_terminal_boundary,subtask,accuracy")?;
        for r in self.rows() {
            writeln!(w, "{},{},{}", r.append_terminal_boundary, r.subtask, r.accuracy)?;
        }
        Ok(())
    }
}

pub fn boundary_token_comparison(evaluator: &Evaluator<'_>, pairs: &[MinimalPair]) -> Result<BoundaryComparison, EvalError> {
    let base = *evaluator.config();
    let run = |append| {
        evaluator
            .with_config(EvalConfig {
                append_terminal_boundary: append,
                ..base
            })?
            .run(pairs)
    };
    Ok(BoundaryComparison {
        without: run(false)?,
        with: run(true)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{BigramModel, Gpt, Preset};
    use crate::tokenizer::TransformFlags;

    fn char_tokenizer(lines: &[&str]) -> Tokenizer {
        Tokenizer::train(lines.iter().copied(), TransformFlags::new(true, false, false), 0).unwrap()
    }

    fn pair(subtask: &str, good: &str, bad: &str) -> MinimalPair {
        MinimalPair {
            subtask: subtask.into(),
            kind: PairKind::Syntactic,
            good: good.into(),
            bad: bad.into(),
        }
    }

    /// Bigram table over a char tokenizer of "a b c" where a->b is 0.9 and a->c is 0.1.
    fn bigram(tok: &Tokenizer) -> BigramModel {
        let v = tok.vocab_size();
        let id = |s: &str| tok.vocab().id(s).unwrap() as usize;
        let (a, b, c, sp) = (id("a"), id("b"), id("c"), id(" "));
        let mut rows = vec![vec![1.0 / v as f64; v]; v];
        rows[UTT_BOUNDARY_ID as usize] = one_hot(v, a);
        rows[a] = vec![0.0; v];
        rows[a][sp] = 1.0;
        rows[sp] = vec![0.0; v];
        rows[sp][b] = 0.9;
        rows[sp][c] = 0.1;
        BigramModel::from_probs(&rows, 16).unwrap()
    }

    fn one_hot(v: usize, i: usize) -> Vec<f64> {
        let mut r = vec![0.0; v];
        r[i] = 1.0;
        r
    }

    #[test]
    fn bigram_gap_is_log_nine() {
        let tok = char_tokenizer(&["a b c"]);
        let m = bigram(&tok);
        for append in [false, true] {
            let cfg = EvalConfig {
                append_terminal_boundary: append,
                representation: Representation::Orthographic,
                normalize: ScoreNorm::None,
            };
            let ev = Evaluator::new(&m, &tok, cfg).unwrap();
            let s = ev.score_pair(&pair("x", "a b", "a c")).unwrap();
            assert!(s.correct);
            // Rows for b and c are uniform, so the terminal boundary costs both sides equally.
            assert!((s.good - s.bad - 9f64.ln()).abs() < 1e-6, "{s:?}");
        }
    }

    #[test]
    fn ties_are_incorrect_and_swaps_invert() {
        let tok = char_tokenizer(&["a b c"]);
        let m = bigram(&tok);
        let ev = Evaluator::new(&m, &tok, EvalConfig::for_tokenizer(&tok)).unwrap();
        let mut p = pair("x", "a b", "a b");
        let s = ev.score_pair(&p).unwrap();
        assert_eq!(s.good, s.bad);
        assert!(!s.correct);
        p.bad = "a c".into();
        let fwd = ev.score_pair(&p).unwrap();
        std::mem::swap(&mut p.good, &mut p.bad);
        let rev = ev.score_pair(&p).unwrap();
        assert_ne!(fwd.correct, rev.correct);
    }

    #[test]
    fn macro_over_subtasks() {
        let tok = char_tokenizer(&["a b c"]);
        let m = bigram(&tok);
        let ev = Evaluator::new(&m, &tok, EvalConfig::for_tokenizer(&tok)).unwrap();
        let pairs = [pair("s1", "a b", "a c"), pair("s2", "a b", "a c"), pair("s2", "a c", "a b")];
        let run = ev.run(&pairs).unwrap();
        assert_eq!(run.scores.macro_score(), 0.75);
        assert_eq!(run.instances.len(), 3);
    }

    #[test]
    fn representation_and_vocab_checks() {
        let tok = char_tokenizer(&["a b c"]);
        let m = bigram(&tok);
        let cfg = EvalConfig {
            representation: Representation::Phonemic,
            ..EvalConfig::for_tokenizer(&tok)
        };
        assert!(matches!(Evaluator::new(&m, &tok, cfg), Err(EvalError::Representation(_))));
        let other = char_tokenizer(&["xyz"]);
        assert!(matches!(
            Evaluator::new(&m, &other, EvalConfig::for_tokenizer(&other)),
            Err(EvalError::VocabMismatch { .. })
        ));
    }

    #[test]
    fn truncation_keeps_prefix_and_flags() {
        let tok = char_tokenizer(&["a b c"]);
        let m = bigram(&tok);
        let ev = Evaluator::new(&m, &tok, EvalConfig::for_tokenizer(&tok)).unwrap();
        let long = "a b ".repeat(10);
        let (ids, truncated) = ev.token_ids(&long, PairKind::Syntactic);
        assert!(truncated);
        assert_eq!(ids.len(), 16);
        assert_eq!(ids[..], tok.encode(&long)[..16]);
        let s = ev.score_pair(&pair("x", &long, "a c")).unwrap();
        assert!(s.truncated);
    }

    #[test]
    fn terminal_boundary_is_chain_rule_term() {
        let lines = ["the dog runs", "a cat sleeps"];
        let tok = char_tokenizer(&lines);
        let m = Gpt::<f64>::init(Preset::Desk.model(tok.vocab_size()), 3).unwrap();
        let base = EvalConfig::for_tokenizer(&tok);
        let on = Evaluator::new(&m, &tok, base).unwrap();
        let off = on.with_config(EvalConfig { append_terminal_boundary: false, ..base }).unwrap();
        for text in lines {
            let (ids, _) = off.token_ids(text, PairKind::Syntactic);
            let lp = m.next_token_logprobs(&ids).unwrap();
            let last = (ids.len() - 1) * tok.vocab_size() + UTT_BOUNDARY_ID as usize;
            let delta = on.score_text(text, PairKind::Syntactic).unwrap().0 - off.score_text(text, PairKind::Syntactic).unwrap().0;
            assert!((delta - lp[last]).abs() < 1e-6);
        }
    }

    #[test]
    fn uniform_model_has_zero_boundary_delta() {
        let tok = char_tokenizer(&["a b c"]);
        let v = tok.vocab_size();
        let m = BigramModel::from_probs(&vec![vec![1.0 / v as f64; v]; v], 16).unwrap();
        let ev = Evaluator::new(&m, &tok, EvalConfig::for_tokenizer(&tok)).unwrap();
        let pairs = [pair("s1", "a b", "a c"), pair("s2", "a b c", "a c")];
        let cmp = boundary_token_comparison(&ev, &pairs).unwrap();
        assert_eq!(cmp.rows().len(), 2 * 2 + 2);
        assert!(cmp.deltas().iter().all(|(_, d)| *d == 0.0));
    }

    #[test]
    fn phonemic_scoring_phonemizes_syntactic_only() {
        let p = Phonemizer::en_us();
        let text = p.phonemize_utterance("the cat").render(WORD_BOUNDARY);
        let tok = Tokenizer::train([text.as_str(), "t ɛ m p"], TransformFlags::new(true, true, true), 0).unwrap();
        let v = tok.vocab_size();
        let m = BigramModel::from_probs(&vec![vec![1.0 / v as f64; v]; v], 32).unwrap();
        let ev = Evaluator::new(&m, &tok, EvalConfig::for_tokenizer(&tok)).unwrap();
        let (ids, _) = ev.token_ids("The cat!", PairKind::Syntactic);
        let mut expect = tok.encode(&text);
        expect.push(UTT_BOUNDARY_ID);
        assert_eq!(ids, expect);
        let (lex, _) = ev.token_ids("t ɛ m p", PairKind::Lexical);
        assert!(!lex.contains(&crate::tokenizer::UNK_ID));
    }
}
