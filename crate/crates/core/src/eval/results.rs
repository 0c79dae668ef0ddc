use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pairs::valid_subtask_id;
use super::{EvalError, MACRO_ROW};
use crate::tokenizer::TransformFlags;

const CSV_HEADER: &str = "flags,subtask,correct,total,accuracy,truncated";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskScore {
    pub subtask: String,
    pub correct: usize,
    pub total: usize,
    /// Pairs where at least one side was cut to fit the context.
    pub truncated: usize,
}

impl SubtaskScore {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Per-subtask accuracies of one model, sorted by subtask id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkScores {
    pub flags: TransformFlags,
    pub subtasks: Vec<SubtaskScore>,
}

impl BenchmarkScores {
    /// Aggregates per-pair outcomes `(subtask, correct, truncated)`.
    pub fn from_outcomes<'a, I>(flags: TransformFlags, outcomes: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, bool, bool)>,
    {
        let mut by: BTreeMap<&str, SubtaskScore> = BTreeMap::new();
        for (subtask, correct, truncated) in outcomes {
            let s = by.entry(subtask).or_insert_with(|| SubtaskScore {
                subtask: subtask.to_string(),
                correct: 0,
                total: 0,
                truncated: 0,
            });
            s.total += 1;
            s.correct += usize::from(correct);
            s.truncated += usize::from(truncated);
        }
        Self {
            flags,
            subtasks: by.into_values().collect(),
        }
    }

    /// Builds scores from `(subtask, correct, total)` triples, sorting by id.
    pub fn from_counts<S: Into<String>>(flags: TransformFlags, counts: impl IntoIterator<Item = (S, usize, usize)>) -> Self {
        let mut subtasks: Vec<SubtaskScore> = counts
            .into_iter()
            .map(|(subtask, correct, total)| {
                assert!(total > 0 && correct <= total, "invalid counts {correct}/{total}");
                SubtaskScore {
                    subtask: subtask.into(),
                    correct,
                    total,
                    truncated: 0,
                }
            })
            .collect();
        subtasks.sort_by(|a, b| a.subtask.cmp(&b.subtask));
        Self { flags, subtasks }
    }

    /// Unweighted mean of subtask accuracies.
    pub fn macro_score(&self) -> f64 {
        self.subtasks.iter().map(SubtaskScore::accuracy).sum::<f64>() / self.subtasks.len() as f64
    }

    pub fn subtask_ids(&self) -> Vec<String> {
        self.subtasks.iter().map(|s| s.subtask.clone()).collect()
    }

    pub fn get(&self, subtask: &str) -> Option<&SubtaskScore> {
        self.subtasks.iter().find(|s| s.subtask == subtask)
    }

    /// Drops the excluded subtasks; every excluded id must exist.
    pub fn without(&self, exclude: &BTreeSet<String>) -> Result<Self, EvalError> {
        for id in exclude {
            if self.get(id).is_none() {
                return Err(EvalError::UnknownSubtask(id.clone()));
            }
        }
        let subtasks: Vec<SubtaskScore> = self
            .subtasks
            .iter()
            .filter(|s| !exclude.contains(&s.subtask))
            .cloned()
            .collect();
        if subtasks.is_empty() {
            return Err(EvalError::ExcludesAll);
        }
        Ok(Self {
            flags: self.flags,
            subtasks,
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for s in &self.subtasks {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.flags,
                s.subtask,
                s.correct,
                s.total,
                s.accuracy(),
                s.truncated
            )?;
        }
        let sum = |f: fn(&SubtaskScore) -> usize| self.subtasks.iter().map(f).sum::<usize>();
        writeln!(
            w,
            "{},{MACRO_ROW},{},{},{},{}",
            self.flags,
            sum(|s| s.correct),
            sum(|s| s.total),
            self.macro_score(),
            sum(|s| s.truncated)
        )
    }

    pub fn read_csv<R: BufRead>(source: &str, r: R) -> Result<Self, EvalError> {
        let bad = |line: usize, message: String| EvalError::ResultsFile {
            source_name: source.to_string(),
            line,
            message,
        };
        let mut flags: Option<TransformFlags> = None;
        let mut subtasks = Vec::new();
        let mut saw_macro = false;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let n = i + 1;
            if n == 1 {
                if line.trim_end() != CSV_HEADER {
                    return Err(bad(n, format!("expected header {CSV_HEADER:?}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let [fl, subtask, correct, total, _accuracy, truncated] = f[..] else {
                return Err(bad(n, format!("expected 6 fields, found {}", f.len())));
            };
            let fl: TransformFlags = fl.parse().map_err(|e| bad(n, format!("{e}")))?;
            if *flags.get_or_insert(fl) != fl {
                return Err(bad(n, "rows disagree on flags".into()));
            }
            if subtask == MACRO_ROW {
                saw_macro = true;
                continue;
            }
            if !valid_subtask_id(subtask) {
                return Err(bad(n, format!("invalid subtask id {subtask:?}")));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|e| bad(n, format!("{s:?}: {e}")));
            let (correct, total, truncated) = (num(correct)?, num(total)?, num(truncated)?);
            if total == 0 || correct > total {
                return Err(bad(n, format!("invalid counts {correct}/{total}")));
            }
            subtasks.push(SubtaskScore {
                subtask: subtask.to_string(),
                correct,
                total,
                truncated,
            });
        }
        let (Some(flags), true) = (flags, saw_macro && !subtasks.is_empty()) else {
            return Err(bad(0, "no subtask rows or missing macro row".into()));
        };
        subtasks.sort_by(|a, b| a.subtask.cmp(&b.subtask));
        if subtasks.windows(2).any(|w| w[0].subtask == w[1].subtask) {
            return Err(bad(0, "duplicate subtask rows".into()));
        }
        Ok(Self { flags, subtasks })
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_csv(&path.display().to_string(), r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn macro_is_unweighted() {
        let s = BenchmarkScores::from_counts(TransformFlags::default(), [("a", 10, 10), ("b", 1, 2)]);
        assert_eq!(s.macro_score(), 0.75);
    }

    #[test]
    fn exclusion() {
        let s = BenchmarkScores::from_counts(
            TransformFlags::default(),
            [("a", 9, 10), ("b", 9, 10), ("c", 9, 10), ("d", 3, 10), ("e", 3, 10)],
        );
        assert!((s.macro_score() - 0.66).abs() < 1e-12);
        let ex: BTreeSet<String> = ["d".to_string(), "e".to_string()].into();
        assert!((s.without(&ex).unwrap().macro_score() - 0.9).abs() < 1e-12);
        assert_eq!(s.without(&BTreeSet::new()).unwrap(), s);
        let unknown: BTreeSet<String> = ["zz".to_string()].into();
        match s.without(&unknown) {
            Err(EvalError::UnknownSubtask(id)) => assert_eq!(id, "zz"),
            other => panic!("{other:?}"),
        }
        let all: BTreeSet<String> = s.subtask_ids().into_iter().collect();
        assert!(matches!(s.without(&all), Err(EvalError::ExcludesAll)));
    }

    #[test]
    fn outcomes_are_order_independent() {
        let flags = TransformFlags::new(true, false, true);
        let xs = [("b", true, false), ("a", false, true), ("b", false, false), ("a", true, false)];
        let mut rev = xs;
        rev.reverse();
        let s = BenchmarkScores::from_outcomes(flags, xs);
        assert_eq!(s, BenchmarkScores::from_outcomes(flags, rev));
        assert_eq!(s.subtask_ids(), ["a", "b"]);
        assert_eq!(s.get("a").unwrap().truncated, 1);
    }

    #[test]
    fn csv_round_trip() {
        let s = BenchmarkScores::from_counts(TransformFlags::new(false, true, true), [("x", 3, 7), ("y", 5, 5)]);
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().last().unwrap().contains(",MACRO,8,12,"));
        assert_eq!(BenchmarkScores::read_csv("t", text.as_bytes()).unwrap(), s);
        assert!(BenchmarkScores::read_csv("t", "nope\n".as_bytes()).is_err());
        let no_macro: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(BenchmarkScores::read_csv("t", no_macro.as_bytes()).is_err());
    }
}
