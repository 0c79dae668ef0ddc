use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::stats::{paired_t_test, TTest};
use super::{BenchmarkScores, EvalError};
use crate::tokenizer::{TransformFlags, Transformation};

/// Label of the run pair that differs only in `t`, e.g. `*+boundary+ortho`.
pub fn pair_id(flags: TransformFlags, t: Transformation) -> String {
    let label = flags.to_string();
    let mut parts: Vec<&str> = label.split('+').collect();
    let slot = match t {
        Transformation::CharacterTokenization => 0,
        Transformation::WordBoundaryRemoval => 1,
        Transformation::PhonemicTranscription => 2,
    };
    parts[slot] = "*";
    parts.join("+")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEffect {
    pub pair_id: String,
    pub off: f64,
    pub on: f64,
    /// 100 * (on - off) / off on macro scores.
    pub pct_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskSeries {
    pub subtask: String,
    /// Mean accuracy over the four runs with the transformation off.
    pub off: f64,
    pub on: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub transformation: Transformation,
    pub pairs: Vec<PairEffect>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub series: Vec<SubtaskSeries>,
    /// Paired test of per-subtask on-means against off-means.
    pub t_test: TTest,
}

fn index_runs(runs: &[BenchmarkScores]) -> Result<BTreeMap<TransformFlags, &BenchmarkScores>, EvalError> {
    let mut by = BTreeMap::new();
    for r in runs {
        if by.insert(r.flags, r).is_some() {
            return Err(EvalError::DuplicateRun(r.flags.to_string()));
        }
    }
    let missing: Vec<String> = TransformFlags::all()
        .into_iter()
        .filter(|f| !by.contains_key(f))
        .map(|f| f.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingRuns(missing));
    }
    let expected = runs[0].subtask_ids();
    for r in runs {
        let found = r.subtask_ids();
        if found != expected {
            return Err(EvalError::SubtaskMismatch {
                run: r.flags.to_string(),
                expected,
                found,
            });
        }
    }
    Ok(by)
}

/// Effect of switching `t` on, over the four run pairs that differ only in `t`.
pub fn ablation_effect(runs: &[BenchmarkScores], t: Transformation) -> Result<AblationReport, EvalError> {
    let by = index_runs(runs)?;
    let offs: Vec<TransformFlags> = TransformFlags::all().into_iter().filter(|f| !f.get(t)).collect();
    let mut pairs = Vec::with_capacity(4);
    for &off_flags in &offs {
        let off = by[&off_flags].macro_score();
        let on = by[&off_flags.with(t, true)].macro_score();
        if off == 0.0 {
            return Err(EvalError::ZeroBaseline(off_flags.to_string()));
        }
        pairs.push(PairEffect {
            pair_id: pair_id(off_flags, t),
            off,
            on,
            pct_diff: 100.0 * (on - off) / off,
        });
    }
    let diffs: Vec<f64> = pairs.iter().map(|p| p.pct_diff).collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let min = diffs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let series: Vec<SubtaskSeries> = runs[0]
        .subtask_ids()
        .into_iter()
        .map(|id| {
            let mean_acc = |on: bool| {
                offs.iter()
                    .map(|f| by[&f.with(t, on)].get(&id).expect("subtask sets checked").accuracy())
                    .sum::<f64>()
                    / offs.len() as f64
            };
            SubtaskSeries {
                off: mean_acc(false),
                on: mean_acc(true),
                subtask: id,
            }
        })
        .collect();
    let on: Vec<f64> = series.iter().map(|s| s.on).collect();
    let off: Vec<f64> = series.iter().map(|s| s.off).collect();
    Ok(AblationReport {
        transformation: t,
        pairs,
        mean,
        min,
        max,
        t_test: paired_t_test(&on, &off),
        series,
    })
}

impl AblationReport {
    /// Rows of `transformation,pair_id,pct_diff`, then mean, min, max, t and p.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let t = self.transformation;
        writeln!(w, "transformation,pair_id,pct_diff")?;
        for p in &self.pairs {
            writeln!(w, "{t},{},{}", p.pair_id, p.pct_diff)?;
        }
        writeln!(w, "{t},mean,{}", self.mean)?;
        writeln!(w, "{t},min,{}", self.min)?;
        writeln!(w, "{t},max,{}", self.max)?;
        match self.t_test {
            TTest::Computed { t: stat, p, .. } => {
                writeln!(w, "{t},t,{stat}")?;
                writeln!(w, "{t},p,{p}")?;
            }
            TTest::Degenerate(d) => {
                let d = serde_json::to_value(d).expect("unit enum serializes");
                let d = d.as_str().unwrap_or("degenerate");
                writeln!(w, "{t},t,degenerate:{d}")?;
                writeln!(w, "{t},p,degenerate:{d}")?;
            }
        }
        Ok(())
    }
}

/// Macro scores and ablation effect before and after dropping subtasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub excluded: BTreeSet<String>,
    pub before: AblationReport,
    pub after: AblationReport,
    /// `(run, macro before, macro after)` in flag order.
    pub macros: Vec<(TransformFlags, f64, f64)>,
}

impl FilterReport {
    pub fn mean_effect_delta(&self) -> f64 {
        self.after.mean - self.before.mean
    }

    /// Fraction of the unfiltered mean effect's magnitude removed by filtering.
    pub fn effect_reduction(&self) -> f64 {
        1.0 - self.after.mean.abs() / self.before.mean.abs()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "row,before,after,delta")?;
        for (flags, b, a) in &self.macros {
            writeln!(w, "macro:{flags},{b},{a},{}", a - b)?;
        }
        let (b, a) = (&self.before, &self.after);
        for (name, x, y) in [("mean", b.mean, a.mean), ("min", b.min, a.min), ("max", b.max, a.max)] {
            writeln!(w, "{}:{name},{x},{y},{}", b.transformation, y - x)?;
        }
        Ok(())
    }
}

pub fn filter_subtasks(
    runs: &[BenchmarkScores],
    exclude: &BTreeSet<String>,
    t: Transformation,
) -> Result<FilterReport, EvalError> {
    let before = ablation_effect(runs, t)?;
    let filtered = runs.iter().map(|r| r.without(exclude)).collect::<Result<Vec<_>, _>>()?;
    let after = ablation_effect(&filtered, t)?;
    let mut macros: Vec<(TransformFlags, f64, f64)> = runs
        .iter()
        .zip(&filtered)
        .map(|(r, f)| (r.flags, r.macro_score(), f.macro_score()))
        .collect();
    macros.sort_by_key(|m| m.0);
    Ok(FilterReport {
        excluded: exclude.clone(),
        before,
        after,
        macros,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Degenerate;

    /// Eight runs, one subtask of 64 pairs; `on_correct[i]` is paired with an off score of 50/64.
    fn fixture(t: Transformation, on_correct: [usize; 4]) -> Vec<BenchmarkScores> {
        let offs: Vec<TransformFlags> = TransformFlags::all().into_iter().filter(|f| !f.get(t)).collect();
        let mut runs = Vec::new();
        for (f, c) in offs.into_iter().zip(on_correct) {
            runs.push(BenchmarkScores::from_counts(f, [("s", 50, 64)]));
            runs.push(BenchmarkScores::from_counts(f.with(t, true), [("s", c, 64)]));
        }
        runs
    }

    #[test]
    fn constructed_effects_are_exact() {
        for t in Transformation::ALL {
            let r = ablation_effect(&fixture(t, [51, 48, 53, 50]), t).unwrap();
            let got: Vec<f64> = r.pairs.iter().map(|p| p.pct_diff).collect();
            assert_eq!(got, [2.0, -4.0, 6.0, 0.0]);
            assert_eq!((r.mean, r.min, r.max), (1.0, -4.0, 6.0));
            assert!(r.min <= r.mean && r.mean <= r.max);
        }
    }

    #[test]
    fn zero_identity() {
        let t = Transformation::PhonemicTranscription;
        let runs: Vec<BenchmarkScores> = TransformFlags::all()
            .into_iter()
            .map(|f| BenchmarkScores::from_counts(f, [("a", 7, 10), ("b", 3, 4)]))
            .collect();
        let r = ablation_effect(&runs, t).unwrap();
        assert!(r.pairs.iter().all(|p| p.pct_diff == 0.0));
        assert_eq!((r.mean, r.min, r.max), (0.0, 0.0, 0.0));
        assert_eq!(r.t_test, TTest::Degenerate(Degenerate::ZeroVariance));
    }

    #[test]
    fn uniform_ten_percent() {
        let t = Transformation::WordBoundaryRemoval;
        let runs: Vec<BenchmarkScores> = TransformFlags::all()
            .into_iter()
            .map(|f| BenchmarkScores::from_counts(f, [("a", if f.get(t) { 55 } else { 50 }, 100)]))
            .collect();
        let r = ablation_effect(&runs, t).unwrap();
        for x in [r.mean, r.min, r.max] {
            assert!((x - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_and_mismatched_runs() {
        let t = Transformation::CharacterTokenization;
        let mut runs = fixture(t, [50; 4]);
        let dropped = runs.remove(3).flags;
        match ablation_effect(&runs, t) {
            Err(EvalError::MissingRuns(m)) => assert_eq!(m, [dropped.to_string()]),
            other => panic!("{other:?}"),
        }
        runs.push(BenchmarkScores::from_counts(dropped, [("other", 1, 2)]));
        assert!(matches!(ablation_effect(&runs, t), Err(EvalError::SubtaskMismatch { .. })));
        runs.push(runs[0].clone());
        assert!(matches!(ablation_effect(&runs, t), Err(EvalError::DuplicateRun(_))));
    }

    #[test]
    fn pair_ids() {
        let f = TransformFlags::new(false, true, false);
        assert_eq!(pair_id(f, Transformation::PhonemicTranscription), "bpe+noboundary+*");
        assert_eq!(pair_id(f, Transformation::CharacterTokenization), "*+noboundary+ortho");
    }

    #[test]
    fn filtering_recomputes_effect() {
        let t = Transformation::PhonemicTranscription;
        let runs: Vec<BenchmarkScores> = TransformFlags::all()
            .into_iter()
            .map(|f| {
                let punct = if f.phonemic { 2 } else { 8 };
                BenchmarkScores::from_counts(f, [("a", 8, 10), ("b", 8, 10), ("p1", punct, 10)])
            })
            .collect();
        let rep = filter_subtasks(&runs, &["p1".to_string()].into(), t).unwrap();
        assert!(rep.before.mean < -20.0);
        assert_eq!(rep.after.mean, 0.0);
        assert_eq!(rep.effect_reduction(), 1.0);
        assert_eq!(rep.macros.len(), 8);
        let same = filter_subtasks(&runs, &BTreeSet::new(), t).unwrap();
        assert_eq!(same.before, same.after);
        assert!(matches!(
            filter_subtasks(&runs, &["zz".to_string()].into(), t),
            Err(EvalError::UnknownSubtask(_))
        ));
    }

    #[test]
    fn csv_has_summary_rows() {
        let t = Transformation::CharacterTokenization;
        let r = ablation_effect(&fixture(t, [51, 48, 53, 50]), t).unwrap();
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 4 + 5);
        assert_eq!(lines[5], "character,mean,1");
        assert!(lines[8].starts_with("character,t,degenerate:"));
    }

    proptest::proptest! {
        #[test]
        fn summary_bounds(cs in proptest::array::uniform4(1usize..=64)) {
            let t = Transformation::PhonemicTranscription;
            let r = ablation_effect(&fixture(t, cs), t).unwrap();
            proptest::prop_assert!(r.min <= r.mean + 1e-12 && r.mean <= r.max + 1e-12);
            proptest::prop_assert_eq!(r.pairs.len(), 4);
        }
    }
}
