//! Minimal-pair evaluation, ablation effects and significance testing.

mod ablation;
mod pairs;
mod results;
mod score;
mod stats;

use thiserror::Error;

use crate::lm::LmError;

pub use ablation::{ablation_effect, filter_subtasks, pair_id, AblationReport, FilterReport, PairEffect, SubtaskSeries};
pub use pairs::{load_pairs, parse_pairs, valid_subtask_id, write_pairs, MinimalPair, PairKind};
pub use results::{BenchmarkScores, SubtaskScore};
pub use score::{
    boundary_token_comparison, BenchmarkRun, BoundaryComparison, BoundaryRow, EvalConfig, Evaluator, PairScore,
    Representation, ScoreNorm,
};
pub use stats::{paired_t_test, Degenerate, TTest};

/// Subtask id used for the macro-average row in result files.
pub const MACRO_ROW: &str = "MACRO";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{source_name}:{line}: {message}")]
    PairsFile {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("{source_name}:{line}: {message}")]
    ResultsFile {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Representation(String),
    #[error("model vocabulary ({model}) does not match tokenizer vocabulary ({tokenizer})")]
    VocabMismatch { model: usize, tokenizer: usize },
    #[error("missing runs for flag combinations: {}", .0.join(", "))]
    MissingRuns(Vec<String>),
    #[error("more than one run for flag combination {0}")]
    DuplicateRun(String),
    #[error("run {run} has subtasks {found:?}, expected {expected:?}")]
    SubtaskMismatch {
        run: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("unknown subtask {0:?}")]
    UnknownSubtask(String),
    #[error("excluding every subtask leaves nothing to score")]
    ExcludesAll,
    #[error("macro score of run {0} is zero, so the percentage difference is undefined")]
    ZeroBaseline(String),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
