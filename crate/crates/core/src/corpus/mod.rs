//! Text cleaning, train/validation splitting and block packing.

mod blocks;
mod clean;

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use blocks::{build_blocks, token_stream, BatchSampler, BlockStore, ExampleBlock};
pub use clean::{clean_text, AnomalyPattern, CleanStats, Cleaner, DEFAULT_PATTERNS};

pub const MANIFEST_VERSION: u32 = 1;
pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("context size must be positive")]
    ZeroContext,
    #[error("batch size must be positive")]
    ZeroBatch,
    #[error("cannot sample from an empty block list")]
    NoBlocks,
    #[error("cleaning patterns line {line}: {message}")]
    Pattern { line: usize, message: String },
    #[error("validation fraction {0} is outside [0, 1)")]
    Fraction(f64),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

/// Assigns a line to a split from the SHA-256 of its bytes, so the same line
/// always lands in the same split.
pub fn split_of(line: &str, validation_fraction: f64) -> Split {
    let h = Sha256::digest(line.as_bytes());
    let x = u64::from_be_bytes(h[..8].try_into().unwrap());
    if (x as f64) < validation_fraction * 2f64.powi(64) {
        Split::Validation
    } else {
        Split::Train
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub path: String,
    pub sha256: String,
    pub lines: u64,
    /// Lines left empty by cleaning and dropped.
    pub dropped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub train_lines: u64,
    pub validation_lines: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub cleaning_patterns_version: u32,
    pub sources: Vec<SourceEntry>,
    pub split: SplitSummary,
    pub cleaning: CleanStats,
    pub train_file: String,
    pub validation_file: String,
}

impl CorpusManifest {
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut bytes = serde_json::to_vec_pretty(self).map_err(|e| CorpusError::Format(e.to_string()))?;
        bytes.push(b'\n');
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let m: Self = serde_json::from_slice(&std::fs::read(path)?)
            .map_err(|e| CorpusError::Format(format!("{}: {e}", path.display())))?;
        if m.version != MANIFEST_VERSION {
            return Err(CorpusError::Format(format!(
                "unsupported manifest version {} (expected {MANIFEST_VERSION})",
                m.version
            )));
        }
        Ok(m)
    }
}

/// Options for [`prepare_corpus`].
#[derive(Debug, Clone)]
pub struct PrepareOptions {
    pub validation_fraction: f64,
    pub jobs: usize,
    pub chunk_lines: usize,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
            jobs: 1,
            chunk_lines: 8192,
        }
    }
}

/// Cleans every source line, splits by line hash and writes `train.txt`,
/// `valid.txt` and `manifest.json` under `out_dir`.
///
/// Lines that clean to nothing are dropped. Output order follows input order.
pub fn prepare_corpus(
    sources: &[PathBuf],
    out_dir: &Path,
    cleaner: &Cleaner,
    opts: &PrepareOptions,
) -> Result<CorpusManifest, CorpusError> {
    if !(0.0..1.0).contains(&opts.validation_fraction) {
        return Err(CorpusError::Fraction(opts.validation_fraction));
    }
    std::fs::create_dir_all(out_dir)?;
    let train_path = out_dir.join("train.txt");
    let valid_path = out_dir.join("valid.txt");
    let mut train = BufWriter::new(std::fs::File::create(&train_path)?);
    let mut valid = BufWriter::new(std::fs::File::create(&valid_path)?);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| CorpusError::Format(e.to_string()))?;

    let mut stats = CleanStats::default();
    let mut entries = Vec::new();
    let (mut n_train, mut n_valid) = (0u64, 0u64);
    for src in sources {
        let mut reader = BufReader::new(std::fs::File::open(src)?);
        let mut hasher = Sha256::new();
        let mut entry = SourceEntry {
            path: src.display().to_string(),
            sha256: String::new(),
            lines: 0,
            dropped: 0,
        };
        loop {
            let mut chunk = Vec::with_capacity(opts.chunk_lines);
            let mut buf = String::new();
            while chunk.len() < opts.chunk_lines {
                buf.clear();
                if reader.read_line(&mut buf)? == 0 {
                    break;
                }
                hasher.update(buf.as_bytes());
                chunk.push(buf.trim_end_matches(['\n', '\r']).to_string());
            }
            if chunk.is_empty() {
                break;
            }
            let cleaned: Vec<(String, CleanStats)> =
                pool.install(|| chunk.par_iter().map(|l| cleaner.clean(l)).collect());
            for (line, s) in cleaned {
                stats += s;
                entry.lines += 1;
                if line.is_empty() {
                    entry.dropped += 1;
                    continue;
                }
                match split_of(&line, opts.validation_fraction) {
                    Split::Train => {
                        n_train += 1;
                        writeln!(train, "{line}")?;
                    }
                    Split::Validation => {
                        n_valid += 1;
                        writeln!(valid, "{line}")?;
                    }
                }
            }
        }
        entry.sha256 = hex::encode(hasher.finalize());
        entries.push(entry);
    }
    train.flush()?;
    valid.flush()?;
    let manifest = CorpusManifest {
        version: MANIFEST_VERSION,
        cleaning_patterns_version: cleaner.version(),
        sources: entries,
        split: SplitSummary {
            train_fraction: 1.0 - opts.validation_fraction,
            validation_fraction: opts.validation_fraction,
            train_lines: n_train,
            validation_lines: n_valid,
        },
        cleaning: stats,
        train_file: "train.txt".into(),
        validation_file: "valid.txt".into(),
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Reads non-empty lines from a text file.
pub fn read_lines(path: &Path) -> Result<Vec<String>, CorpusError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(line);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn split_is_deterministic_and_sized() {
        let lines: Vec<String> = (0..20_000).map(|i| format!("line number {i}")).collect();
        let valid = lines
            .iter()
            .filter(|l| split_of(l, 0.01) == Split::Validation)
            .count();
        assert!((150..=250).contains(&valid), "{valid}");
        assert_eq!(split_of("x", 0.5), split_of("x", 0.5));
        assert!(lines.iter().all(|l| split_of(l, 0.0) == Split::Train));
    }

    #[test]
    fn prepare_writes_disjoint_exhaustive_splits() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("raw.txt");
        let mut text = String::new();
        for i in 0..500 {
            text.push_str(&format!("  sentence   {i}\u{0000} here .\n"));
        }
        text.push_str("   \n");
        std::fs::write(&src, &text).unwrap();
        let out = dir.path().join("out");
        let opts = PrepareOptions {
            validation_fraction: 0.1,
            jobs: 2,
            chunk_lines: 64,
        };
        let m = prepare_corpus(&[src.clone()], &out, Cleaner::bundled(), &opts).unwrap();
        assert_eq!(m.sources[0].lines, 501);
        assert_eq!(m.sources[0].dropped, 1);
        assert_eq!(m.split.train_lines + m.split.validation_lines, 500);
        assert!((m.split.train_fraction + m.split.validation_fraction - 1.0).abs() < 1e-12);
        assert_eq!(m.cleaning.control_chars_removed, 500);
        assert!(m.cleaning.anomalies_fixed >= 500);

        let train: HashSet<String> = read_lines(&out.join("train.txt")).unwrap().into_iter().collect();
        let valid: HashSet<String> = read_lines(&out.join("valid.txt")).unwrap().into_iter().collect();
        assert!(train.is_disjoint(&valid));
        assert_eq!(train.len() + valid.len(), 500);
        assert!(train.contains("sentence 0 here.") || valid.contains("sentence 0 here."));
        assert_eq!(CorpusManifest::load(&out.join("manifest.json")).unwrap(), m);

        let serial = prepare_corpus(&[src], &dir.path().join("serial"), Cleaner::bundled(), &PrepareOptions {
            jobs: 1,
            ..opts
        })
        .unwrap();
        assert_eq!(
            std::fs::read(out.join("train.txt")).unwrap(),
            std::fs::read(dir.path().join("serial/train.txt")).unwrap()
        );
        assert_eq!(serial.cleaning, m.cleaning);
    }
}
