use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::failure::{Failure, Result};

/// Written next to every run's outputs. `args` and `cwd` are enough to
/// repeat the run with `phonostream rerun`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool_version: String,
    pub command: String,
    pub args: Vec<String>,
    pub cwd: PathBuf,
    pub created: String,
    pub resolved: Value,
}

impl RunRecord {
    pub fn new(command: &str, args: &[String], resolved: Value) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args: args.to_vec(),
            cwd: std::env::current_dir().unwrap_or_default(),
            created: chrono::Utc::now().to_rfc3339(),
            resolved,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        std::fs::write(path, bytes).map_err(|e| Failure::from(e).context(path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Failure::from(e).context(path.display()))?;
        serde_json::from_slice(&bytes).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
    }
}

/// Record path for a file output: `out.txt` -> `out.txt.run.json`.
pub fn beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".run.json");
    out.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_sits_beside_output() {
        assert_eq!(beside(Path::new("runs/out.csv")), PathBuf::from("runs/out.csv.run.json"));
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let rec = RunRecord::new("eval", &["eval".into(), "--out".into(), "x".into()], serde_json::json!({"k": 1}));
        rec.save(&path).unwrap();
        let back = RunRecord::load(&path).unwrap();
        assert_eq!(back.args, rec.args);
        assert_eq!(back.resolved, rec.resolved);
    }
}
