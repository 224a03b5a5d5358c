//! Declarative experiment config file (TOML). Unknown keys are hard
//! errors so a typo never silently falls back to a default.

use std::path::{Path, PathBuf};

use serde::Deserialize;

/// CLI failure classes; they map onto the process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config file, missing paths. Exit code 1.
    Config(String),
    /// Failures past configuration: io, training, attacks. Exit code 2.
    Runtime(String),
}

impl CliError {
    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// File mirror of the attack flags. Every field is optional; flags win
/// over file values.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub epsilon: Option<f64>,
    pub p: Option<String>,
    pub iters: Option<usize>,
    pub beta: Option<f64>,
    pub step: Option<f64>,
    pub b: Option<usize>,
    pub delta: Option<f64>,
    pub sensing: Option<String>,
    pub budget: Option<u64>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub targets: Option<String>,
}

impl FileConfig {
    /// Loads and validates a TOML config; unknown keys are named in the
    /// error along with their position.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read --config {}: {e}", path.display()))
        })?;
        toml::from_str(&text).map_err(|e| {
            CliError::Config(format!("bad config {}: {e}", path.display()))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected_with_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "epsilon = 0.3\nepsilonn = 0.4\n").unwrap();
        let err = FileConfig::load(&path).unwrap_err();
        let CliError::Config(msg) = err else {
            panic!("expected config error");
        };
        assert!(msg.contains("epsilonn"), "message should name the key: {msg}");
    }

    #[test]
    fn valid_config_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(
            &path,
            "epsilon = 0.3\nseed = 9\ntargets = \"fixed:3\"\nsensing = \"gaussian\"\n",
        )
        .unwrap();
        let cfg = FileConfig::load(&path).unwrap();
        assert_eq!(cfg.epsilon, Some(0.3));
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.targets.as_deref(), Some("fixed:3"));
    }
}
