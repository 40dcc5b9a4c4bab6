//! Layered run settings: defaults, then the config file, then `QA_SEED`,
//! then command-line flags.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use qa_core::TrainConfig;

use crate::error::{CliError, CliResult};

/// Keys naming files and directories.
pub const PATH_KEYS: &[&str] = &[
    "train_corpus",
    "valid_corpus",
    "test_corpus",
    "embeddings",
    "synonyms",
    "checkpoint",
    "output_dir",
    "predictions",
];

#[derive(Clone, Debug, Default)]
pub struct Settings {
    pub model: TrainConfig,
    pub paths: BTreeMap<&'static str, PathBuf>,
    /// Model keys given explicitly by any layer, in canonical form.
    pub explicit: BTreeSet<String>,
}

fn canonical(key: &str) -> &str {
    match key {
        "hidden_width" => "H",
        "word_dim" => "D",
        "pooling" => "pooling_mode",
        other => other,
    }
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let key = key.trim();
        if let Some(k) = PATH_KEYS.iter().find(|k| **k == key) {
            let v = value.trim();
            if v.is_empty() {
                return Err(CliError::Config(format!("empty path for {key}")));
            }
            self.paths.insert(k, PathBuf::from(v));
            return Ok(());
        }
        if !TrainConfig::is_key(key) {
            return Err(CliError::Config(format!("unknown configuration key {key:?}")));
        }
        self.model.set(key, value)?;
        if key == "feature_dims" {
            self.explicit.extend(["D1".to_string(), "D2".to_string()]);
        } else {
            self.explicit.insert(canonical(key).to_string());
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> CliResult<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected key=value", i + 1)))?;
            self.set(k, v).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("{origin}:{}: {m}", i + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn apply_seed_env(&mut self, value: Option<String>) -> CliResult<()> {
        match value {
            Some(v) => self
                .set("seed", &v)
                .map_err(|_| CliError::Config(format!("QA_SEED must be an unsigned integer, got {v:?}"))),
            None => Ok(()),
        }
    }

    /// Every value, reloadable as a config file.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.model.entries() {
            let _ = writeln!(out, "{k}={v}");
        }
        for (k, v) in &self.paths {
            let _ = writeln!(out, "{k}={}", v.display());
        }
        out
    }

    /// A path that must be set and exist.
    pub fn existing(&self, key: &str, flag: &str) -> CliResult<PathBuf> {
        let p = self.required(key, flag)?;
        if !p.exists() {
            return Err(CliError::Config(format!("{key}: {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn required(&self, key: &str, flag: &str) -> CliResult<PathBuf> {
        self.paths.get(key).cloned().ok_or_else(|| {
            CliError::Config(format!("missing required setting {key} (config key {key} or flag {flag})"))
        })
    }

    /// A path that, when set, must exist.
    pub fn optional_existing(&self, key: &str) -> CliResult<Option<PathBuf>> {
        match self.paths.get(key) {
            Some(p) if !p.exists() => Err(CliError::Config(format!("{key}: {} does not exist", p.display()))),
            other => Ok(other.cloned()),
        }
    }

    /// A file to be written: its parent directory must exist.
    pub fn writable(&self, key: &str, flag: &str) -> CliResult<PathBuf> {
        let p = self.required(key, flag)?;
        if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            if !parent.is_dir() {
                return Err(CliError::Config(format!(
                    "{key}: directory {} does not exist",
                    parent.display()
                )));
            }
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layering_and_comments() {
        let mut s = Settings::default();
        s.apply_text("# header\nH = 32 # width\n\nseed=4\ntrain_corpus=a.jsonl\n", "t.cfg").unwrap();
        assert_eq!(s.model.hidden, 32);
        assert_eq!(s.paths["train_corpus"], PathBuf::from("a.jsonl"));
        s.apply_seed_env(Some("9".into())).unwrap();
        s.set("seed", "11").unwrap();
        assert_eq!(s.model.seed, 11);
        assert!(s.explicit.contains("H") && s.explicit.contains("seed"));
    }

    #[test]
    fn unknown_key_names_the_line() {
        let err = Settings::default().apply_text("H=3\nwidth=4\n", "x.cfg").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("x.cfg:2") && err.to_string().contains("width"), "{err}");
    }

    #[test]
    fn echo_round_trips() {
        let mut s = Settings::default();
        s.apply_text("H=8\ndecoder=softmax\nlr=0.0005\nsynonyms=syn.tsv\n", "a").unwrap();
        let mut t = Settings::default();
        t.apply_text(&s.echo(), "echo").unwrap();
        assert_eq!(s.model, t.model);
        assert_eq!(s.paths, t.paths);
    }

    #[test]
    fn missing_path_names_the_key() {
        let err = Settings::default().existing("train_corpus", "--train-corpus").unwrap_err();
        assert!(err.to_string().contains("train_corpus"));
        assert_eq!(err.exit_code(), 1);
    }
}
