//! Run manifests: flat `key=value` text recording how a run was invoked.
//!
//! ```text
//! # format: manifest/1
//! subcommand=train
//! toolkit_version=0.1.0
//! timestamp_unix=1760000000
//! cwd=/home/me/work
//! ...resolved settings...
//! arg.0=train
//! arg.1=--model
//! arg.2=RN2-1
//! ```
//!
//! The `arg.N` entries are the exact command-line tokens after the program name; replay
//! re-parses them from the recorded `cwd`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::CliError;

pub const MANIFEST_FORMAT: &str = "# format: manifest/1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunManifest {
    entries: Vec<(String, String)>,
}

impl RunManifest {
    /// Starts a manifest with the standard header keys.
    pub fn begin(subcommand: &str, args: &[String]) -> Self {
        let mut m = RunManifest::default();
        m.set("subcommand", subcommand);
        m.set("toolkit_version", env!("CARGO_PKG_VERSION"));
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        m.set("timestamp_unix", ts);
        let cwd = std::env::current_dir().unwrap_or_default();
        m.set("cwd", cwd.display());
        for (i, a) in args.iter().enumerate() {
            m.entries.push((format!("arg.{i}"), a.clone()));
        }
        m
    }

    /// Inserts or replaces `key`. Header keys keep their position; new keys are placed
    /// before the `arg.N` block.
    pub fn set(&mut self, key: &str, value: impl std::fmt::Display) {
        let value = value.to_string();
        if let Some(e) = self.entries.iter_mut().find(|(k, _)| k == key) {
            e.1 = value;
            return;
        }
        let pos = self
            .entries
            .iter()
            .position(|(k, _)| k.starts_with("arg."))
            .unwrap_or(self.entries.len());
        self.entries.insert(pos, (key.to_string(), value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn args(&self) -> Vec<String> {
        let mut args: Vec<(usize, String)> = self
            .entries
            .iter()
            .filter_map(|(k, v)| Some((k.strip_prefix("arg.")?.parse().ok()?, v.clone())))
            .collect();
        args.sort_by_key(|(i, _)| *i);
        args.into_iter().map(|(_, v)| v).collect()
    }

    pub fn render(&self) -> String {
        let mut out = format!("{MANIFEST_FORMAT}\n");
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut m = RunManifest::default();
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_FORMAT) {
            return Err(CliError::Manifest(format!("first line must be {MANIFEST_FORMAT:?}")));
        }
        for (n, line) in lines.enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Manifest(format!("line {}: no '=' in {line:?}", n + 2)))?;
            m.entries.push((k.to_string(), v.to_string()));
        }
        if m.get("subcommand").is_none() || m.args().is_empty() {
            return Err(CliError::Manifest("missing subcommand or arguments".into()));
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.render()).map_err(|e| CliError::io(path, e))
    }

    pub fn cwd(&self) -> Option<PathBuf> {
        self.get("cwd").map(PathBuf::from)
    }
}
