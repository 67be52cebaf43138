use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// A finished output file, held in memory until the run completes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn header_comment(cfg: &RunConfig) -> Result<String> {
    let mut out = format!(
        "# ergomlmc {} {}\n# seed = {}\n# effective config:\n",
        env!("CARGO_PKG_VERSION"),
        cfg.command.as_str(),
        cfg.seed
    );
    for line in cfg.effective_toml()?.lines() {
        out.push_str("#   ");
        out.push_str(line);
        out.push('\n');
    }
    Ok(out)
}

pub struct Csv {
    buf: String,
    width: usize,
}

impl Csv {
    pub fn new(cfg: &RunConfig, columns: &[&str]) -> Result<Self> {
        let mut buf = header_comment(cfg)?;
        buf.push_str(&columns.join(","));
        buf.push('\n');
        Ok(Csv { buf, width: columns.len() })
    }

    pub fn row(&mut self, fields: &[String]) {
        debug_assert_eq!(fields.len(), self.width);
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn finish(self, name: impl Into<String>) -> Artifact {
        Artifact { name: name.into(), contents: self.buf }
    }
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    config: &'a crate::config::Settings,
    result: &'a T,
}

/// JSON has no comments, so the effective config travels in a `config` field.
pub fn json<T: Serialize>(cfg: &RunConfig, name: impl Into<String>, result: &T) -> Result<Artifact> {
    let doc = Document {
        tool: "ergomlmc",
        version: env!("CARGO_PKG_VERSION"),
        command: cfg.command.as_str(),
        seed: cfg.seed,
        config: &cfg.effective,
        result,
    };
    let mut contents = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Serialize(e.to_string()))?;
    contents.push('\n');
    Ok(Artifact { name: name.into(), contents })
}

/// Writes every artifact into `dir`, creating it if needed.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    artifacts
        .iter()
        .map(|a| {
            let path = dir.join(&a.name);
            fs::write(&path, &a.contents).map_err(|source| CliError::Io { path: path.clone(), source })?;
            Ok(path)
        })
        .collect()
}
