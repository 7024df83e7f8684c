use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::usage;

/// An output directory that is either new, empty, or explicitly forced.
pub struct OutDir {
    pub path: PathBuf,
}

impl OutDir {
    pub fn prepare(path: &Path, force: bool) -> Result<Self> {
        if path.exists() {
            if !path.is_dir() {
                return Err(usage(format!("{} exists and is not a directory", path.display())));
            }
            let occupied = std::fs::read_dir(path)?.next().is_some();
            if occupied && !force {
                return Err(usage(format!(
                    "output directory {} is not empty; pass --force to overwrite",
                    path.display()
                )));
            }
        }
        std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
        })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.file(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }
}

/// `id<TAB>text` lines, as written by `decode` and read by `eval`.
pub fn write_transcripts(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let mut out = String::new();
    for (id, text) in rows {
        out.push_str(id);
        out.push('\t');
        out.push_str(text);
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn read_transcripts(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (id, t) = line
            .split_once('\t')
            .ok_or_else(|| usage(format!("{}:{}: expected id<TAB>text", path.display(), k + 1)))?;
        rows.push((id.to_string(), t.to_string()));
    }
    Ok(rows)
}
