//! Versioned JSON files for codebooks, subword models and vocabularies.
//!
//! Each file is one JSON object `{"format": <name>, "version": 1, ...}` where
//! the remaining fields are those of the serialized value.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::bpe::SubwordModel;
use super::kmeans::Codebook;
use super::vocab::Vocabulary;
use crate::error::{Error, Result};

const VERSION: u64 = 1;

fn save<V: Serialize>(path: &Path, format: &str, value: &V) -> Result<()> {
    let mut obj = match serde_json::to_value(value)? {
        serde_json::Value::Object(m) => m,
        _ => unreachable!("file payloads are structs"),
    };
    obj.insert("format".into(), format.into());
    obj.insert("version".into(), VERSION.into());
    let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(obj))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn load<V: DeserializeOwned>(path: &Path, format: &str) -> Result<V> {
    let text = std::fs::read_to_string(path)?;
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message,
    };
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| parse_err("expected a JSON object".into()))?;
    match obj.remove("format") {
        Some(serde_json::Value::String(f)) if f == format => {}
        other => return Err(parse_err(format!("expected format {format:?}, found {other:?}"))),
    }
    match obj.remove("version").and_then(|v| v.as_u64()) {
        Some(VERSION) => {}
        other => return Err(parse_err(format!("unsupported version {other:?}"))),
    }
    serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))
}

pub fn save_codebook(path: &Path, codebook: &Codebook) -> Result<()> {
    save(path, "madeon-codebook", codebook)
}

pub fn load_codebook(path: &Path) -> Result<Codebook> {
    let c: Codebook = load(path, "madeon-codebook")?;
    Codebook::new(c.k, c.dim, c.centers)
}

pub fn save_subword(path: &Path, model: &SubwordModel) -> Result<()> {
    save(path, "madeon-subword", model)
}

pub fn load_subword(path: &Path) -> Result<SubwordModel> {
    load(path, "madeon-subword")
}

pub fn save_vocabulary(path: &Path, vocab: &Vocabulary) -> Result<()> {
    save(path, "madeon-vocab", vocab)
}

pub fn load_vocabulary(path: &Path) -> Result<Vocabulary> {
    load(path, "madeon-vocab")
}
