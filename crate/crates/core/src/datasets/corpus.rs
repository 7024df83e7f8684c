//! JSON-lines token corpus.
//!
//! One object per line: `{"id": "...", "speech_ids": "12 40 7", "text": "..."}`
//! where `speech_ids` are raw cluster indices separated by single spaces.
//! Blank lines are ignored.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub id: String,
    #[serde(serialize_with = "ids_to_string", deserialize_with = "ids_from_string")]
    pub speech_ids: Vec<u32>,
    pub text: String,
}

fn ids_to_string<S: Serializer>(ids: &[u32], s: S) -> std::result::Result<S::Ok, S::Error> {
    let parts: Vec<String> = ids.iter().map(u32::to_string).collect();
    s.serialize_str(&parts.join(" "))
}

fn ids_from_string<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<u32>, D::Error> {
    let s = String::deserialize(d)?;
    s.split_whitespace()
        .map(|t| t.parse::<u32>().map_err(serde::de::Error::custom))
        .collect()
}

pub fn load_corpus(path: &Path) -> Result<Vec<CorpusRecord>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn save_corpus(path: &Path, records: &[CorpusRecord]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
