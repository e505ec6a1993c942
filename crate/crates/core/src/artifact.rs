//! On-disk artifacts: provenance headers, JSONL files and hashing.
//!
//! Every artifact starts with a header line `{"_header": {...}}` recording
//! the tool version, the content-affecting configuration and the SHA-256
//! of each input, so re-running a stage on identical inputs reproduces the
//! file byte for byte.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub kind: String,
    pub tool_version: String,
    pub config: BTreeMap<String, String>,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Header {
    pub fn new(kind: &str, config: BTreeMap<String, String>, inputs: BTreeMap<String, String>) -> Self {
        let config_hash = sha256_hex(serde_json::to_string(&config).expect("config serializes").as_bytes());
        Header {
            kind: kind.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            config,
            config_hash,
            inputs,
            extra: BTreeMap::new(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    #[serde(rename = "_header")]
    header: Header,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

/// Writes a header line followed by one JSON record per line.
pub fn write_jsonl<T: Serialize>(path: &Path, header: &Header, records: &[T]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    serde_json::to_writer(&mut w, &HeaderLine { header: header.clone() })?;
    w.write_all(b"\n").map_err(io)?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a JSONL artifact. The header line is optional; an empty file is an
/// empty artifact.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<(Option<Header>, Vec<T>)> {
    let reader = open(path)?;
    parse_jsonl(reader, path)
}

pub fn parse_jsonl<T: DeserializeOwned, R: BufRead>(reader: R, path: &Path) -> Result<(Option<Header>, Vec<T>)> {
    let mut header = None;
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 && line.starts_with("{\"_header\"") {
            let h: HeaderLine = serde_json::from_str(&line)
                .map_err(|e| Error::SchemaViolation(format!("{}: header: {e}", path.display())))?;
            header = Some(h.header);
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::SchemaViolation(format!("{}:{}: {e}", path.display(), i + 1)))?;
        records.push(rec);
    }
    Ok((header, records))
}

#[derive(Serialize, Deserialize)]
struct Document<T> {
    #[serde(rename = "_header")]
    header: Header,
    body: T,
}

/// Writes a single JSON document with a header.
pub fn write_document<T: Serialize>(path: &Path, header: &Header, body: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, &Document { header: header.clone(), body })?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_document<T: DeserializeOwned>(path: &Path) -> Result<(Header, T)> {
    let reader = open(path)?;
    let doc: Document<T> = serde_json::from_reader(reader)
        .map_err(|e| Error::SchemaViolation(format!("{}: {e}", path.display())))?;
    Ok((doc.header, doc.body))
}
