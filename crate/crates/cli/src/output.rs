//! Metadata headers and text formats shared by every subcommand.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const TOOL: &str = "sc-lab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance of one run: enough to reproduce the output byte for byte.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_sha256: Option<String>,
}

impl Metadata {
    pub fn new(command: &'static str, config: Value, input: Option<&[u8]>) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            command,
            config,
            input_sha256: input.map(sha256_hex),
        }
    }

    /// `#`-prefixed lines for CSV and trajectory files.
    pub fn comment_lines(&self) -> String {
        let mut out = format!("# tool {TOOL} {VERSION}\n# command {}\n", self.command);
        out.push_str(&format!(
            "# config {}\n",
            serde_json::to_string(&self.config).expect("config is JSON")
        ));
        if let Some(digest) = &self.input_sha256 {
            out.push_str(&format!("# input-sha256 {digest}\n"));
        }
        out
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// 17 significant digits, the shortest width that round-trips every f64.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Pretty JSON: the body's fields plus `metadata`, keys sorted, newline terminated.
pub fn json_document<T: Serialize>(metadata: &Metadata, body: &T) -> Result<String> {
    let mut doc = serde_json::Map::new();
    doc.insert("metadata".into(), serde_json::to_value(metadata)?);
    match serde_json::to_value(body)? {
        Value::Object(fields) => doc.extend(fields),
        other => {
            doc.insert("result".into(), other);
        }
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(doc))?;
    text.push('\n');
    Ok(text)
}

/// Writes to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .context("cannot write to stdout")?;
            stdout.flush().context("cannot write to stdout")
        }
    }
}
