//! `key=value` text files with `#` comments, shared by dataset metadata and
//! experiment configs.

use crate::error::{Error, Result};

/// Parse `key=value` lines. Blank lines and lines starting with `#` are
/// skipped; a trailing `# comment` after a value is stripped.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {raw:?}", no + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", no + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn lookup<'a>(pairs: &'a [(String, String)], key: &str) -> Option<&'a str> {
    pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}
