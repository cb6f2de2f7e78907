//! `OPUS-CORPUS/1` manifest: a line-oriented key=value text file.
//!
//! ```text
//! OPUS-CORPUS/1
//! documents=2
//! doc_id=0<TAB>source_path=corpus/a.txt<TAB>stems=cat:3,dog:1
//! doc_id=1<TAB>source_path=corpus/b.txt<TAB>stems=cat:1
//! ```
//!
//! Backslash, tab and newline inside a source path are written as `\\`, `\t`
//! and `\n`. Stems are alphanumeric so need no escaping.

use std::collections::BTreeMap;
use std::path::PathBuf;

use super::DocumentRecord;
use crate::error::{Error, Result};

pub const CORPUS_MAGIC: &str = "OPUS-CORPUS/1";

const FORMAT: &str = "OPUS-CORPUS/1";

/// One manifest entry: what survives a write/read cycle of a [`DocumentRecord`].
pub type ManifestEntry = (u64, PathBuf, BTreeMap<String, u64>);

pub fn write_manifest(records: &[DocumentRecord]) -> String {
    let mut out = format!("{CORPUS_MAGIC}\ndocuments={}\n", records.len());
    for r in records {
        let stems: Vec<String> = r
            .keyword_counts
            .iter()
            .map(|(s, c)| format!("{s}:{c}"))
            .collect();
        out.push_str(&format!(
            "doc_id={}\tsource_path={}\tstems={}\n",
            r.doc_id,
            escape(&r.source_path.to_string_lossy()),
            stems.join(",")
        ));
    }
    out
}

pub fn read_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut lines = text.lines();
    if lines.next() != Some(CORPUS_MAGIC) {
        return Err(Error::format(FORMAT, "missing OPUS-CORPUS/1 header"));
    }
    let count: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("documents="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::format(FORMAT, "missing documents= line"))?;
    let mut out = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let bad = |what: &str| Error::format(FORMAT, format!("entry {i}: {what}"));
        let mut fields = line.split('\t');
        let doc_id = fields
            .next()
            .and_then(|f| f.strip_prefix("doc_id="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("bad doc_id"))?;
        let path = fields
            .next()
            .and_then(|f| f.strip_prefix("source_path="))
            .ok_or_else(|| bad("bad source_path"))?;
        let stems_field = fields
            .next()
            .and_then(|f| f.strip_prefix("stems="))
            .ok_or_else(|| bad("bad stems"))?;
        if fields.next().is_some() {
            return Err(bad("unexpected extra field"));
        }
        let mut stems = BTreeMap::new();
        for pair in stems_field.split(',').filter(|p| !p.is_empty()) {
            let (s, c) = pair.rsplit_once(':').ok_or_else(|| bad("bad stem pair"))?;
            let c: u64 = c.parse().map_err(|_| bad("bad stem count"))?;
            if c == 0 {
                return Err(bad("zero stem count"));
            }
            stems.insert(s.to_string(), c);
        }
        out.push((doc_id, PathBuf::from(unescape(path)), stems));
    }
    if out.len() != count {
        return Err(Error::format(
            FORMAT,
            format!("header promises {count} documents, found {}", out.len()),
        ));
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('t') => out.push('\t'),
                Some('n') => out.push('\n'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}
