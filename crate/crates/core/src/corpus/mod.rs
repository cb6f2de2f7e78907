//! Plaintext ingestion: tokenization, stopword removal, stemming and TF-IDF.
//!
//! IDF is the plain document ratio `|F| / df(kw)` with no logarithm, so every
//! IDF is at least 1 and a keyword present in every file has IDF exactly 1.

mod manifest;
mod stopwords;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rust_stemmers::{Algorithm, Stemmer};

use crate::error::{Error, Result};

pub use manifest::{read_manifest, write_manifest, CORPUS_MAGIC};
pub use stopwords::{default_stopwords, DEFAULT_STOPWORDS};

/// Tokens shorter than this (in characters) are discarded.
pub const MIN_TOKEN_LEN: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentRecord {
    pub doc_id: u64,
    pub source_path: PathBuf,
    pub raw_keywords: Vec<String>,
    pub stemmed_keywords: Vec<String>,
    pub keyword_counts: BTreeMap<String, u64>,
}

impl DocumentRecord {
    /// Builds a record from already-tokenized keywords, stemming them and
    /// dropping any stem that is itself a stopword.
    pub fn from_tokens(
        doc_id: u64,
        source_path: impl Into<PathBuf>,
        raw_keywords: Vec<String>,
        stopwords: &HashSet<String>,
    ) -> Self {
        let stemmed_keywords: Vec<String> = raw_keywords
            .iter()
            .map(|t| stem(t))
            .filter(|s| !s.is_empty() && !stopwords.contains(s))
            .collect();
        let mut keyword_counts = BTreeMap::new();
        for s in &stemmed_keywords {
            *keyword_counts.entry(s.clone()).or_insert(0) += 1;
        }
        Self {
            doc_id,
            source_path: source_path.into(),
            raw_keywords,
            stemmed_keywords,
            keyword_counts,
        }
    }

    pub fn distinct_keywords(&self) -> usize {
        self.keyword_counts.len()
    }

    pub fn total_keywords(&self) -> u64 {
        self.keyword_counts.values().sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    /// Sorted, distinct.
    pub stems: Vec<String>,
    pub doc_frequency: BTreeMap<String, u64>,
}

impl Vocabulary {
    pub fn from_records(records: &[DocumentRecord]) -> Self {
        let mut doc_frequency = BTreeMap::new();
        for r in records {
            for stem in r.keyword_counts.keys() {
                *doc_frequency.entry(stem.clone()).or_insert(0) += 1;
            }
        }
        Self {
            stems: doc_frequency.keys().cloned().collect(),
            doc_frequency,
        }
    }

    pub fn len(&self) -> usize {
        self.stems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stems.is_empty()
    }

    pub fn contains(&self, stem: &str) -> bool {
        self.doc_frequency.contains_key(stem)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermWeight {
    pub tf: f64,
    pub tfidf: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TfIdfTable {
    weights: BTreeMap<u64, BTreeMap<String, TermWeight>>,
    idf: BTreeMap<String, f64>,
}

impl TfIdfTable {
    pub fn tf(&self, stem: &str, doc_id: u64) -> Option<f64> {
        self.weight(stem, doc_id).map(|w| w.tf)
    }

    pub fn tfidf(&self, stem: &str, doc_id: u64) -> Option<f64> {
        self.weight(stem, doc_id).map(|w| w.tfidf)
    }

    pub fn idf(&self, stem: &str) -> Option<f64> {
        self.idf.get(stem).copied()
    }

    fn weight(&self, stem: &str, doc_id: u64) -> Option<TermWeight> {
        self.weights.get(&doc_id)?.get(stem).copied()
    }

    /// Per-stem weights of one document, in stem order.
    pub fn document(&self, doc_id: u64) -> Option<&BTreeMap<String, TermWeight>> {
        self.weights.get(&doc_id)
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.weights.keys().copied()
    }

    /// Stems of a document ordered by descending TF-IDF, ties by stem.
    pub fn top_stems(&self, doc_id: u64, n: usize) -> Vec<String> {
        let Some(doc) = self.weights.get(&doc_id) else {
            return Vec::new();
        };
        let mut ranked: Vec<(&String, f64)> = doc.iter().map(|(s, w)| (s, w.tfidf)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.into_iter().take(n).map(|(s, _)| s.clone()).collect()
    }
}

/// Lowercases, splits on every non-alphanumeric ASCII character, drops tokens
/// shorter than [`MIN_TOKEN_LEN`] and stopwords. Order is preserved.
pub fn tokenize_and_filter(text: &str, stopwords: &HashSet<String>) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| t.len() >= MIN_TOKEN_LEN)
        .map(|t| t.to_ascii_lowercase())
        .filter(|t| !stopwords.contains(t))
        .collect()
}

thread_local! {
    static STEMMER: Stemmer = Stemmer::create(Algorithm::English);
}

/// Porter-family (Snowball English) stem of a lowercase token.
pub fn stem(token: &str) -> String {
    if token.is_empty() {
        return String::new();
    }
    STEMMER.with(|s| s.stem(token).into_owned())
}

/// Reads a file as UTF-8 text, naming the file on failure.
pub fn read_text(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|_| Error::Undecodable {
        path: path.to_path_buf(),
    })
}

/// All regular, non-hidden files under `dir` (recursively), sorted by path.
pub fn list_text_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&d, e))?;
            let path = entry.path();
            if entry.file_name().to_string_lossy().starts_with('.') {
                continue;
            }
            let ft = entry.file_type().map_err(|e| Error::io(&path, e))?;
            if ft.is_dir() {
                stack.push(path);
            } else if ft.is_file() {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Ingests every text file under `directory`, keeping files whose number of
/// distinct stems lies in `[min_kw, max_kw]`. Retained files get consecutive
/// doc ids in path order.
pub fn build_corpus(
    directory: &Path,
    min_kw: usize,
    max_kw: usize,
) -> Result<(Vec<DocumentRecord>, Vocabulary)> {
    build_corpus_with(directory, min_kw, max_kw, &default_stopwords())
}

pub fn build_corpus_with(
    directory: &Path,
    min_kw: usize,
    max_kw: usize,
    stopwords: &HashSet<String>,
) -> Result<(Vec<DocumentRecord>, Vocabulary)> {
    let files = list_text_files(directory)?;
    if files.is_empty() {
        return Err(Error::CorpusEmpty(format!(
            "no files under {}",
            directory.display()
        )));
    }
    let mut records = Vec::new();
    for path in files {
        let text = read_text(&path)?;
        let tokens = tokenize_and_filter(&text, stopwords);
        let rec = DocumentRecord::from_tokens(records.len() as u64, path, tokens, stopwords);
        let n = rec.distinct_keywords();
        if (min_kw..=max_kw).contains(&n) {
            records.push(rec);
        }
    }
    if records.is_empty() {
        return Err(Error::CorpusEmpty(format!(
            "no file under {} has between {min_kw} and {max_kw} distinct keywords",
            directory.display()
        )));
    }
    let vocab = Vocabulary::from_records(&records);
    Ok((records, vocab))
}

pub fn compute_tfidf(records: &[DocumentRecord], vocab: &Vocabulary) -> Result<TfIdfTable> {
    let n_docs = records.len() as f64;
    let mut idf = BTreeMap::new();
    let mut weights = BTreeMap::new();
    for rec in records {
        let total = rec.total_keywords() as f64;
        let mut doc = BTreeMap::new();
        for (stem, &count) in &rec.keyword_counts {
            let df = *vocab.doc_frequency.get(stem).ok_or_else(|| {
                Error::Consistency(format!(
                    "stem {stem:?} of document {} missing from vocabulary",
                    rec.doc_id
                ))
            })?;
            if df == 0 {
                return Err(Error::Consistency(format!(
                    "stem {stem:?} has zero document frequency"
                )));
            }
            let stem_idf = n_docs / df as f64;
            idf.insert(stem.clone(), stem_idf);
            let tf = count as f64 / total;
            doc.insert(
                stem.clone(),
                TermWeight {
                    tf,
                    tfidf: tf * stem_idf,
                },
            );
        }
        weights.insert(rec.doc_id, doc);
    }
    Ok(TfIdfTable { weights, idf })
}
