//! Anagram workloads: one member of a pair goes into some files, the other
//! into the queries. Position-free encoders cannot tell the two apart, so the
//! files get credit they do not deserve.

use rand::seq::index::sample;
use rand::Rng;

use crate::corpus::DocumentRecord;
use crate::error::{Error, Result};

const BUNDLED: &str = include_str!("../../fixtures/anagrams.txt");

/// The bundled list of 100 anagram pairs.
pub fn bundled_anagram_pairs() -> Vec<(String, String)> {
    BUNDLED
        .lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('\t'))
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnagramInjection {
    pub records: Vec<DocumentRecord>,
    /// Files that received the file-side words, ascending.
    pub decoy_files: Vec<u64>,
    /// Inserted into every decoy file.
    pub file_words: Vec<String>,
    /// Their anagrams, appended to every query.
    pub query_words: Vec<String>,
}

/// Picks `n_a` pairs and inserts one member of each into `f_a` distinct
/// files; the other members are returned for the queries. Which member goes
/// where is a coin flip per pair. Words are added as stems, bypassing the
/// stemmer.
pub fn inject_anagrams(
    records: &[DocumentRecord],
    pairs: &[(String, String)],
    n_a: usize,
    f_a: usize,
    rng: &mut impl Rng,
) -> Result<AnagramInjection> {
    let mut out = AnagramInjection {
        records: records.to_vec(),
        decoy_files: Vec::new(),
        file_words: Vec::new(),
        query_words: Vec::new(),
    };
    if n_a == 0 || f_a == 0 {
        return Ok(out);
    }
    if f_a > records.len() {
        return Err(Error::InvalidParameter(format!(
            "F_A = {f_a} exceeds the corpus size {}",
            records.len()
        )));
    }
    if n_a > pairs.len() {
        return Err(Error::InvalidParameter(format!(
            "N_A = {n_a} exceeds the {} available anagram pairs",
            pairs.len()
        )));
    }
    for pi in sample(rng, pairs.len(), n_a) {
        let (a, b) = &pairs[pi];
        let (f, q) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
        out.file_words.push(f.clone());
        out.query_words.push(q.clone());
    }
    let mut files = sample(rng, records.len(), f_a).into_vec();
    files.sort_unstable();
    for &fi in &files {
        let rec = &mut out.records[fi];
        for w in &out.file_words {
            rec.raw_keywords.push(w.clone());
            rec.stemmed_keywords.push(w.clone());
            *rec.keyword_counts.entry(w.clone()).or_insert(0) += 1;
        }
        out.decoy_files.push(rec.doc_id);
    }
    out.decoy_files.sort_unstable();
    Ok(out)
}
