//! Position-free baselines: the classic uni-gram and bi-gram keyword vectors.
//!
//! Both use the 36-symbol alphabet `a..z0..9`; other characters are ignored.

use crate::error::{Error, Result};
use crate::lsh_bloom::KeywordEncoder;

const ALPHABET: usize = 36;

fn symbol(c: char) -> Option<usize> {
    match c {
        'a'..='z' => Some(c as usize - 'a' as usize),
        '0'..='9' => Some(26 + c as usize - '0' as usize),
        _ => None,
    }
}

fn symbols(word: &str) -> Result<Vec<usize>> {
    if word.is_empty() {
        return Err(Error::InvalidKeyword("empty keyword".into()));
    }
    Ok(word
        .chars()
        .flat_map(char::to_lowercase)
        .filter_map(symbol)
        .collect())
}

/// Uni-gram: one slot per `(symbol, occurrence)` pair, so `scheme` sets
/// `s1 c1 h1 e1 m1 e2`. Occurrences beyond `max_occurrence` are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnigramEncoder {
    pub max_occurrence: usize,
}

impl Default for UnigramEncoder {
    fn default() -> Self {
        Self { max_occurrence: 20 }
    }
}

impl KeywordEncoder for UnigramEncoder {
    fn dim(&self) -> usize {
        ALPHABET * self.max_occurrence
    }

    fn encode(&self, keyword: &str) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dim()];
        let mut seen = [0usize; ALPHABET];
        for s in symbols(keyword)? {
            seen[s] += 1;
            if seen[s] <= self.max_occurrence {
                v[s * self.max_occurrence + seen[s] - 1] = 1.0;
            }
        }
        Ok(v)
    }
}

/// Bi-gram: presence of each adjacent symbol pair, so `task` sets `ta as sk`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BigramEncoder;

impl KeywordEncoder for BigramEncoder {
    fn dim(&self) -> usize {
        ALPHABET * ALPHABET
    }

    fn encode(&self, keyword: &str) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dim()];
        for w in symbols(keyword)?.windows(2) {
            v[w[0] * ALPHABET + w[1]] = 1.0;
        }
        Ok(v)
    }
}

pub fn encode_unigram(word: &str) -> Result<Vec<f64>> {
    UnigramEncoder::default().encode(word)
}

pub fn encode_bigram(word: &str) -> Result<Vec<f64>> {
    BigramEncoder.encode(word)
}
