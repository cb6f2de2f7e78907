//! Synthetic topic-structured text corpora for desk-scale experiments.
//!
//! Vocabulary words are pronounceable consonant-vowel strings that the
//! stemmer leaves unchanged, so a sampled query stem is also a word of the
//! text. Each document belongs to one topic and draws most of its tokens
//! from that topic's vocabulary with Zipf-like frequencies.
//!
//! The default document length gives about 18 distinct keywords per file,
//! the load `n * l = m * ln 2` at which a 512-slot Bloom vector with 20 hash
//! functions has its lowest false-positive rate.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::corpus::{default_stopwords, stem};
use crate::error::{Error, Result};

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const FILLERS: [&str; 6] = ["the", "and", "of", "in", "is", "with"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeskCorpusSpec {
    pub n_files: usize,
    pub n_topics: usize,
    pub topic_vocab: usize,
    pub shared_vocab: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Probability that a token comes from the document's topic.
    pub topic_share: f64,
    /// Exponent of the Zipf word-frequency law within each vocabulary.
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for DeskCorpusSpec {
    fn default() -> Self {
        Self {
            n_files: 200,
            n_topics: 10,
            topic_vocab: 40,
            shared_vocab: 150,
            min_tokens: 15,
            max_tokens: 40,
            topic_share: 0.75,
            zipf_exponent: 1.0,
            seed: 2024,
        }
    }
}

fn pseudo_word(rng: &mut impl Rng) -> String {
    let syllables = rng.random_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
        w.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
    }
    if rng.random_bool(0.5) {
        w.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
    }
    w
}

/// `n` distinct stemmer-stable words not in `taken`.
fn vocabulary(n: usize, taken: &mut BTreeSet<String>, rng: &mut impl Rng) -> Vec<String> {
    let stop = default_stopwords();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = pseudo_word(rng);
        if stop.contains(&w) || stem(&w) != w || !taken.insert(w.clone()) {
            continue;
        }
        out.push(w);
    }
    out
}

/// Document texts, in file order, with each document's topic.
pub fn desk_corpus_texts(spec: &DeskCorpusSpec) -> Result<Vec<(usize, String)>> {
    if spec.n_files == 0
        || spec.n_topics == 0
        || spec.topic_vocab == 0
        || spec.shared_vocab == 0
        || spec.min_tokens == 0
        || spec.min_tokens > spec.max_tokens
        || !(0.0..=1.0).contains(&spec.topic_share)
        || spec.zipf_exponent.is_nan()
        || spec.zipf_exponent < 0.0
    {
        return Err(Error::InvalidParameter(format!(
            "bad desk corpus spec {spec:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut taken = BTreeSet::new();
    let shared = vocabulary(spec.shared_vocab, &mut taken, &mut rng);
    let topics: Vec<Vec<String>> = (0..spec.n_topics)
        .map(|_| vocabulary(spec.topic_vocab, &mut taken, &mut rng))
        .collect();
    let zipf = |n: usize| Zipf::new(n as f64, spec.zipf_exponent).expect("valid Zipf parameters");
    let topic_dist = zipf(spec.topic_vocab);
    let shared_dist = zipf(spec.shared_vocab);
    let mut docs = Vec::with_capacity(spec.n_files);
    for i in 0..spec.n_files {
        let topic = i % spec.n_topics;
        let len = rng.random_range(spec.min_tokens..=spec.max_tokens);
        let mut text = String::new();
        for t in 0..len {
            let word = if rng.random_bool(spec.topic_share) {
                &topics[topic][topic_dist.sample(&mut rng) as usize - 1]
            } else {
                &shared[shared_dist.sample(&mut rng) as usize - 1]
            };
            if rng.random_bool(0.1) {
                text.push_str(FILLERS[rng.random_range(0..FILLERS.len())]);
                text.push(' ');
            }
            text.push_str(word);
            text.push(if t % 12 == 11 { '\n' } else { ' ' });
        }
        text.push('\n');
        docs.push((topic, text));
    }
    Ok(docs)
}

/// Writes `doc_NNNN.txt` files under `dir` (created if missing).
pub fn generate_desk_corpus(dir: &Path, spec: &DeskCorpusSpec) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    desk_corpus_texts(spec)?
        .into_iter()
        .enumerate()
        .map(|(i, (_, text))| {
            let path = dir.join(format!("doc_{i:04}.txt"));
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        let spec = DeskCorpusSpec {
            n_files: 12,
            ..Default::default()
        };
        let a = desk_corpus_texts(&spec).unwrap();
        assert_eq!(a, desk_corpus_texts(&spec).unwrap());
        assert_eq!(a.len(), 12);
        assert_eq!(a[3].0, 3);
    }

    #[test]
    fn vocabulary_is_stem_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let words = vocabulary(50, &mut BTreeSet::new(), &mut rng);
        assert!(words.iter().all(|w| stem(w) == *w));
    }
}
