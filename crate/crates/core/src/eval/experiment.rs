//! End-to-end accuracy and cost experiments.
//!
//! Ground truth for a query is the plaintext full scan over the unencrypted
//! file Bloom vectors of the same scheme, using the keywords the user meant
//! (before typos, without injected anagrams). The measured side encrypts the
//! index and the issued query and runs the configured search.

use std::path::Path;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::anagram::{bundled_anagram_pairs, inject_anagrams};
use super::baseline::{BigramEncoder, UnigramEncoder};
use super::metrics::topk_overlap_accuracy;
use super::mutate::{mutate_misspell, MutationOp};
use crate::corpus::{build_corpus, compute_tfidf, DocumentRecord, Vocabulary};
use crate::error::{Error, Result};
use crate::hit::{build_hit, encrypt_tree, linear_search, plain_top_k, search, ClusterParams};
use crate::lsh_bloom::{generate_family, KeywordEncoder, KeywordHasher};
use crate::opu::OpuParams;
use crate::secure_knn::{enc_index, enc_query, keygen};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Opu,
    Unigram,
    Bigram,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Opu => "opu",
            Scheme::Unigram => "unigram",
            Scheme::Bigram => "bigram",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Hit,
    Linear,
}

impl SearchMode {
    pub fn label(&self) -> &'static str {
        match self {
            SearchMode::Hit => "hit",
            SearchMode::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub search: SearchMode,
    /// Infection decay base.
    pub s: f64,
    /// Infection reach in blocks.
    pub u: usize,
    /// Letter blocks per keyword; also the occurrence cap of the uni-gram baseline.
    pub l_max: usize,
    /// LSH functions per keyword.
    pub l: usize,
    /// Bloom vector length.
    pub m: usize,
    /// LSH bucket width.
    pub a: f64,
    /// Cluster tightness.
    pub e: f64,
    pub k: usize,
    pub query_len: usize,
    /// Query keywords are drawn from this many top TF-IDF stems of a target file.
    pub query_pool: usize,
    pub queries: usize,
    /// Misspelled keywords per query.
    pub mutation_count: usize,
    /// Anagram pairs injected; every query carries one member of each.
    pub n_a: usize,
    /// Files receiving the other members.
    pub f_a: usize,
    pub min_keywords: usize,
    pub max_keywords: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Opu,
            search: SearchMode::Hit,
            s: 2.0,
            u: 2,
            l_max: 20,
            l: 20,
            m: 8000,
            a: 4.0,
            e: 0.4,
            k: 20,
            query_len: 5,
            query_pool: 10,
            queries: 50,
            mutation_count: 0,
            n_a: 0,
            f_a: 0,
            min_keywords: 1,
            max_keywords: 1_000_000,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn opu_params(&self) -> OpuParams {
        OpuParams {
            l_max: self.l_max,
            s: self.s,
            u: self.u,
        }
    }

    pub fn cluster_params(&self) -> ClusterParams {
        ClusterParams {
            e: self.e,
            seed: self.seed,
            ..ClusterParams::default()
        }
    }

    pub fn encoder(&self) -> Box<dyn KeywordEncoder> {
        match self.scheme {
            Scheme::Opu => Box::new(self.opu_params()),
            Scheme::Unigram => Box::new(UnigramEncoder {
                max_occurrence: self.l_max,
            }),
            Scheme::Bigram => Box::new(BigramEncoder),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.opu_params().validate()?;
        self.cluster_params().validate()?;
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if self.l == 0 {
            return bad("l must be at least 1");
        }
        if self.m < 2 {
            return bad("m must be at least 2");
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return bad("bucket width a must be a positive real");
        }
        if self.k == 0 || self.query_len == 0 || self.queries == 0 || self.query_pool == 0 {
            return bad("k, query_len, query_pool and queries must be at least 1");
        }
        if self.min_keywords > self.max_keywords {
            return bad("min_keywords exceeds max_keywords");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadQuery {
    pub target: u64,
    /// What the user meant.
    pub intended: Vec<String>,
    /// What the user typed: typos applied, anagrams appended.
    pub issued: Vec<String>,
    pub mutations: Vec<MutationOp>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    /// The corpus after anagram injection.
    pub records: Vec<DocumentRecord>,
    pub queries: Vec<WorkloadQuery>,
    /// Files that received anagram insertions.
    pub decoy_files: Vec<u64>,
    /// Requested typos that could not be applied (keyword too short).
    pub skipped_mutations: usize,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Draws the query workload. It depends only on the corpus, the workload
/// fields and the seed, so paired runs of different schemes see the same
/// queries.
pub fn build_workload(config: &ExperimentConfig, records: &[DocumentRecord]) -> Result<Workload> {
    if records.is_empty() {
        return Err(Error::CorpusEmpty("no documents to query".into()));
    }
    let clean = compute_tfidf(records, &Vocabulary::from_records(records))?;
    let injection = inject_anagrams(
        records,
        &bundled_anagram_pairs(),
        config.n_a,
        config.f_a,
        &mut stream(config.seed, 1),
    )?;
    let mut rng = stream(config.seed, 2);
    let mut skipped = 0;
    let mut queries = Vec::with_capacity(config.queries);
    for _ in 0..config.queries {
        let target = records[rng.random_range(0..records.len())].doc_id;
        let pool = clean.top_stems(target, config.query_pool);
        let take = config.query_len.min(pool.len());
        let intended: Vec<String> = sample(&mut rng, pool.len(), take)
            .into_iter()
            .map(|i| pool[i].clone())
            .collect();
        let mut issued = intended.clone();
        let mut mutations = Vec::new();
        let n_mut = config.mutation_count.min(issued.len());
        for i in sample(&mut rng, issued.len(), n_mut).into_vec() {
            let op = MutationOp::ALL[rng.random_range(0..MutationOp::ALL.len())];
            match mutate_misspell(&issued[i], op, &mut rng) {
                Some(m) => {
                    issued[i] = m;
                    mutations.push(op);
                }
                None => skipped += 1,
            }
        }
        issued.extend(injection.query_words.iter().cloned());
        queries.push(WorkloadQuery {
            target,
            intended,
            issued,
            mutations,
        });
    }
    Ok(Workload {
        records: injection.records,
        queries,
        decoy_files: injection.decoy_files,
        skipped_mutations: skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub query: usize,
    pub target: u64,
    pub accuracy: f64,
    pub score_evaluations: usize,
    pub latency_us: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// Corpus ingestion, workload and TF-IDF.
    pub dictionary_build_ms: f64,
    /// Keyword hashing and file Bloom vectors.
    pub filter_build_ms: f64,
    /// Key generation, clustering and encryption.
    pub index_build_ms: f64,
    /// Median over queries of trapdoor generation plus search; the first
    /// query is run once beforehand as warmup.
    pub median_query_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scheme: Scheme,
    pub search: SearchMode,
    /// Mean of the per-query accuracies.
    pub accuracy: f64,
    pub mean_score_evaluations: f64,
    pub n_files: usize,
    pub vocabulary_size: usize,
    pub tree_depth: Option<usize>,
    pub tree_nodes: Option<usize>,
    pub skipped_mutations: usize,
    pub timings: Timings,
    pub per_query: Vec<QueryOutcome>,
    pub config: ExperimentConfig,
}

impl ExperimentReport {
    /// A copy with every wall-clock field zeroed, for determinism checks.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.timings = Timings::default();
        r.per_query.iter_mut().for_each(|q| q.latency_us = 0.0);
        r
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Consistency(format!("report serialization: {e}")))
    }

    pub fn to_table(&self) -> String {
        let rows: Vec<(&str, String)> = vec![
            ("scheme", self.scheme.label().to_string()),
            ("search", self.search.label().to_string()),
            ("files", self.n_files.to_string()),
            ("vocabulary", self.vocabulary_size.to_string()),
            ("queries", self.per_query.len().to_string()),
            ("k", self.config.k.to_string()),
            ("accuracy", format!("{:.4}", self.accuracy)),
            (
                "mean score evaluations",
                format!("{:.1}", self.mean_score_evaluations),
            ),
            (
                "tree depth",
                self.tree_depth.map_or("-".into(), |d| d.to_string()),
            ),
            ("skipped mutations", self.skipped_mutations.to_string()),
            (
                "dictionary build ms",
                format!("{:.1}", self.timings.dictionary_build_ms),
            ),
            (
                "filter build ms",
                format!("{:.1}", self.timings.filter_build_ms),
            ),
            (
                "index build ms",
                format!("{:.1}", self.timings.index_build_ms),
            ),
            (
                "median query us",
                format!("{:.1}", self.timings.median_query_us),
            ),
        ];
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<width$}  {v}\n"))
            .collect()
    }

    /// One row per query.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for q in &self.per_query {
            w.serialize(q)
                .map_err(|e| Error::Consistency(format!("csv: {e}")))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Consistency(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Ingests `corpus_dir` and runs the experiment.
pub fn run_experiment(config: &ExperimentConfig, corpus_dir: &Path) -> Result<ExperimentReport> {
    config.validate()?;
    let t = Instant::now();
    let (records, _) = build_corpus(corpus_dir, config.min_keywords, config.max_keywords)
        .map_err(|e| e.context(format!("ingesting {}", corpus_dir.display())))?;
    let ingest_ms = ms(t);
    let mut report = run_experiment_on(config, &records)?;
    report.timings.dictionary_build_ms += ingest_ms;
    Ok(report)
}

enum Index {
    Tree(crate::hit::HitTree),
    Flat(Vec<(u64, crate::secure_knn::EncryptedIndex)>),
}

/// Runs the experiment on already-ingested records.
pub fn run_experiment_on(
    config: &ExperimentConfig,
    records: &[DocumentRecord],
) -> Result<ExperimentReport> {
    config.validate()?;
    if config.k > records.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {} exceeds the {} files of the corpus",
            config.k,
            records.len()
        )));
    }
    let t = Instant::now();
    let workload = build_workload(config, records).map_err(|e| e.context("building workload"))?;
    let vocab = Vocabulary::from_records(&workload.records);
    let tfidf = compute_tfidf(&workload.records, &vocab)?;
    let dictionary_build_ms = ms(t);

    let t = Instant::now();
    let key = keygen(config.m, config.seed).map_err(|e| e.context("key generation"))?;
    let keygen_ms = ms(t);
    let encoder = config.encoder();
    let family = generate_family(key.lsh_seed, config.l, config.a, encoder.dim(), config.m)?;
    let mut hasher = KeywordHasher::new(encoder.as_ref(), &family);
    let t = Instant::now();
    let files = workload
        .records
        .iter()
        .map(|rec| {
            let doc = tfidf.document(rec.doc_id).ok_or_else(|| {
                Error::Consistency(format!("document {} has no TF-IDF row", rec.doc_id))
            })?;
            let bf = hasher.file_bf(doc.iter().map(|(s, w)| (s.as_str(), w.tfidf)))?;
            Ok((rec.doc_id, bf.weights))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.context("building file vectors"))?;
    let filter_build_ms = ms(t);

    let t = Instant::now();
    let mut rng = stream(config.seed, 3);
    let index = match config.search {
        SearchMode::Hit => {
            let plain = build_hit(&files, &config.cluster_params())?;
            Index::Tree(encrypt_tree(&plain, &key, &mut rng)?)
        }
        SearchMode::Linear => Index::Flat(
            files
                .iter()
                .map(|(doc, v)| Ok((*doc, enc_index(*doc, v, &key, &mut rng)?)))
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    let index_build_ms = keygen_ms + ms(t);

    let mut run_query = |issued: &[String], rng: &mut ChaCha8Rng| -> Result<(Vec<u64>, usize)> {
        let q = hasher.query_bf(issued)?;
        let trap = enc_query(&q.weights, &key, rng)?;
        let res = match &index {
            Index::Tree(tree) => search(tree, &trap, config.k)?,
            Index::Flat(flat) => linear_search(flat, &trap, config.k)?,
        };
        Ok((res.doc_ids(), res.score_evaluations))
    };
    if let Some(first) = workload.queries.first() {
        run_query(&first.issued, &mut rng)?;
    }
    let mut per_query = Vec::with_capacity(workload.queries.len());
    for (i, q) in workload.queries.iter().enumerate() {
        let t = Instant::now();
        let (found, evals) =
            run_query(&q.issued, &mut rng).map_err(|e| e.context(format!("query {i}")))?;
        let latency_us = t.elapsed().as_secs_f64() * 1e6;
        let truth_q = KeywordHasher::new(encoder.as_ref(), &family).query_bf(&q.intended)?;
        let truth: Vec<u64> = plain_top_k(&files, &truth_q.weights, config.k)
            .into_iter()
            .map(|e| e.0)
            .collect();
        per_query.push(QueryOutcome {
            query: i,
            target: q.target,
            accuracy: topk_overlap_accuracy(&truth, &found, config.k)?,
            score_evaluations: evals,
            latency_us,
        });
    }
    let n = per_query.len() as f64;
    let (tree_depth, tree_nodes) = match &index {
        Index::Tree(t) => (Some(t.depth), Some(t.nodes.len())),
        Index::Flat(_) => (None, None),
    };
    Ok(ExperimentReport {
        scheme: config.scheme,
        search: config.search,
        accuracy: per_query.iter().map(|q| q.accuracy).sum::<f64>() / n,
        mean_score_evaluations: per_query
            .iter()
            .map(|q| q.score_evaluations as f64)
            .sum::<f64>()
            / n,
        n_files: workload.records.len(),
        vocabulary_size: vocab.len(),
        tree_depth,
        tree_nodes,
        skipped_mutations: workload.skipped_mutations,
        timings: Timings {
            dictionary_build_ms,
            filter_build_ms,
            index_build_ms,
            median_query_us: median(per_query.iter().map(|q| q.latency_us).collect()),
        },
        per_query,
        config: config.clone(),
    })
}
