//! Experiment harness: accuracy metric, typo and anagram workloads, baseline
//! encoders, a synthetic corpus generator and the experiment runner.

mod anagram;
mod baseline;
mod desk;
mod experiment;
mod metrics;
mod mutate;

pub use anagram::{bundled_anagram_pairs, inject_anagrams, AnagramInjection};
pub use baseline::{encode_bigram, encode_unigram, BigramEncoder, UnigramEncoder};
pub use desk::{desk_corpus_texts, generate_desk_corpus, DeskCorpusSpec};
pub use experiment::{
    build_workload, run_experiment, run_experiment_on, ExperimentConfig, ExperimentReport,
    QueryOutcome, Scheme, SearchMode, Timings, Workload, WorkloadQuery,
};
pub use metrics::topk_overlap_accuracy;
pub use mutate::{mutate_misspell, MutationOp};
