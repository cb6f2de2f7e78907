//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Pass a criterion number to run only that
//! one.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use opus_core::eval::{
    bundled_anagram_pairs, encode_bigram, encode_unigram, generate_desk_corpus, run_experiment,
    DeskCorpusSpec, ExperimentConfig, Scheme, SearchMode,
};
use opus_core::hit::{build_hit, dynamic_kmeans, encrypt_tree, search, ClusterParams};
use opus_core::lsh_bloom::{
    expected_fp_rate, fp_rate_at_load, generate_family, minimum_fp_rate, KeywordHasher,
    OPTIMAL_LOAD,
};
use opus_core::opu::{decompose, encode, infect, opu_distance, opu_vector, OpuParams};
use opus_core::secure_knn::{enc_index, enc_query, keygen, relevance};
use opus_core::verify::{extract_proof, sign_tree, verify_proof, Ed25519Signer, VerificationProof};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn opu_dist(a: &str, b: &str) -> f64 {
    let p = OpuParams::default();
    opu_distance(&opu_vector(a, &p).unwrap(), &opu_vector(b, &p).unwrap()).unwrap()
}

fn uni_dist(a: &str, b: &str) -> f64 {
    euclid(&encode_unigram(a).unwrap(), &encode_unigram(b).unwrap())
}

fn bi_dist(a: &str, b: &str) -> f64 {
    euclid(&encode_bigram(a).unwrap(), &encode_bigram(b).unwrap())
}

fn add_vector_exact() -> Outcome {
    let p = OpuParams {
        l_max: 20,
        s: 2.0,
        u: 2,
    };
    let v = infect(&encode(&decompose("add", &p).unwrap(), &p), &p);
    let mut want = vec![0.0f64; p.dim()];
    for (slot, w) in [
        (1, 1.0),
        (4, 0.75),
        (27, 0.5),
        (30, 1.5),
        (53, 0.25),
        (56, 1.5),
        (82, 0.75),
        (108, 0.25),
    ] {
        want[slot - 1] = w;
    }
    let mismatches = v
        .weights
        .iter()
        .zip(&want)
        .filter(|(a, b)| a.to_bits() != b.to_bits())
        .count();
    check(
        v.weights.len() == want.len() && mismatches == 0,
        format!("{mismatches} slots differ out of {}", want.len()),
    )
}

fn misspelling_distances() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut expect = |label: &str, got: f64, want: f64| {
        if (got - want).abs() <= 1e-9 {
            notes.push(format!("{label} {got:.6}"));
        } else {
            ok = false;
            notes.push(format!("{label} {got:.6} (want {want:.6})"));
        }
    };
    expect("opu add/aad", opu_dist("add", "aad"), 3.125f64.sqrt());
    expect("opu bear/beer", opu_dist("bear", "beer"), 3.25f64.sqrt());
    expect("uni add/aad", uni_dist("add", "aad"), 2.0);
    expect("uni bear/beer", uni_dist("bear", "beer"), 2.0);
    expect("bi add/aad", bi_dist("add", "aad"), 2.0);
    expect("bi bear/beer", bi_dist("bear", "beer"), 2.0);
    expect("opu used/uesd", opu_dist("used", "uesd"), 1.375f64.sqrt());
    expect("opu pear/paer", opu_dist("pear", "paer"), 1.375f64.sqrt());
    expect("opu pen/pn", opu_dist("pen", "pn"), 1.5);
    expect("opu pen/pean", opu_dist("pen", "pean"), 2.375f64.sqrt());
    check(ok, notes.join(", "))
}

fn secure_knn_invariance() -> Outcome {
    let m = 64;
    let key = keygen(m, 42).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let idx: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        let q: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        let plain: f64 = idx.iter().zip(&q).map(|(a, b)| a * b).sum();
        let e = enc_index(i, &idx, &key, &mut rng).unwrap();
        let t = enc_query(&q, &key, &mut rng).unwrap();
        let rel = ((relevance(&e, &t).unwrap() - plain) / plain).abs();
        worst = worst.max(rel);
    }
    let q: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
    let t1 = enc_query(&q, &key, &mut rng).unwrap().to_bytes();
    let t2 = enc_query(&q, &key, &mut rng).unwrap().to_bytes();
    check(
        worst <= 1e-6 && t1 != t2,
        format!(
            "max relative error {worst:.3e}, repeated trapdoors differ: {}",
            t1 != t2
        ),
    )
}

fn anagram_separation() -> Outcome {
    let mut pairs = vec![("listen".to_string(), "silent".to_string())];
    pairs.extend(bundled_anagram_pairs());
    let failures: Vec<String> = pairs
        .iter()
        .filter(|(a, b)| !(opu_dist(a, b) > 0.0 && uni_dist(a, b) == 0.0))
        .map(|(a, b)| format!("{a}/{b}"))
        .collect();
    check(
        failures.is_empty() && pairs.len() == 101,
        format!(
            "listen/silent opu {:.4} uni {:.1}; {} pairs checked, failures {:?}",
            opu_dist("listen", "silent"),
            uni_dist("listen", "silent"),
            pairs.len(),
            failures
        ),
    )
}

fn random_word(rng: &mut impl Rng) -> String {
    let len = rng.random_range(4..=10);
    (0..len)
        .map(|_| (b'a' + rng.random_range(0..26u8)) as char)
        .collect()
}

fn bloom_false_positives() -> Outcome {
    let (m, l, n, probes) = (1024, 5, 50, 10_000);
    let p = OpuParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let members: Vec<String> = (0..n).map(|_| random_word(&mut rng)).collect();
    let rate_at = |a: f64, rng: &mut ChaCha8Rng| {
        let family = generate_family(9, l, a, p.dim(), m).unwrap();
        let mut h = KeywordHasher::new(&p, &family);
        let mut filter = vec![false; m];
        for w in &members {
            for &b in h.bits(w).unwrap() {
                filter[b] = true;
            }
        }
        let mut hits = 0;
        let mut total = 0;
        while total < probes {
            let w = random_word(rng);
            if members.contains(&w) {
                continue;
            }
            total += 1;
            if h.bits(&w).unwrap().iter().all(|&b| filter[b]) {
                hits += 1;
            }
        }
        hits as f64 / probes as f64
    };
    let expected = expected_fp_rate(l, n, m);
    let sigma = (expected * (1.0 - expected) / probes as f64).sqrt();
    let fine = rate_at(0.01, &mut rng);
    let coarse = rate_at(4.0, &mut rng);
    let best_l =
        (1..=40).min_by(|&x, &y| expected_fp_rate(x, n, m).total_cmp(&expected_fp_rate(y, n, m)));
    let l_star = m as f64 * OPTIMAL_LOAD / n as f64;
    let minimum_ok = fp_rate_at_load(l, OPTIMAL_LOAD) == minimum_fp_rate(l)
        && minimum_fp_rate(l) == 0.5f64.powi(l as i32)
        && best_l.is_some_and(|b| b == l_star.floor() as usize || b == l_star.ceil() as usize);
    check(
        (fine - expected).abs() <= 3.0 * sigma && minimum_ok,
        format!(
            "empirical {fine:.5} vs {expected:.5} +/- {:.5} (3 sigma) at a=0.01; \
             {coarse:.4} at a=4 (locality-sensitive, informational); minimum {}",
            3.0 * sigma,
            minimum_fp_rate(l)
        ),
    )
}

fn clustering_trace() -> Outcome {
    let pairs = [[0.0, 0.0], [0.1, 0.0], [10.0, 0.0], [10.1, 0.0]];
    let refs: Vec<&[f64]> = pairs.iter().map(|p| &p[..]).collect();
    let params = ClusterParams {
        e: 0.4,
        ..ClusterParams::default()
    };
    let c = dynamic_kmeans(&refs, &params).map_err(|e| e.to_string())?;
    let mut centers = c.centers.clone();
    centers.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let near = |a: &[f64], b: [f64; 2]| euclid(a, &b) < 1e-12;
    let pairs_ok = c.labels[0] == c.labels[1]
        && c.labels[2] == c.labels[3]
        && c.labels[0] != c.labels[2]
        && near(&centers[0], [0.05, 0.0])
        && near(&centers[1], [10.05, 0.0]);
    let same = [[2.0, -1.0, 0.5]; 7];
    let refs: Vec<&[f64]> = same.iter().map(|p| &p[..]).collect();
    let one = dynamic_kmeans(&refs, &params).map_err(|e| e.to_string())?;
    check(
        c.n_clusters() == 2 && c.passes == 2 && pairs_ok && one.n_clusters() == 1,
        format!(
            "pairs: {} clusters after {} passes; identical points: {} cluster",
            c.n_clusters(),
            c.passes,
            one.n_clusters()
        ),
    )
}

fn desk_corpus(dir: &Path, n_files: usize) {
    let spec = DeskCorpusSpec {
        n_files,
        ..DeskCorpusSpec::default()
    };
    generate_desk_corpus(dir, &spec).unwrap();
}

fn base_config() -> ExperimentConfig {
    ExperimentConfig {
        m: 512,
        a: 4.0,
        l: 20,
        k: 20,
        ..ExperimentConfig::default()
    }
}

fn encrypted_matches_plaintext() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    desk_corpus(dir.path(), 200);
    let cfg = ExperimentConfig {
        search: SearchMode::Linear,
        queries: 50,
        ..base_config()
    };
    let r = run_experiment(&cfg, dir.path()).map_err(|e| e.to_string())?;
    check(
        r.accuracy == 1.0 && r.n_files == 200,
        format!(
            "accuracy {} over {} queries on {} files",
            r.accuracy,
            r.per_query.len(),
            r.n_files
        ),
    )
}

fn tree_efficiency() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    desk_corpus(dir.path(), 500);
    let cfg = ExperimentConfig {
        search: SearchMode::Hit,
        queries: 50,
        ..base_config()
    };
    let tree = run_experiment(&cfg, dir.path()).map_err(|e| e.to_string())?;
    let linear = run_experiment(
        &ExperimentConfig {
            search: SearchMode::Linear,
            ..cfg.clone()
        },
        dir.path(),
    )
    .map_err(|e| e.to_string())?;
    // linear mode reproduces the plaintext ranking, so accuracy against
    // plaintext is overlap with linear mode
    let agreement = tree.accuracy;
    let bound = 0.5 * tree.n_files as f64;
    check(
        linear.accuracy == 1.0 && tree.mean_score_evaluations < bound && agreement >= 0.6,
        format!(
            "mean score evaluations {:.1} (< {bound}), overlap with linear {agreement:.4}, depth {:?}",
            tree.mean_score_evaluations, tree.tree_depth
        ),
    )
}

fn fuzzy_direction() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    desk_corpus(dir.path(), 200);
    let run = |scheme: Scheme, cfg: &ExperimentConfig| {
        run_experiment(
            &ExperimentConfig {
                scheme,
                ..cfg.clone()
            },
            dir.path(),
        )
        .map(|r| r.accuracy)
    };
    let typo = ExperimentConfig {
        search: SearchMode::Linear,
        queries: 100,
        query_len: 5,
        mutation_count: 2,
        ..base_config()
    };
    let anagram = ExperimentConfig {
        search: SearchMode::Linear,
        queries: 100,
        n_a: 1,
        f_a: 20,
        ..base_config()
    };
    let (opu_t, uni_t) = (run(Scheme::Opu, &typo), run(Scheme::Unigram, &typo));
    let (opu_a, uni_a) = (run(Scheme::Opu, &anagram), run(Scheme::Unigram, &anagram));
    let (opu_t, uni_t, opu_a, uni_a) = (
        opu_t.map_err(|e| e.to_string())?,
        uni_t.map_err(|e| e.to_string())?,
        opu_a.map_err(|e| e.to_string())?,
        uni_a.map_err(|e| e.to_string())?,
    );
    check(
        opu_t >= uni_t && opu_a > uni_a,
        format!("typos: opu {opu_t:.4} vs uni-gram {uni_t:.4}; anagrams: opu {opu_a:.4} vs uni-gram {uni_a:.4}"),
    )
}

fn proof_corruption() -> Outcome {
    let m = 4;
    let files: Vec<(u64, Vec<f64>)> = vec![
        (1, vec![1.0, 0.0, 0.0, 0.2]),
        (2, vec![0.9, 0.1, 0.0, 0.1]),
        (3, vec![0.0, 1.0, 0.3, 0.0]),
        (4, vec![0.0, 0.8, 0.5, 0.0]),
    ];
    let key = keygen(m, 77).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    let plain = build_hit(&files, &ClusterParams::default()).map_err(|e| e.to_string())?;
    let tree = encrypt_tree(&plain, &key, &mut rng).map_err(|e| e.to_string())?;
    let signer = Ed25519Signer::from_secret_key(&key);
    let verifier = signer.verifier();
    let sigs = sign_tree(&tree, &signer).map_err(|e| e.to_string())?;
    let trap = enc_query(&[1.0, 0.0, 0.0, 0.0], &key, &mut rng).map_err(|e| e.to_string())?;
    let result = search(&tree, &trap, 2).map_err(|e| e.to_string())?;
    let bytes = extract_proof(&tree, &sigs, &result)
        .map_err(|e| e.to_string())?
        .to_bytes();
    let accepts = |b: &[u8]| {
        VerificationProof::from_bytes(b).is_ok_and(|p| verify_proof(&p, &verifier).is_accept())
    };
    let clean = accepts(&bytes);
    let mut survivors = Vec::new();
    let mut trials = 0;
    for pos in 0..bytes.len() {
        for mask in [0x01u8, 0x80, 0xff] {
            let mut bad = bytes.clone();
            bad[pos] ^= mask;
            trials += 1;
            if accepts(&bad) {
                survivors.push((pos, mask));
            }
        }
    }
    check(
        clean && survivors.is_empty() && bytes.len() <= 2048,
        format!(
            "proof {} bytes, untampered accepted: {clean}, {trials} corruptions, accepted after corruption: {survivors:?}",
            bytes.len()
        ),
    )
}

struct Criterion {
    title: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            title: "infected vector of \"add\" is exact",
            budget: Duration::from_secs(1),
            run: add_vector_exact,
        },
        Criterion {
            title: "misspelling distances",
            budget: Duration::from_secs(1),
            run: misspelling_distances,
        },
        Criterion {
            title: "secure kNN preserves inner products",
            budget: Duration::from_secs(10),
            run: secure_knn_invariance,
        },
        Criterion {
            title: "anagrams separated by OPU only",
            budget: Duration::from_secs(5),
            run: anagram_separation,
        },
        Criterion {
            title: "Bloom false-positive rate",
            budget: Duration::from_secs(30),
            run: bloom_false_positives,
        },
        Criterion {
            title: "dynamic k-means trace",
            budget: Duration::from_secs(1),
            run: clustering_trace,
        },
        Criterion {
            title: "encrypted linear ranking equals plaintext",
            budget: Duration::from_secs(120),
            run: encrypted_matches_plaintext,
        },
        Criterion {
            title: "tree search is sublinear and accurate",
            budget: Duration::from_secs(300),
            run: tree_efficiency,
        },
        Criterion {
            title: "OPU beats uni-gram on typos and anagrams",
            budget: Duration::from_secs(600),
            run: fuzzy_direction,
        },
        Criterion {
            title: "corrupted proofs are rejected",
            budget: Duration::from_secs(60),
            run: proof_corruption,
        },
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_message(&p))));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > c.budget => {
                Err(format!("{d}; took {elapsed:.2?}, budget {:?}", c.budget))
            }
            o => o,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!(
            "criterion {n:>2} {tag}  {} ({elapsed:.2?}): {detail}",
            c.title
        );
        failed += outcome.is_err() as usize;
    }
    println!("acceptance: {failed} failing");
    if failed > 0 {
        std::process::exit(1);
    }
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown panic".into())
}
