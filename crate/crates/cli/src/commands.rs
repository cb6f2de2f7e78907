use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::Args;
use opus_core::corpus::{
    build_corpus, compute_tfidf, default_stopwords, read_manifest, tokenize_and_filter,
    write_manifest, DocumentRecord,
};
use opus_core::eval::{generate_desk_corpus, run_experiment, DeskCorpusSpec, ExperimentConfig};
use opus_core::hit::{
    build_hit, encrypt_tree, linear_search, search, HitTree, NodeId, SearchResult,
};
use opus_core::lsh_bloom::{generate_family, KeywordHasher};
use opus_core::secure_knn::{enc_query, keygen, SecretKey, Trapdoor};
use opus_core::verify::{
    extract_proof, sign_tree, signatures_from_bytes, signatures_to_bytes, verify_proof,
    Ed25519Signer, Ed25519Verifier, RejectClass, Verdict, VerificationProof,
};

use crate::params::PipelineParams;
use crate::{
    coded, malformed, read_bytes, read_string, write_bytes, Cli, Command, GlobalArgs,
    EXIT_DIMENSION, EXIT_EMPTY, EXIT_REJECTED, EXIT_UNWRITABLE,
};

#[derive(Args, Debug)]
pub struct KeygenArgs {
    /// Bloom vector length m.
    #[arg(long)]
    pub dim: usize,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct IndexArgs {
    /// Directory of plain-text files.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub key: PathBuf,
    /// Encrypted index. Signatures, public key, parameters and corpus
    /// manifest are written next to it unless given explicitly.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Defaults to `<out>.sigs`.
    #[arg(long)]
    pub signatures: Option<PathBuf>,
    /// Defaults to `<out>.pub`.
    #[arg(long)]
    pub pubkey: Option<PathBuf>,
    #[arg(long)]
    pub l_max: Option<usize>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub u: Option<usize>,
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub e: Option<f64>,
}

#[derive(Args, Debug)]
pub struct QueryArgs {
    /// Whitespace-separated keywords.
    #[arg(long)]
    pub keywords: String,
    #[arg(long)]
    pub key: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub trapdoor: PathBuf,
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    /// Score every file instead of descending the tree.
    #[arg(long)]
    pub linear: bool,
    /// Defaults to `<index>.sigs`.
    #[arg(long)]
    pub signatures: Option<PathBuf>,
    /// Defaults to `<trapdoor>.proof`.
    #[arg(long)]
    pub proof: Option<PathBuf>,
    /// Maps doc ids to file paths in the listing; defaults to `<index>.corpus`
    /// when that file exists.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub proof: PathBuf,
    #[arg(long)]
    pub pubkey: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// TOML experiment settings; unspecified fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON report.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Per-query CSV; defaults to `<out>.csv`.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenCorpusArgs {
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub files: usize,
    #[arg(long, default_value_t = 10)]
    pub topics: usize,
}

pub fn run(cli: &Cli) -> anyhow::Result<u8> {
    let g = &cli.global;
    match &cli.command {
        Command::Keygen(a) => keygen_cmd(g, a),
        Command::Index(a) => index_cmd(g, a),
        Command::Query(a) => query_cmd(g, a),
        Command::Search(a) => search_cmd(g, a),
        Command::Verify(a) => verify_cmd(a),
        Command::Eval(a) => eval_cmd(g, a),
        Command::GenCorpus(a) => gen_corpus_cmd(g, a),
    }
    .map(|()| 0)
    .or_else(|e| match e.downcast_ref::<Rejected>() {
        Some(r) => {
            println!("reject: {r}");
            Ok(EXIT_REJECTED)
        }
        None => Err(e),
    })
}

#[derive(Debug)]
struct Rejected(String);

impl std::fmt::Display for Rejected {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Rejected {}

fn resolve_seed(g: &GlobalArgs) -> u64 {
    g.seed.unwrap_or_else(|| {
        let seed = rand::random();
        eprintln!("seed: {seed}");
        seed
    })
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn note(g: &GlobalArgs, start: Instant, what: &str) {
    if g.verbose {
        eprintln!("{what}: {:.1} ms", start.elapsed().as_secs_f64() * 1e3);
    }
}

fn load_key(path: &Path) -> anyhow::Result<SecretKey> {
    SecretKey::from_bytes(&read_bytes(path)?)
        .with_context(|| format!("loading key {}", path.display()))
        .map_err(malformed)
}

fn keygen_cmd(g: &GlobalArgs, a: &KeygenArgs) -> anyhow::Result<()> {
    let seed = resolve_seed(g);
    if a.dim >= 4096 {
        eprintln!(
            "note: m = {} needs two {0}x{0} matrices and their inverses (~{} MB)",
            a.dim,
            a.dim * a.dim * 32 / 1_000_000
        );
    }
    let t = Instant::now();
    let key = keygen(a.dim, seed)?;
    note(g, t, "key generation");
    write_bytes(&a.out, key.to_bytes())?;
    println!("wrote {} (m = {})", a.out.display(), key.m);
    Ok(())
}

fn index_cmd(g: &GlobalArgs, a: &IndexArgs) -> anyhow::Result<()> {
    let mut p = PipelineParams::load(g.params_file.as_deref())?;
    p.l_max = a.l_max.unwrap_or(p.l_max);
    p.s = a.s.unwrap_or(p.s);
    p.u = a.u.unwrap_or(p.u);
    p.l = a.l.unwrap_or(p.l);
    p.a = a.a.unwrap_or(p.a);
    p.e = a.e.unwrap_or(p.e);
    let opu = p.opu();
    opu.validate()?;
    let seed = resolve_seed(g);
    let key = load_key(&a.key)?;

    let t = Instant::now();
    let (records, vocab) = build_corpus(&a.corpus, p.min_keywords, p.max_keywords)
        .with_context(|| format!("ingesting {}", a.corpus.display()))?;
    let tfidf = compute_tfidf(&records, &vocab)?;
    note(g, t, "dictionary");

    let t = Instant::now();
    let family = generate_family(key.lsh_seed, p.l, p.a, opu.dim(), key.m)?;
    let mut hasher = KeywordHasher::new(&opu, &family);
    let files = records
        .iter()
        .map(|r| {
            let doc = tfidf
                .document(r.doc_id)
                .expect("every record has a TF-IDF row");
            Ok((
                r.doc_id,
                hasher
                    .file_bf(doc.iter().map(|(s, w)| (s.as_str(), w.tfidf)))?
                    .weights,
            ))
        })
        .collect::<opus_core::Result<Vec<_>>>()?;
    note(g, t, "Bloom vectors");

    let t = Instant::now();
    let plain = build_hit(&files, &p.cluster(seed))?;
    let tree = encrypt_tree(&plain, &key, &mut rand::rng())?;
    note(g, t, "tree build and encryption");

    let t = Instant::now();
    let signer = Ed25519Signer::from_secret_key(&key);
    let sigs = sign_tree(&tree, &signer)?;
    note(g, t, "signing");

    let sig_path = a
        .signatures
        .clone()
        .unwrap_or_else(|| sidecar(&a.out, "sigs"));
    let pub_path = a.pubkey.clone().unwrap_or_else(|| sidecar(&a.out, "pub"));
    let params_path = sidecar(&a.out, "params.toml");
    let manifest_path = sidecar(&a.out, "corpus");
    write_bytes(&a.out, tree.to_bytes()?)?;
    write_bytes(&sig_path, signatures_to_bytes(&sigs))?;
    write_bytes(&pub_path, signer.verifier().to_bytes())?;
    write_bytes(&params_path, p.to_toml())?;
    write_bytes(&manifest_path, write_manifest(&records))?;
    println!(
        "indexed {} files: depth {}, {} nodes, m = {}",
        tree.leaf_count,
        tree.depth,
        tree.nodes.len(),
        key.m
    );
    for (what, path) in [
        ("index", &a.out),
        ("signatures", &sig_path),
        ("public key", &pub_path),
        ("parameters", &params_path),
        ("manifest", &manifest_path),
    ] {
        println!("  {what:<11} {}", path.display());
    }
    Ok(())
}

/// Tokenizes, stems and deduplicates the query text like document text.
fn query_stems(text: &str) -> Vec<String> {
    let stop = default_stopwords();
    let rec = DocumentRecord::from_tokens(0, "", tokenize_and_filter(text, &stop), &stop);
    let mut seen = BTreeSet::new();
    rec.stemmed_keywords
        .into_iter()
        .filter(|s| seen.insert(s.clone()))
        .collect()
}

fn query_cmd(g: &GlobalArgs, a: &QueryArgs) -> anyhow::Result<()> {
    let p = PipelineParams::load(g.params_file.as_deref())?;
    let stems = query_stems(&a.keywords);
    if stems.is_empty() {
        return Err(coded(
            EXIT_EMPTY,
            anyhow!(
                "query {:?} has no keywords after stopword removal",
                a.keywords
            ),
        ));
    }
    let key = load_key(&a.key)?;
    let opu = p.opu();
    let family = generate_family(key.lsh_seed, p.l, p.a, opu.dim(), key.m)?;
    let q = KeywordHasher::new(&opu, &family).query_bf(&stems)?;
    let trap = enc_query(&q.weights, &key, &mut rand::rng())?;
    write_bytes(&a.out, trap.to_bytes())?;
    println!("wrote {} (keywords: {})", a.out.display(), stems.join(" "));
    Ok(())
}

/// Internal ancestors of the result leaves, each after its parent, so a
/// linear-scan result can be proven like a tree-search result.
fn covering_path(tree: &HitTree, result: &SearchResult) -> Vec<NodeId> {
    let leaf_of: HashMap<u64, NodeId> = tree
        .nodes
        .iter()
        .filter_map(|n| Some((n.doc_id?, n.node_id)))
        .collect();
    let mut seen = BTreeSet::new();
    let mut path = Vec::new();
    for (doc, _) in &result.entries {
        let mut chain = Vec::new();
        let mut cur = tree.node(leaf_of[doc]).parent;
        while let Some(id) = cur {
            chain.push(id);
            cur = tree.node(id).parent;
        }
        for id in chain.into_iter().rev() {
            if seen.insert(id) {
                path.push(id);
            }
        }
    }
    path
}

fn search_cmd(g: &GlobalArgs, a: &SearchArgs) -> anyhow::Result<()> {
    let tree = HitTree::from_bytes(&read_bytes(&a.index)?)
        .with_context(|| format!("loading index {}", a.index.display()))
        .map_err(malformed)?;
    let trap = Trapdoor::from_bytes(&read_bytes(&a.trapdoor)?)
        .with_context(|| format!("loading trapdoor {}", a.trapdoor.display()))
        .map_err(malformed)?;
    let dim = tree.dim().unwrap_or(0);
    if trap.dim() != dim {
        return Err(coded(
            EXIT_DIMENSION,
            anyhow!(
                "trapdoor has dimension {} but the index has {dim}",
                trap.dim()
            ),
        ));
    }
    let sig_path = a
        .signatures
        .clone()
        .unwrap_or_else(|| sidecar(&a.index, "sigs"));
    let sigs = signatures_from_bytes(&read_bytes(&sig_path)?)
        .with_context(|| format!("loading signatures {}", sig_path.display()))
        .map_err(malformed)?;

    let t = Instant::now();
    let mut result = if a.linear {
        linear_search(&tree.leaf_indices(), &trap, a.k)?
    } else {
        search(&tree, &trap, a.k)?
    };
    note(g, t, "search");
    if a.linear {
        result.visited_path = covering_path(&tree, &result);
    }
    let proof = extract_proof(&tree, &sigs, &result)?;
    let proof_path = a
        .proof
        .clone()
        .unwrap_or_else(|| sidecar(&a.trapdoor, "proof"));
    write_bytes(&proof_path, proof.to_bytes())?;

    let manifest_path = a.manifest.clone().or_else(|| {
        let p = sidecar(&a.index, "corpus");
        p.exists().then_some(p)
    });
    let paths: HashMap<u64, PathBuf> = match manifest_path {
        Some(p) => read_manifest(&read_string(&p)?)
            .with_context(|| format!("loading manifest {}", p.display()))
            .map_err(malformed)?
            .into_iter()
            .map(|(id, path, _)| (id, path))
            .collect(),
        None => HashMap::new(),
    };
    println!("rank\tdoc_id\tscore\tfile");
    for (i, (doc, score)) in result.entries.iter().enumerate() {
        let file = paths
            .get(doc)
            .map_or(String::new(), |p| p.display().to_string());
        println!("{}\t{doc}\t{score:.6}\t{file}", i + 1);
    }
    if result.short {
        eprintln!(
            "short result: k = {} exceeds the {} indexed files",
            a.k, tree.leaf_count
        );
    }
    if g.verbose {
        eprintln!(
            "score evaluations: {} of {} files",
            result.score_evaluations, tree.leaf_count
        );
    }
    println!("proof: {}", proof_path.display());
    Ok(())
}

fn verify_cmd(a: &VerifyArgs) -> anyhow::Result<()> {
    let proof = VerificationProof::from_bytes(&read_bytes(&a.proof)?)
        .with_context(|| format!("loading proof {}", a.proof.display()))
        .map_err(malformed)?;
    let verifier = Ed25519Verifier::from_bytes(&read_bytes(&a.pubkey)?)
        .with_context(|| format!("loading public key {}", a.pubkey.display()))
        .map_err(malformed)?;
    match verify_proof(&proof, &verifier) {
        Verdict::Accept => {
            println!(
                "accept: {} results over {} signed nodes",
                proof.result_doc_ids.len(),
                proof.path_nodes.len()
            );
            Ok(())
        }
        Verdict::Reject { node_id, class } => {
            let why = match class {
                RejectClass::BadSignature => "digest or signature does not match",
                RejectClass::BrokenLinkage => "node is not linked to the signed root",
                RejectClass::UnsignedResult => "result is not backed by a signed leaf",
            };
            Err(Rejected(format!("node {node_id}: {why}")).into())
        }
    }
}

fn eval_cmd(g: &GlobalArgs, a: &EvalArgs) -> anyhow::Result<()> {
    let config_path = a.config.as_deref().or(g.params_file.as_deref());
    let (mut config, has_seed) = match config_path {
        Some(path) => {
            let text = read_string(path)?;
            let table: toml::Table = toml::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .map_err(malformed)?;
            let config: ExperimentConfig = table
                .clone()
                .try_into()
                .with_context(|| format!("parsing {}", path.display()))
                .map_err(malformed)?;
            (config, table.contains_key("seed"))
        }
        None => (ExperimentConfig::default(), false),
    };
    if g.seed.is_some() || !has_seed {
        config.seed = resolve_seed(g);
    }
    let report = run_experiment(&config, &a.corpus)
        .with_context(|| format!("running experiment on {}", a.corpus.display()))?;
    let csv_path = a.csv.clone().unwrap_or_else(|| sidecar(&a.out, "csv"));
    write_bytes(&a.out, report.to_json()?)?;
    write_bytes(&csv_path, report.to_csv()?)?;
    print!("{}", report.to_table());
    println!(
        "report: {}\nper-query csv: {}",
        a.out.display(),
        csv_path.display()
    );
    Ok(())
}

fn gen_corpus_cmd(g: &GlobalArgs, a: &GenCorpusArgs) -> anyhow::Result<()> {
    let spec = DeskCorpusSpec {
        n_files: a.files,
        n_topics: a.topics,
        seed: resolve_seed(g),
        ..DeskCorpusSpec::default()
    };
    let files = generate_desk_corpus(&a.out, &spec).map_err(|e| match e.root_cause() {
        opus_core::Error::Io { .. } => coded(EXIT_UNWRITABLE, e.into()),
        _ => e.into(),
    })?;
    println!("wrote {} files to {}", files.len(), a.out.display());
    Ok(())
}
