use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/desk50")
}

fn opus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opus"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(args: &[&str]) -> String {
    let out = opus(args);
    assert_eq!(
        code(&out),
        0,
        "{args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small corpus of ten files, each about one subject.
fn tiny_corpus(dir: &Path) -> PathBuf {
    let root = dir.join("corpus");
    std::fs::create_dir(&root).unwrap();
    let subjects = [
        "apple orchard harvest cider apple pruning",
        "violin sonata concerto orchestra violin bow",
        "glacier moraine crevasse ice glacier summit",
        "python compiler interpreter bytecode python runtime",
        "sourdough yeast flour oven sourdough crust",
        "comet asteroid orbit telescope comet nebula",
        "falcon hawk eagle talon falcon feather",
        "tariff export import customs tariff trade",
        "cactus desert succulent drought cactus spine",
        "sonnet stanza rhyme meter sonnet poet",
    ];
    for (i, text) in subjects.iter().enumerate() {
        std::fs::write(root.join(format!("f{i}.txt")), text).unwrap();
    }
    root
}

struct Pipeline {
    _dir: TempDir,
    root: PathBuf,
    key: PathBuf,
    index: PathBuf,
}

impl Pipeline {
    fn new(corpus: Option<&Path>, dim: &str) -> Self {
        let dir = TempDir::new().unwrap();
        let root = dir.path().to_path_buf();
        let corpus = corpus.map_or_else(|| tiny_corpus(&root), Path::to_path_buf);
        let key = root.join("key");
        let index = root.join("index");
        ok(&["--seed", "7", "keygen", "--dim", dim, "-o", s(&key)]);
        ok(&[
            "--seed",
            "7",
            "index",
            "--corpus",
            s(&corpus),
            "--key",
            s(&key),
            "-o",
            s(&index),
        ]);
        Self {
            _dir: dir,
            root,
            key,
            index,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn query(&self, keywords: &str, name: &str) -> PathBuf {
        let out = self.path(name);
        let params = self.path("index.params.toml");
        ok(&[
            "--params-file",
            s(&params),
            "query",
            "--keywords",
            keywords,
            "--key",
            s(&self.key),
            "-o",
            s(&out),
        ]);
        out
    }

    fn search(&self, trapdoor: &Path, extra: &[&str]) -> (Vec<String>, String) {
        let mut args = vec![
            "search",
            "--index",
            s(&self.index),
            "--trapdoor",
            s(trapdoor),
        ];
        args.extend_from_slice(extra);
        let out = opus(&args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8(out.stdout).unwrap();
        let docs = stdout
            .lines()
            .skip(1)
            .filter(|l| !l.starts_with("proof:"))
            .map(|l| l.split('\t').nth(1).unwrap().to_string())
            .collect();
        (docs, String::from_utf8(out.stderr).unwrap())
    }
}

#[test]
fn keygen_is_deterministic_under_a_seed() {
    let dir = TempDir::new().unwrap();
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    ok(&["--seed", "11", "keygen", "--dim", "16", "-o", s(&a)]);
    ok(&["--seed", "11", "keygen", "--dim", "16", "-o", s(&b)]);
    ok(&["--seed", "12", "keygen", "--dim", "16", "-o", s(&c)]);
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn keygen_rejects_dimension_one() {
    let dir = TempDir::new().unwrap();
    let out = opus(&["keygen", "--dim", "1", "-o", s(&dir.path().join("k"))]);
    assert_eq!(code(&out), 1);
}

#[test]
#[ignore = "inverts two 8000 x 8000 matrices"]
fn keygen_at_full_dimension() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "--seed",
        "1",
        "keygen",
        "--dim",
        "8000",
        "-o",
        s(&dir.path().join("k")),
    ]);
}

#[test]
fn index_covers_every_file_and_is_reproducible() {
    let a = Pipeline::new(None, "64");
    let b = Pipeline::new(None, "64");
    let summary = |p: &Pipeline| {
        let out = ok(&[
            "--seed",
            "7",
            "index",
            "--corpus",
            s(&p.root.join("corpus")),
            "--key",
            s(&p.key),
            "-o",
            s(&p.path("again")),
        ]);
        out.lines().next().unwrap().to_string()
    };
    let line = summary(&a);
    assert!(line.starts_with("indexed 10 files"), "{line}");
    assert_eq!(line, summary(&b));
    let manifest = std::fs::read_to_string(a.path("index.corpus")).unwrap();
    assert_eq!(
        manifest
            .lines()
            .filter(|l| l.starts_with("doc_id="))
            .count(),
        10
    );
}

#[test]
fn empty_corpus_exits_3() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("empty");
    std::fs::create_dir(&corpus).unwrap();
    let key = dir.path().join("k");
    ok(&["--seed", "1", "keygen", "--dim", "8", "-o", s(&key)]);
    let out = opus(&[
        "index",
        "--corpus",
        s(&corpus),
        "--key",
        s(&key),
        "-o",
        s(&dir.path().join("i")),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn query_encryption_is_randomized() {
    let p = Pipeline::new(None, "64");
    let a = p.query("violin sonata", "t1");
    let b = p.query("violin sonata", "t2");
    assert_ne!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn stopword_only_query_exits_3() {
    let p = Pipeline::new(None, "64");
    let out = opus(&[
        "query",
        "--keywords",
        "the of and",
        "--key",
        s(&p.key),
        "-o",
        s(&p.path("t")),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn search_finds_the_matching_file() {
    let p = Pipeline::new(None, "64");
    let t = p.query("glacier crevasse", "t");
    let (docs, _) = p.search(&t, &["-k", "1"]);
    assert_eq!(docs, ["2"]);
    let (docs, _) = p.search(&t, &["-k", "1", "--linear"]);
    assert_eq!(docs, ["2"]);
}

#[test]
fn search_tolerates_a_misspelled_keyword() {
    let p = Pipeline::new(None, "256");
    for typo in ["sourdugh", "sourduogh", "soudough"] {
        let t = p.query(typo, "t");
        let (docs, _) = p.search(&t, &["-k", "3", "--linear"]);
        assert!(docs.contains(&"4".to_string()), "{typo}: {docs:?}");
    }
}

#[test]
fn oversized_k_returns_every_file_and_says_so() {
    let p = Pipeline::new(None, "64");
    let t = p.query("comet", "t");
    let (docs, stderr) = p.search(&t, &["-k", "25"]);
    assert_eq!(docs.len(), 10);
    assert!(stderr.contains("short result"), "{stderr}");
}

#[test]
fn linear_and_tree_search_agree_on_the_fixture() {
    let p = Pipeline::new(Some(&fixture()), "128");
    let t = p.query("mozukin mufanu tusar", "t");
    let (tree, _) = p.search(&t, &["-k", "5"]);
    let (linear, _) = p.search(&t, &["-k", "5", "--linear"]);
    assert_eq!(tree.len(), 5);
    assert_eq!(tree[0], linear[0]);
}

#[test]
fn dimension_mismatch_exits_4() {
    let p = Pipeline::new(None, "64");
    let small = p.path("small");
    ok(&["--seed", "1", "keygen", "--dim", "8", "-o", s(&small)]);
    let t = p.path("t");
    ok(&[
        "query",
        "--keywords",
        "falcon",
        "--key",
        s(&small),
        "-o",
        s(&t),
    ]);
    let out = opus(&["search", "--index", s(&p.index), "--trapdoor", s(&t)]);
    assert_eq!(code(&out), 4);
}

#[test]
fn verify_accepts_honest_proofs_and_rejects_tampered_ones() {
    let p = Pipeline::new(None, "64");
    let t = p.query("tariff trade", "t");
    let pubkey = p.path("index.pub");
    for (mode, proof) in [(None, "tree.proof"), (Some("--linear"), "linear.proof")] {
        let proof = p.path(proof);
        let mut extra = vec!["-k", "3", "--proof", s(&proof)];
        extra.extend(mode);
        p.search(&t, &extra);
        let out = opus(&["verify", "--proof", s(&proof), "--pubkey", s(&pubkey)]);
        assert_eq!(code(&out), 0, "{mode:?}");

        let mut bytes = std::fs::read(&proof).unwrap();
        let at = bytes.len() - 10;
        bytes[at] ^= 0x01;
        let bad = p.path("bad.proof");
        std::fs::write(&bad, bytes).unwrap();
        let out = opus(&["verify", "--proof", s(&bad), "--pubkey", s(&pubkey)]);
        assert!(matches!(code(&out), 5 | 6), "{mode:?}: {}", code(&out));
    }
}

#[test]
fn verify_with_a_foreign_key_exits_5() {
    let a = Pipeline::new(None, "64");
    let dir = TempDir::new().unwrap();
    let other_key = dir.path().join("k");
    let other_index = dir.path().join("i");
    ok(&["--seed", "99", "keygen", "--dim", "64", "-o", s(&other_key)]);
    ok(&[
        "--seed",
        "99",
        "index",
        "--corpus",
        s(&a.root.join("corpus")),
        "--key",
        s(&other_key),
        "-o",
        s(&other_index),
    ]);
    let t = a.query("cactus", "t");
    a.search(&t, &["-k", "2"]);
    let out = opus(&[
        "verify",
        "--proof",
        s(&a.path("t.proof")),
        "--pubkey",
        s(&dir.path().join("i.pub")),
    ]);
    assert_eq!(code(&out), 5);
}

#[test]
fn missing_inputs_exit_6() {
    let dir = TempDir::new().unwrap();
    let nope = dir.path().join("nope");
    assert_eq!(
        code(&opus(&[
            "verify",
            "--proof",
            s(&nope),
            "--pubkey",
            s(&nope)
        ])),
        6
    );
    let garbage = dir.path().join("garbage");
    std::fs::write(&garbage, b"not a key").unwrap();
    let out = opus(&[
        "query",
        "--keywords",
        "falcon",
        "--key",
        s(&garbage),
        "-o",
        s(&nope),
    ]);
    assert_eq!(code(&out), 6);
}

#[test]
fn unwritable_output_exits_2() {
    let dir = TempDir::new().unwrap();
    let out = opus(&[
        "keygen",
        "--dim",
        "4",
        "-o",
        s(&dir.path().join("missing/k")),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(code(&opus(&["frobnicate"])), 64);
    assert_eq!(code(&opus(&["keygen"])), 64);
    assert_eq!(code(&opus(&["--help"])), 0);
}

#[test]
fn eval_reports_are_deterministic_under_a_seed() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(&config, "m = 128\nqueries = 6\nk = 5\nmutation_count = 1\n").unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "--seed",
            "5",
            "eval",
            "--corpus",
            s(&fixture()),
            "--config",
            s(&config),
            "-o",
            s(&out),
        ]);
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join(format!("{name}.csv"))).unwrap();
        (json, csv)
    };
    let (a, csv) = run("a.json");
    let (b, _) = run("b.json");
    assert_eq!(a["n_files"], 50);
    assert_eq!(csv.lines().count(), 7);
    let acc = a["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(a["accuracy"], b["accuracy"]);
    assert_eq!(a["per_query"].as_array().unwrap().len(), 6);
    for (x, y) in a["per_query"]
        .as_array()
        .unwrap()
        .iter()
        .zip(b["per_query"].as_array().unwrap())
    {
        assert_eq!(x["target"], y["target"]);
        assert_eq!(x["accuracy"], y["accuracy"]);
    }
}

#[test]
fn gen_corpus_writes_the_requested_files() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("gen");
    ok(&[
        "--seed",
        "1",
        "gen-corpus",
        "-o",
        s(&out),
        "--files",
        "12",
        "--topics",
        "3",
    ]);
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 12);
}
