//! p-stable LSH family and the Bloom-filter index vectors built from it.
//!
//! Each of the `l` functions hashes a keyword vector `v` to the bucket
//! `floor((R . v + b) / a)` with `R` drawn from a standard Gaussian (2-stable,
//! so collisions track Euclidean distance) and `b` uniform in `[0, a)`. The
//! bucket is shifted by a per-function offset and reduced modulo `m` to pick
//! one Bloom bit; without the offset every function would land in the same
//! handful of bits around zero.
//!
//! File vectors are TF-IDF-weighted sums of keyword vectors, query vectors are
//! unit-weight sums, so their inner product is a sum over shared keywords of
//! weight times bit overlap.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::opu::{opu_vector, OpuParams};

/// Anything that maps a keyword to a fixed-length real vector.
pub trait KeywordEncoder {
    fn dim(&self) -> usize;
    fn encode(&self, keyword: &str) -> Result<Vec<f64>>;
}

impl KeywordEncoder for OpuParams {
    fn dim(&self) -> usize {
        OpuParams::dim(self)
    }

    fn encode(&self, keyword: &str) -> Result<Vec<f64>> {
        Ok(opu_vector(keyword, self)?.weights)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LshFunction {
    pub projection: Vec<f64>,
    /// Uniform in `[0, bucket_width)`.
    pub offset: f64,
    /// Where bucket 0 of this function lands in the Bloom vector.
    pub bit_offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LshFamily {
    pub functions: Vec<LshFunction>,
    pub bucket_width: f64,
    pub seed: u64,
    pub m: usize,
    pub dim: usize,
}

impl LshFamily {
    pub fn l(&self) -> usize {
        self.functions.len()
    }

    /// Raw bucket of each function, before mapping onto Bloom bits.
    pub fn buckets(&self, v: &[f64]) -> Result<Vec<i64>> {
        if v.len() != self.dim {
            return Err(Error::dimension(self.dim, v.len()));
        }
        Ok(self
            .functions
            .iter()
            .map(|f| {
                let proj: f64 = f.projection.iter().zip(v).map(|(r, x)| r * x).sum();
                ((proj + f.offset) / self.bucket_width).floor() as i64
            })
            .collect())
    }
}

pub fn generate_family(seed: u64, l: usize, a: f64, dim: usize, m: usize) -> Result<LshFamily> {
    if l == 0 || m == 0 || dim == 0 {
        return Err(Error::InvalidParameter(format!(
            "LSH family needs l, m, dim >= 1 (got l={l}, m={m}, dim={dim})"
        )));
    }
    if !a.is_finite() || a <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "bucket width must be a positive real, got {a}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let functions = (0..l)
        .map(|_| {
            let projection = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let offset = rng.random_range(0.0..a);
            let bit_offset = rng.random_range(0..m);
            LshFunction {
                projection,
                offset,
                bit_offset,
            }
        })
        .collect();
    Ok(LshFamily {
        functions,
        bucket_width: a,
        seed,
        m,
        dim,
    })
}

/// Distinct Bloom bit indices of a keyword vector (at most `l`).
pub fn hash_keyword(v: &[f64], family: &LshFamily) -> Result<BTreeSet<usize>> {
    let m = family.m as i64;
    Ok(family
        .buckets(v)?
        .into_iter()
        .zip(&family.functions)
        .map(|(bucket, f)| (bucket.wrapping_add(f.bit_offset as i64)).rem_euclid(m) as usize)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BloomKind {
    Keyword,
    File,
    Query,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BloomVector {
    pub weights: Vec<f64>,
    pub kind: BloomKind,
}

impl BloomVector {
    pub fn zeros(m: usize, kind: BloomKind) -> Self {
        Self {
            weights: vec![0.0; m],
            kind,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn popcount(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }

    pub fn dot(&self, other: &BloomVector) -> f64 {
        dot(&self.weights, &other.weights)
    }

    /// Bloom membership: every bit of `probe` is set here.
    pub fn contains_bits(&self, probe: &BTreeSet<usize>) -> bool {
        probe.iter().all(|&i| self.weights[i] != 0.0)
    }

    fn add_bits(&mut self, bits: &BTreeSet<usize>, weight: f64) {
        for &i in bits {
            self.weights[i] += weight;
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn build_keyword_bf(v: &[f64], family: &LshFamily) -> Result<BloomVector> {
    let mut bf = BloomVector::zeros(family.m, BloomKind::Keyword);
    bf.add_bits(&hash_keyword(v, family)?, 1.0);
    Ok(bf)
}

/// `sum_k tfidf_k * bf_k` over `stems`; every stem needs a weight.
pub fn build_file_bf<E: KeywordEncoder + ?Sized>(
    stems: &[String],
    tfidf: &BTreeMap<String, f64>,
    encoder: &E,
    family: &LshFamily,
) -> Result<BloomVector> {
    let mut hasher = KeywordHasher::new(encoder, family);
    let weighted = stems
        .iter()
        .map(|s| {
            tfidf
                .get(s)
                .map(|w| (s.as_str(), *w))
                .ok_or_else(|| Error::Consistency(format!("no TF-IDF weight for stem {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    hasher.file_bf(weighted)
}

/// Unit-weight sum of the keyword vectors of the query stems.
pub fn build_query_bf<E: KeywordEncoder + ?Sized>(
    stems: &[String],
    encoder: &E,
    family: &LshFamily,
) -> Result<BloomVector> {
    KeywordHasher::new(encoder, family).query_bf(stems)
}

/// Memoizes keyword bit sets so a corpus hashes each distinct stem once.
pub struct KeywordHasher<'a, E: KeywordEncoder + ?Sized> {
    encoder: &'a E,
    family: &'a LshFamily,
    cache: HashMap<String, BTreeSet<usize>>,
}

impl<'a, E: KeywordEncoder + ?Sized> KeywordHasher<'a, E> {
    pub fn new(encoder: &'a E, family: &'a LshFamily) -> Self {
        Self {
            encoder,
            family,
            cache: HashMap::new(),
        }
    }

    pub fn family(&self) -> &LshFamily {
        self.family
    }

    pub fn bits(&mut self, keyword: &str) -> Result<&BTreeSet<usize>> {
        if !self.cache.contains_key(keyword) {
            let v = self.encoder.encode(keyword)?;
            let bits = hash_keyword(&v, self.family)?;
            self.cache.insert(keyword.to_string(), bits);
        }
        Ok(&self.cache[keyword])
    }

    pub fn keyword_bf(&mut self, keyword: &str) -> Result<BloomVector> {
        let mut bf = BloomVector::zeros(self.family.m, BloomKind::Keyword);
        let bits = self.bits(keyword)?.clone();
        bf.add_bits(&bits, 1.0);
        Ok(bf)
    }

    pub fn file_bf<'s>(
        &mut self,
        weighted: impl IntoIterator<Item = (&'s str, f64)>,
    ) -> Result<BloomVector> {
        let mut bf = BloomVector::zeros(self.family.m, BloomKind::File);
        for (stem, w) in weighted {
            let bits = self.bits(stem)?;
            for &i in bits {
                bf.weights[i] += w;
            }
        }
        Ok(bf)
    }

    pub fn query_bf(&mut self, stems: &[String]) -> Result<BloomVector> {
        if stems.is_empty() {
            return Err(Error::InvalidQuery("query has no keywords".into()));
        }
        let mut bf = self.file_bf(stems.iter().map(|s| (s.as_str(), 1.0)))?;
        bf.kind = BloomKind::Query;
        Ok(bf)
    }
}

/// `(1 - e^{-l n / m})^l`, the false-positive rate of an `m`-bit filter holding
/// `n` items under `l` independent hashes.
pub fn expected_fp_rate(l: usize, n: usize, m: usize) -> f64 {
    fp_rate_at_load(l, (l * n) as f64 / m as f64)
}

/// False-positive rate as a function of the load `l n / m`.
pub fn fp_rate_at_load(l: usize, load: f64) -> f64 {
    (1.0 - (-load).exp()).powi(l as i32)
}

/// Load `l n / m` at which the number of hash functions minimizes the
/// false-positive rate for given `m` and `n`.
pub const OPTIMAL_LOAD: f64 = std::f64::consts::LN_2;

/// The minimum false-positive rate, `(1/2)^l`, reached at [`OPTIMAL_LOAD`].
pub fn minimum_fp_rate(l: usize) -> f64 {
    0.5f64.powi(l as i32)
}
