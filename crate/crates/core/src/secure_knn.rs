//! Secure kNN encryption of index and query vectors.
//!
//! The key is two invertible `m x m` matrices and a binary split vector `S`.
//! An index vector is split where `S[j] = 0` (halves plus/minus a fresh random
//! `r_j`) and copied where `S[j] = 1`; a query is split on the complementary
//! positions. Encrypting the halves with `M^T` (index) and `M^{-1}` (query)
//! makes the sum of the two part-wise inner products equal the plaintext
//! inner product, while repeated encryptions of one vector look unrelated.
//!
//! This is the classic construction and inherits its weaknesses: an adversary
//! holding enough plaintext/ciphertext pairs can solve for the key. Nothing
//! here hardens it.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

pub const KEY_MAGIC: &[u8] = b"OPUS-KEY/1";
pub const TRAPDOOR_MAGIC: &[u8] = b"OPUS-TRAP/1";

/// Matrices whose estimated 2-norm condition number exceeds this are resampled.
pub const MAX_CONDITION: f64 = 1e6;
pub const MAX_KEYGEN_ATTEMPTS: usize = 8;

#[derive(Clone, PartialEq)]
pub struct SecretKey {
    pub m: usize,
    /// Split vector, entries 0 or 1.
    pub split: Vec<u8>,
    pub m1: DMatrix<f64>,
    pub m2: DMatrix<f64>,
    m1_inv: DMatrix<f64>,
    m2_inv: DMatrix<f64>,
    pub lsh_seed: u64,
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SecretKey")
            .field("m", &self.m)
            .field("lsh_seed", &self.lsh_seed)
            .finish_non_exhaustive()
    }
}

impl SecretKey {
    /// Assembles a key from explicit parts, inverting both matrices.
    pub fn from_parts(
        split: Vec<u8>,
        m1: DMatrix<f64>,
        m2: DMatrix<f64>,
        lsh_seed: u64,
    ) -> Result<Self> {
        let m = split.len();
        if m < 2 {
            return Err(Error::InvalidParameter(format!(
                "key dimension must be at least 2, got {m}"
            )));
        }
        if split.iter().any(|&b| b > 1) {
            return Err(Error::InvalidParameter(
                "split vector must be binary".into(),
            ));
        }
        for mat in [&m1, &m2] {
            if mat.nrows() != m || mat.ncols() != m {
                return Err(Error::dimension(m, mat.nrows().max(mat.ncols())));
            }
        }
        let m1_inv = invert(&m1).ok_or_else(|| Error::KeyGen("M1 is singular".into()))?;
        let m2_inv = invert(&m2).ok_or_else(|| Error::KeyGen("M2 is singular".into()))?;
        Ok(Self {
            m,
            split,
            m1,
            m2,
            m1_inv,
            m2_inv,
            lsh_seed,
        })
    }

    pub fn m1_inv(&self) -> &DMatrix<f64> {
        &self.m1_inv
    }

    pub fn m2_inv(&self) -> &DMatrix<f64> {
        &self.m2_inv
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(KEY_MAGIC).u64(self.m as u64).u64(self.lsh_seed);
        w.bytes(&self.split);
        for mat in [&self.m1, &self.m2] {
            for r in 0..self.m {
                for c in 0..self.m {
                    w.f64(mat[(r, c)]);
                }
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "OPUS-KEY/1");
        r.magic(KEY_MAGIC)?;
        let m = r.u64()? as usize;
        let lsh_seed = r.u64()?;
        let expected = m
            .checked_mul(m)
            .and_then(|mm| mm.checked_mul(16))
            .and_then(|x| x.checked_add(m))
            .ok_or_else(|| Error::format("OPUS-KEY/1", "dimension overflow"))?;
        if bytes.len() - r.position() != expected {
            return Err(Error::format(
                "OPUS-KEY/1",
                format!(
                    "body is {} bytes, expected {expected} for m = {m}",
                    bytes.len() - r.position()
                ),
            ));
        }
        let split = r.bytes(m)?.to_vec();
        let m1 = DMatrix::from_row_slice(m, m, &r.f64s(m * m)?);
        let m2 = DMatrix::from_row_slice(m, m, &r.f64s(m * m)?);
        r.finish()?;
        Self::from_parts(split, m1, m2, lsh_seed)
    }
}

fn invert(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let inv = m.clone().lu().try_inverse()?;
    inv.iter().all(|x| x.is_finite()).then_some(inv)
}

/// Largest singular value by power iteration on `A^T A`.
fn spectral_norm(a: &DMatrix<f64>, iters: usize) -> f64 {
    let n = a.ncols();
    let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut sigma = 0.0;
    for _ in 0..iters {
        let y = a * &x;
        let z = a.tr_mul(&y);
        let norm = z.norm();
        if norm == 0.0 {
            return 0.0;
        }
        sigma = norm.sqrt();
        x = z / norm;
    }
    sigma
}

/// Estimated 2-norm condition number `||A|| * ||A^{-1}||`.
pub fn condition_estimate(a: &DMatrix<f64>, a_inv: &DMatrix<f64>) -> f64 {
    spectral_norm(a, 40) * spectral_norm(a_inv, 40)
}

fn sample_matrix(m: usize, rng: &mut impl Rng) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    for _ in 0..MAX_KEYGEN_ATTEMPTS {
        let mat = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        if let Some(inv) = invert(&mat) {
            if condition_estimate(&mat, &inv) <= MAX_CONDITION {
                return Ok((mat, inv));
            }
        }
    }
    Err(Error::KeyGen(format!(
        "no well-conditioned {m}x{m} matrix after {MAX_KEYGEN_ATTEMPTS} attempts"
    )))
}

/// Deterministic key generation from `seed`.
pub fn keygen(m: usize, seed: u64) -> Result<SecretKey> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "key dimension must be at least 2, got {m}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let split = (0..m).map(|_| rng.random_range(0..=1u8)).collect();
    let (m1, m1_inv) = sample_matrix(m, &mut rng)?;
    let (m2, m2_inv) = sample_matrix(m, &mut rng)?;
    let lsh_seed = rng.next_u64();
    Ok(SecretKey {
        m,
        split,
        m1,
        m2,
        m1_inv,
        m2_inv,
        lsh_seed,
    })
}

/// Range of the per-coordinate split randomness `r_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitNoise {
    pub r_max: f64,
}

impl Default for SplitNoise {
    fn default() -> Self {
        Self { r_max: 1.0 }
    }
}

impl SplitNoise {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        // open interval (0, r_max)
        loop {
            let r = rng.random::<f64>() * self.r_max;
            if r > 0.0 {
                return r;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncryptedIndex {
    pub node_id: u64,
    pub part1: Vec<f64>,
    pub part2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trapdoor {
    pub part1: Vec<f64>,
    pub part2: Vec<f64>,
}

impl Trapdoor {
    pub fn dim(&self) -> usize {
        self.part1.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(TRAPDOOR_MAGIC)
            .u64(self.part1.len() as u64)
            .f64s(&self.part1)
            .f64s(&self.part2);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "OPUS-TRAP/1");
        r.magic(TRAPDOOR_MAGIC)?;
        let m = r.len(16)?;
        let part1 = r.f64s(m)?;
        let part2 = r.f64s(m)?;
        r.finish()?;
        Ok(Self { part1, part2 })
    }
}

/// Splits `v`: positions where `split[j] == split_on` get `v/2 +- r_j`, the
/// rest are copied into both halves.
fn split_vector(
    v: &[f64],
    split: &[u8],
    split_on: u8,
    noise: SplitNoise,
    rng: &mut impl Rng,
) -> (DVector<f64>, DVector<f64>) {
    let mut a = DVector::zeros(v.len());
    let mut b = DVector::zeros(v.len());
    for (j, (&x, &s)) in v.iter().zip(split).enumerate() {
        if s == split_on {
            let r = noise.sample(rng);
            a[j] = 0.5 * x + r;
            b[j] = 0.5 * x - r;
        } else {
            a[j] = x;
            b[j] = x;
        }
    }
    (a, b)
}

pub fn enc_index(
    node_id: u64,
    index: &[f64],
    key: &SecretKey,
    rng: &mut impl Rng,
) -> Result<EncryptedIndex> {
    enc_index_with(node_id, index, key, SplitNoise::default(), rng)
}

pub fn enc_index_with(
    node_id: u64,
    index: &[f64],
    key: &SecretKey,
    noise: SplitNoise,
    rng: &mut impl Rng,
) -> Result<EncryptedIndex> {
    if index.len() != key.m {
        return Err(Error::dimension(key.m, index.len()));
    }
    let (i1, i2) = split_vector(index, &key.split, 0, noise, rng);
    Ok(EncryptedIndex {
        node_id,
        part1: key.m1.tr_mul(&i1).as_slice().to_vec(),
        part2: key.m2.tr_mul(&i2).as_slice().to_vec(),
    })
}

pub fn enc_query(query: &[f64], key: &SecretKey, rng: &mut impl Rng) -> Result<Trapdoor> {
    enc_query_with(query, key, SplitNoise::default(), rng)
}

pub fn enc_query_with(
    query: &[f64],
    key: &SecretKey,
    noise: SplitNoise,
    rng: &mut impl Rng,
) -> Result<Trapdoor> {
    if query.len() != key.m {
        return Err(Error::dimension(key.m, query.len()));
    }
    let (q1, q2) = split_vector(query, &key.split, 1, noise, rng);
    Ok(Trapdoor {
        part1: (&key.m1_inv * q1).as_slice().to_vec(),
        part2: (&key.m2_inv * q2).as_slice().to_vec(),
    })
}

/// Encrypted relevance score; equals the plaintext inner product up to
/// rounding.
pub fn relevance(index: &EncryptedIndex, trap: &Trapdoor) -> Result<f64> {
    if index.part1.len() != trap.part1.len() || index.part2.len() != trap.part2.len() {
        return Err(Error::dimension(index.part1.len(), trap.part1.len()));
    }
    let d1: f64 = index
        .part1
        .iter()
        .zip(&trap.part1)
        .map(|(a, b)| a * b)
        .sum();
    let d2: f64 = index
        .part2
        .iter()
        .zip(&trap.part2)
        .map(|(a, b)| a * b)
        .sum();
    Ok(d1 + d2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn keygen_is_deterministic() {
        let a = keygen(64, 7).unwrap();
        let b = keygen(64, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_ne!(keygen(64, 8).unwrap().to_bytes(), a.to_bytes());
    }

    #[test]
    fn key_matrices_are_inverted() {
        let k = keygen(64, 7).unwrap();
        for (m, inv) in [(&k.m1, k.m1_inv()), (&k.m2, k.m2_inv())] {
            let prod = m * inv;
            let id = DMatrix::<f64>::identity(64, 64);
            assert!((prod - id).amax() < 1e-8);
        }
        assert!(k.split.iter().all(|&s| s <= 1));
    }

    #[test]
    fn keygen_rejects_tiny_dimension() {
        assert!(matches!(keygen(1, 0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn key_bytes_round_trip_exactly() {
        let k = keygen(16, 3).unwrap();
        let bytes = k.to_bytes();
        assert_eq!(bytes.len(), 10 + 8 + 8 + 16 + 2 * 16 * 16 * 8);
        let back = SecretKey::from_bytes(&bytes).unwrap();
        assert_eq!(back, k);
        assert_eq!(back.to_bytes(), bytes);
        assert!(SecretKey::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn identity_key_without_split_passes_through() {
        let id = DMatrix::<f64>::identity(2, 2);
        let key = SecretKey::from_parts(vec![1, 1], id.clone(), id, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = enc_index(0, &[3.0, 5.0], &key, &mut rng).unwrap();
        assert_eq!(e.part1, vec![3.0, 5.0]);
        assert_eq!(e.part2, vec![3.0, 5.0]);
    }

    #[test]
    fn all_ones_score() {
        let key = keygen(4, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = enc_index(0, &[1.0; 4], &key, &mut rng).unwrap();
        let t = enc_query(&[1.0; 4], &key, &mut rng).unwrap();
        assert!((relevance(&e, &t).unwrap() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn zero_vectors_score_zero() {
        let key = keygen(32, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q: Vec<f64> = (0..32).map(|i| i as f64).collect();
        let e = enc_index(0, &[0.0; 32], &key, &mut rng).unwrap();
        let t = enc_query(&q, &key, &mut rng).unwrap();
        assert!(relevance(&e, &t).unwrap().abs() < 1e-9);
        let e = enc_index(0, &q, &key, &mut rng).unwrap();
        let t = enc_query(&[0.0; 32], &key, &mut rng).unwrap();
        assert!(relevance(&e, &t).unwrap().abs() < 1e-9);
    }

    #[test]
    fn orthogonal_vectors_score_zero() {
        let key = keygen(8, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let i = [1.0, 0.0, 2.0, 0.0, 0.0, 3.0, 0.0, 0.0];
        let q = [0.0, 4.0, 0.0, 1.0, 2.0, 0.0, 7.0, 1.0];
        let e = enc_index(0, &i, &key, &mut rng).unwrap();
        let t = enc_query(&q, &key, &mut rng).unwrap();
        assert!(relevance(&e, &t).unwrap().abs() < 1e-6);
    }

    #[test]
    fn dimension_mismatch() {
        let key = keygen(8, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(matches!(
            enc_index(0, &[0.0; 7], &key, &mut rng),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            enc_query(&[0.0; 9], &key, &mut rng),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn trapdoor_round_trip() {
        let key = keygen(8, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = enc_query(&[1.0; 8], &key, &mut rng).unwrap();
        assert_eq!(Trapdoor::from_bytes(&t.to_bytes()).unwrap(), t);
    }
}
