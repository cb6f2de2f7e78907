//! Order-preserved uni-gram (OPU) keyword vectors.
//!
//! A keyword becomes a vector of `l_max` letter blocks of 26 slots each,
//! followed by a 30-slot digit-and-symbol block (DSB). The letter at 1-based
//! position `p` sets slot `(p - 1) * 26 + rank(letter)` (rank 1 = `a`). In this
//! module slots are stored 0-based, so that slot lives at index
//! `(p - 1) * 26 + rank - 1`.
//!
//! Infection then spreads every letter bit to the same letter in the `u`
//! neighbouring blocks on either side, adding `1 / s^j` at block distance `j`.
//! With `s = 2, u = 2` the keyword `add` becomes the vector
//! `{1: 1, 4: .75, 27: .5, 30: 1.5, 53: .25, 56: 1.5, 82: .75, 108: .25}` in
//! 1-based slot numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LETTERS: usize = 26;
pub const DSB_LEN: usize = 30;

/// DSB slots 11..=30 (1-based), in this order. Digits take slots 1..=10.
pub const DSB_SYMBOLS: [char; 20] = [
    '!', '@', '#', '$', '%', '&', '*', '(', ')', '-', '_', '+', '=', '/', '\\', '.', ',', '\'',
    '"', ':',
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpuParams {
    /// Number of letter blocks; characters past this position are dropped.
    pub l_max: usize,
    /// Infection decay base, `> 1`.
    pub s: f64,
    /// Infection reach in blocks.
    pub u: usize,
}

impl Default for OpuParams {
    fn default() -> Self {
        Self {
            l_max: 20,
            s: 2.0,
            u: 2,
        }
    }
}

impl OpuParams {
    pub fn validate(&self) -> Result<()> {
        if self.l_max == 0 {
            return Err(Error::InvalidParameter("l_max must be at least 1".into()));
        }
        if !self.s.is_finite() || self.s <= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "infection strength s must be a finite real > 1, got {}",
                self.s
            )));
        }
        if self.u >= self.l_max {
            return Err(Error::InvalidParameter(format!(
                "infection spread u = {} must be below l_max = {}",
                self.u, self.l_max
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.l_max * LETTERS + DSB_LEN
    }

    /// Weight added at block distance `blocks`: `1 / s^blocks`, zero beyond `u`.
    pub fn infection_weight(&self, blocks: usize) -> f64 {
        if blocks == 0 || blocks > self.u {
            0.0
        } else {
            self.s.powi(-(blocks as i32))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpuVector {
    pub weights: Vec<f64>,
    /// Characters consumed from the keyword (after truncation to `l_max`).
    pub source_len: usize,
    /// Characters that have no slot and were skipped during encoding.
    pub skipped: Vec<char>,
}

impl OpuVector {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

/// 0-based index of the letter slot for `letter` at 1-based `position`.
pub fn letter_slot(position: usize, letter: char) -> usize {
    (position - 1) * LETTERS + (letter as u8 - b'a') as usize
}

/// 0-based DSB offset (0..30) of a digit or listed symbol.
pub fn dsb_offset(c: char) -> Option<usize> {
    if let Some(d) = c.to_digit(10) {
        return Some(d as usize);
    }
    DSB_SYMBOLS.iter().position(|&s| s == c).map(|i| 10 + i)
}

/// Lowercases the keyword and pairs each character with its 1-based position,
/// dropping characters beyond `l_max`.
pub fn decompose(keyword: &str, params: &OpuParams) -> Result<Vec<(char, usize)>> {
    if keyword.is_empty() {
        return Err(Error::InvalidKeyword("empty keyword".into()));
    }
    Ok(keyword
        .chars()
        .flat_map(char::to_lowercase)
        .take(params.l_max)
        .zip(1..)
        .collect())
}

pub fn encode(pairs: &[(char, usize)], params: &OpuParams) -> OpuVector {
    let dsb_start = params.l_max * LETTERS;
    let mut weights = vec![0.0; params.dim()];
    let mut skipped = Vec::new();
    for &(c, pos) in pairs {
        if pos == 0 || pos > params.l_max {
            skipped.push(c);
            continue;
        }
        if c.is_ascii_lowercase() {
            weights[letter_slot(pos, c)] = 1.0;
        } else if let Some(off) = dsb_offset(c) {
            weights[dsb_start + off] = 1.0;
        } else {
            skipped.push(c);
        }
    }
    OpuVector {
        weights,
        source_len: pairs.len(),
        skipped,
    }
}

/// Spreads every letter-block weight to the same letter in neighbouring blocks.
/// Linear in the input; the DSB is copied unchanged.
pub fn infect(v: &OpuVector, params: &OpuParams) -> OpuVector {
    let blocks = params.l_max;
    let mut out = v.weights.clone();
    for block in 0..blocks {
        for letter in 0..LETTERS {
            let w = v.weights[block * LETTERS + letter];
            if w == 0.0 {
                continue;
            }
            for dist in 1..=params.u {
                let delta = w * params.infection_weight(dist);
                if block >= dist {
                    out[(block - dist) * LETTERS + letter] += delta;
                }
                if block + dist < blocks {
                    out[(block + dist) * LETTERS + letter] += delta;
                }
            }
        }
    }
    OpuVector {
        weights: out,
        source_len: v.source_len,
        skipped: v.skipped.clone(),
    }
}

/// Decompose, encode and infect in one step.
pub fn opu_vector(keyword: &str, params: &OpuParams) -> Result<OpuVector> {
    let pairs = decompose(keyword, params)?;
    Ok(infect(&encode(&pairs, params), params))
}

pub fn opu_distance(a: &OpuVector, b: &OpuVector) -> Result<f64> {
    euclidean(&a.weights, &b.weights)
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dimension(a.len(), b.len()));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}
