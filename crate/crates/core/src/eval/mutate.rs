//! Single-letter typos: replacement, adjacent swap, insertion or deletion.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationOp {
    Replace,
    AdjacentSwap,
    InsertOrDelete,
}

impl MutationOp {
    pub const ALL: [MutationOp; 3] = [
        MutationOp::Replace,
        MutationOp::AdjacentSwap,
        MutationOp::InsertOrDelete,
    ];
}

fn random_letter(rng: &mut impl Rng) -> char {
    (b'a' + rng.random_range(0..26u8)) as char
}

/// Applies one mutation of kind `op`. Returns `None` when the word has fewer
/// than two characters, or when no adjacent pair differs for a swap.
pub fn mutate_misspell(word: &str, op: MutationOp, rng: &mut impl Rng) -> Option<String> {
    let mut chars: Vec<char> = word.chars().collect();
    if chars.len() < 2 {
        return None;
    }
    match op {
        MutationOp::Replace => {
            let i = rng.random_range(0..chars.len());
            let mut c = random_letter(rng);
            while c == chars[i] {
                c = random_letter(rng);
            }
            chars[i] = c;
        }
        MutationOp::AdjacentSwap => {
            let spots: Vec<usize> = (0..chars.len() - 1)
                .filter(|&i| chars[i] != chars[i + 1])
                .collect();
            if spots.is_empty() {
                return None;
            }
            let i = spots[rng.random_range(0..spots.len())];
            chars.swap(i, i + 1);
        }
        MutationOp::InsertOrDelete => {
            if rng.random_bool(0.5) {
                let i = rng.random_range(0..=chars.len());
                chars.insert(i, random_letter(rng));
            } else {
                chars.remove(rng.random_range(0..chars.len()));
            }
        }
    }
    Some(chars.into_iter().collect())
}
