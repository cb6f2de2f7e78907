use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// `|plain ∩ enc| / k`: the share of the true top-k that the search returned.
pub fn topk_overlap_accuracy(plain_topk: &[u64], enc_topk: &[u64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("accuracy needs k >= 1".into()));
    }
    let plain: BTreeSet<u64> = plain_topk.iter().copied().collect();
    let enc: BTreeSet<u64> = enc_topk.iter().copied().collect();
    if plain.len() > k || enc.len() > k {
        return Err(Error::InvalidParameter(format!(
            "top-k sets larger than k = {k} ({} and {})",
            plain.len(),
            enc.len()
        )));
    }
    Ok(plain.intersection(&enc).count() as f64 / k as f64)
}
