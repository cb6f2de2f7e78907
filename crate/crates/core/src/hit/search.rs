//! Top-k search over an encrypted tree, plus the linear-scan baseline.
//!
//! The tree search descends greedily to the best last-level cluster. If that
//! cluster holds fewer than the files still needed, all of its leaves are
//! taken and the search climbs to the nearest ancestor that has more than one
//! child and enough uncollected leaves beneath it, then descends again from
//! there. Subtrees whose leaves are all collected are never re-entered, so the
//! result has no duplicates and is never under-filled.

use std::collections::HashMap;

use super::{HitTree, NodeId};
use crate::error::{Error, Result};
use crate::secure_knn::{relevance, EncryptedIndex, Trapdoor};

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// `(doc_id, score)`, score descending, ties by doc id ascending.
    pub entries: Vec<(u64, f64)>,
    /// Internal nodes entered, in order of first visit. Starts at the root
    /// for tree search; empty for the linear scan.
    pub visited_path: Vec<NodeId>,
    pub score_evaluations: usize,
    /// Set when `k` exceeded the number of files.
    pub short: bool,
}

impl SearchResult {
    pub fn doc_ids(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.0).collect()
    }
}

/// Scores closer than this rank as ties, so the rounding noise of encrypted
/// scores cannot reorder files whose plaintext scores are equal.
pub const SCORE_RESOLUTION: f64 = 1e-6;

fn score_key(s: f64) -> f64 {
    (s / SCORE_RESOLUTION).round()
}

/// Higher score first; ties (at [`SCORE_RESOLUTION`]) by ascending id.
fn ranks_before(a: (u64, f64), b: (u64, f64)) -> std::cmp::Ordering {
    score_key(b.1)
        .total_cmp(&score_key(a.1))
        .then(a.0.cmp(&b.0))
}

fn rank(entries: &mut [(u64, f64)]) {
    entries.sort_by(|a, b| ranks_before(*a, *b));
}

struct Searcher<'t> {
    tree: &'t HitTree,
    trap: &'t Trapdoor,
    scores: HashMap<NodeId, f64>,
    /// Uncollected leaves under each node.
    available: Vec<usize>,
    visited: Vec<NodeId>,
    collected: Vec<(u64, f64)>,
}

impl Searcher<'_> {
    fn score(&mut self, id: NodeId) -> Result<f64> {
        if let Some(&s) = self.scores.get(&id) {
            return Ok(s);
        }
        let enc = self
            .tree
            .node(id)
            .center_enc
            .as_ref()
            .ok_or_else(|| Error::Consistency(format!("node {id} has no encrypted center")))?;
        let s = relevance(enc, self.trap)?;
        self.scores.insert(id, s);
        Ok(s)
    }

    fn visit(&mut self, id: NodeId) {
        if !self.visited.contains(&id) {
            self.visited.push(id);
        }
    }

    fn collect(&mut self, leaf: NodeId, score: f64) {
        let node = self.tree.node(leaf);
        self.collected.push((node.doc_id.unwrap(), score));
        let mut cur = Some(leaf);
        while let Some(id) = cur {
            self.available[id as usize] -= 1;
            cur = self.tree.node(id).parent;
        }
    }

    fn children_are_leaves(&self, id: NodeId) -> bool {
        let node = self.tree.node(id);
        node.children
            .first()
            .is_some_and(|&c| self.tree.node(c).is_leaf())
    }

    /// Greedy descent from `start` to a last-level internal node, skipping
    /// exhausted subtrees.
    fn descend(&mut self, start: NodeId) -> Result<NodeId> {
        let mut r = start;
        self.visit(r);
        while !self.children_are_leaves(r) {
            let mut best: Option<(NodeId, f64)> = None;
            for c in self.tree.node(r).children.clone() {
                if self.available[c as usize] == 0 {
                    continue;
                }
                let s = self.score(c)?;
                if best.is_none_or(|b| ranks_before((c, s), b).is_lt()) {
                    best = Some((c, s));
                }
            }
            r = best
                .ok_or_else(|| Error::Consistency(format!("node {r} has no live children")))?
                .0;
            self.visit(r);
        }
        Ok(r)
    }
}

/// Tree search for the top `k` files.
pub fn search(tree: &HitTree, trap: &Trapdoor, k: usize) -> Result<SearchResult> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let target = k.min(tree.leaf_count);
    let mut s = Searcher {
        tree,
        trap,
        scores: HashMap::new(),
        available: (0..tree.nodes.len() as u64)
            .map(|id| tree.leaves_under(id))
            .collect(),
        visited: Vec::new(),
        collected: Vec::with_capacity(target),
    };
    let mut start = tree.root_id;
    while s.collected.len() < target {
        let r = s.descend(start)?;
        let mut leaves = Vec::new();
        for c in tree.node(r).children.clone() {
            if s.available[c as usize] > 0 {
                leaves.push((c, s.score(c)?));
            }
        }
        let remaining = target - s.collected.len();
        if remaining <= leaves.len() {
            leaves.sort_by(|a, b| {
                let doc = |x: &(NodeId, f64)| (tree.node(x.0).doc_id.unwrap(), x.1);
                ranks_before(doc(a), doc(b))
            });
            leaves.truncate(remaining);
        }
        for (leaf, score) in leaves {
            s.collect(leaf, score);
        }
        let remaining = target - s.collected.len();
        if remaining == 0 {
            break;
        }
        let mut up = r;
        while up != tree.root_id
            && (tree.node(up).children.len() == 1 || s.available[up as usize] < remaining)
        {
            up = tree.node(up).parent.expect("non-root node has a parent");
        }
        start = up;
    }
    rank(&mut s.collected);
    Ok(SearchResult {
        entries: s.collected,
        visited_path: s.visited,
        score_evaluations: s.scores.len(),
        short: k > tree.leaf_count,
    })
}

/// Scores every `(doc_id, index)` pair and returns the global top `k`.
pub fn linear_search(
    file_indices: &[(u64, EncryptedIndex)],
    trap: &Trapdoor,
    k: usize,
) -> Result<SearchResult> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let mut entries = file_indices
        .iter()
        .map(|(doc, idx)| Ok((*doc, relevance(idx, trap)?)))
        .collect::<Result<Vec<_>>>()?;
    rank(&mut entries);
    entries.truncate(k);
    Ok(SearchResult {
        entries,
        visited_path: Vec::new(),
        score_evaluations: file_indices.len(),
        short: k > file_indices.len(),
    })
}

/// Plaintext ranking by inner product, with the same ordering rules.
pub fn plain_top_k(files: &[(u64, Vec<f64>)], query: &[f64], k: usize) -> Vec<(u64, f64)> {
    let mut entries: Vec<(u64, f64)> = files
        .iter()
        .map(|(doc, v)| (*doc, crate::lsh_bloom::dot(v, query)))
        .collect();
    rank(&mut entries);
    entries.truncate(k);
    entries
}

impl HitTree {
    /// `(doc_id, encrypted leaf)` pairs, for the linear baseline.
    pub fn leaf_indices(&self) -> Vec<(u64, EncryptedIndex)> {
        self.nodes
            .iter()
            .filter_map(|n| Some((n.doc_id?, n.center_enc.clone()?)))
            .collect()
    }
}
