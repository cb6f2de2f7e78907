//! Hierarchical index tree (HIT).
//!
//! Built bottom-up: file vectors are clustered with [`dynamic_kmeans`], each
//! cluster becomes an internal node whose center is the mean of its children,
//! and the centers are clustered again until a single cluster remains. All
//! leaves sit at the same depth, so a node's children are either all leaves
//! or all internal.

mod cluster;
mod format;
mod search;

use rand::Rng;

use crate::error::{Error, Result};
use crate::secure_knn::{enc_index, EncryptedIndex, SecretKey};

pub use cluster::{dynamic_kmeans, kmeans, ClusterParams, Clustering};
pub use format::{canonical_node_bytes, decode_canonical_node, DecodedNode, HIT_MAGIC};
pub use search::{linear_search, plain_top_k, search, SearchResult, SCORE_RESOLUTION};

pub type NodeId = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct HitNode {
    pub node_id: NodeId,
    /// Owner-side plaintext center; stripped from the outsourced tree.
    pub center_plain: Option<Vec<f64>>,
    pub center_enc: Option<EncryptedIndex>,
    /// Sorted ascending.
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
    pub doc_id: Option<u64>,
}

impl HitNode {
    pub fn is_leaf(&self) -> bool {
        self.doc_id.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HitTree {
    /// Indexed by node id.
    pub nodes: Vec<HitNode>,
    pub root_id: NodeId,
    /// Edges from root to any leaf.
    pub depth: usize,
    pub leaf_count: usize,
    /// Freshness counter bound into the root's signed bytes.
    pub epoch: u64,
    leaf_counts: Vec<usize>,
}

impl HitTree {
    pub fn node(&self, id: NodeId) -> &HitNode {
        &self.nodes[id as usize]
    }

    pub fn root(&self) -> &HitNode {
        self.node(self.root_id)
    }

    /// Leaves in the subtree rooted at `id`.
    pub fn leaves_under(&self, id: NodeId) -> usize {
        self.leaf_counts[id as usize]
    }

    pub fn leaf_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|n| n.is_leaf()).map(|n| n.node_id)
    }

    pub fn is_encrypted(&self) -> bool {
        self.nodes.iter().all(|n| n.center_enc.is_some())
    }

    /// Assembles a tree from nodes, deriving parents and checking structure.
    pub fn from_nodes(mut nodes: Vec<HitNode>, root_id: NodeId, epoch: u64) -> Result<Self> {
        let n = nodes.len();
        let bad = |msg: String| Error::Consistency(format!("malformed tree: {msg}"));
        if root_id as usize >= n {
            return Err(bad(format!("root {root_id} out of range")));
        }
        for (i, node) in nodes.iter_mut().enumerate() {
            if node.node_id != i as u64 {
                return Err(bad(format!("node at slot {i} has id {}", node.node_id)));
            }
            node.parent = None;
            if node.is_leaf() != node.children.is_empty() {
                return Err(bad(format!("node {i}: leaf iff doc_id iff no children")));
            }
            if !node.children.windows(2).all(|w| w[0] < w[1]) {
                return Err(bad(format!("node {i}: children not sorted/unique")));
            }
        }
        for i in 0..n {
            for c in nodes[i].children.clone() {
                let child = nodes
                    .get_mut(c as usize)
                    .ok_or_else(|| bad(format!("node {i} has unknown child {c}")))?;
                if child.parent.is_some() || c == root_id {
                    return Err(bad(format!("node {c} has more than one parent")));
                }
                child.parent = Some(i as u64);
            }
        }
        if let Some(orphan) = nodes
            .iter()
            .find(|x| x.parent.is_none() && x.node_id != root_id)
        {
            return Err(bad(format!("node {} has no parent", orphan.node_id)));
        }
        // depth and leaf counts by walking down from the root
        let mut leaf_counts = vec![0usize; n];
        let mut depth_of = vec![usize::MAX; n];
        let mut order = vec![root_id];
        depth_of[root_id as usize] = 0;
        let mut i = 0;
        while i < order.len() {
            let id = order[i] as usize;
            for &c in &nodes[id].children {
                depth_of[c as usize] = depth_of[id] + 1;
                order.push(c);
            }
            i += 1;
        }
        if order.len() != n {
            return Err(bad("nodes unreachable from the root".into()));
        }
        for &id in order.iter().rev() {
            let node = &nodes[id as usize];
            leaf_counts[id as usize] = if node.is_leaf() {
                1
            } else {
                node.children.iter().map(|&c| leaf_counts[c as usize]).sum()
            };
        }
        let leaf_depths: Vec<usize> = nodes
            .iter()
            .filter(|x| x.is_leaf())
            .map(|x| depth_of[x.node_id as usize])
            .collect();
        let depth = leaf_depths.iter().copied().max().unwrap_or(0);
        if leaf_depths.iter().any(|&d| d != depth) {
            return Err(bad("leaves at different depths".into()));
        }
        if nodes[root_id as usize].is_leaf() {
            return Err(bad("root is a leaf".into()));
        }
        Ok(Self {
            leaf_count: leaf_depths.len(),
            nodes,
            root_id,
            depth,
            epoch,
            leaf_counts,
        })
    }
}

fn mean_of(vectors: &[&[f64]]) -> Vec<f64> {
    let mut out = vec![0.0; vectors[0].len()];
    for v in vectors {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += x;
        }
    }
    let inv = 1.0 / vectors.len() as f64;
    out.iter_mut().for_each(|x| *x *= inv);
    out
}

/// Builds the plaintext tree over `(doc_id, file vector)` pairs.
pub fn build_hit(file_vectors: &[(u64, Vec<f64>)], params: &ClusterParams) -> Result<HitTree> {
    params.validate()?;
    if file_vectors.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot build a tree over zero files".into(),
        ));
    }
    let dim = file_vectors[0].1.len();
    let mut nodes: Vec<HitNode> = Vec::new();
    for (doc_id, v) in file_vectors {
        if v.len() != dim {
            return Err(Error::dimension(dim, v.len()));
        }
        nodes.push(HitNode {
            node_id: nodes.len() as u64,
            center_plain: Some(v.clone()),
            center_enc: None,
            children: Vec::new(),
            parent: None,
            doc_id: Some(*doc_id),
        });
    }
    let mut level: Vec<NodeId> = (0..nodes.len() as u64).collect();
    let mut level_no = 0u64;
    let root_id = loop {
        let points: Vec<&[f64]> = level
            .iter()
            .map(|&id| nodes[id as usize].center_plain.as_deref().unwrap())
            .collect();
        let level_params = ClusterParams {
            seed: params.seed.wrapping_add(level_no),
            ..*params
        };
        let groups = dynamic_kmeans(&points, &level_params)?.members();
        let mut next = Vec::with_capacity(groups.len());
        for group in groups {
            let children: Vec<NodeId> = group.iter().map(|&i| level[i]).collect();
            let center = mean_of(&group.iter().map(|&i| points[i]).collect::<Vec<_>>());
            let mut sorted = children;
            sorted.sort_unstable();
            next.push((sorted, center));
        }
        let mut ids = Vec::with_capacity(next.len());
        for (children, center) in next {
            let id = nodes.len() as u64;
            nodes.push(HitNode {
                node_id: id,
                center_plain: Some(center),
                center_enc: None,
                children,
                parent: None,
                doc_id: None,
            });
            ids.push(id);
        }
        if ids.len() == 1 {
            break ids[0];
        }
        level = ids;
        level_no += 1;
    };
    HitTree::from_nodes(nodes, root_id, 1)
}

/// Encrypts every node center; the result carries no plaintext centers.
pub fn encrypt_tree(tree: &HitTree, key: &SecretKey, rng: &mut impl Rng) -> Result<HitTree> {
    let mut out = tree.clone();
    for node in &mut out.nodes {
        let plain = node.center_plain.take().ok_or_else(|| {
            Error::Consistency(format!("node {} has no plaintext center", node.node_id))
        })?;
        node.center_enc = Some(enc_index(node.node_id, &plain, key, rng)?);
    }
    Ok(out)
}
