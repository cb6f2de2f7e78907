//! Canonical node encoding and the `OPUS-HIT/1` container.
//!
//! Canonical node bytes (all integers u64 big-endian, reals IEEE-754 f64
//! big-endian):
//!
//! ```text
//! node_id | flags:u8 (bit0 root, bit1 leaf) | [epoch, root only]
//! | child_count | child ids ascending | [doc_id, leaf only]
//! | dim | part1[dim] | part2[dim]
//! ```
//!
//! The container is `OPUS-HIT/1 | epoch | root_id | depth | leaf_count |
//! node_count` followed by `node_count` length-prefixed canonical nodes in
//! node id order.

use super::{HitNode, HitTree, NodeId};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::secure_knn::EncryptedIndex;

pub const HIT_MAGIC: &[u8] = b"OPUS-HIT/1";
const FORMAT: &str = "OPUS-HIT/1";
const FLAG_ROOT: u8 = 1;
const FLAG_LEAF: u8 = 2;

/// A node as recovered from its canonical bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedNode {
    pub node_id: NodeId,
    /// `Some(epoch)` iff the node is the root.
    pub epoch: Option<u64>,
    pub children: Vec<NodeId>,
    pub doc_id: Option<u64>,
    pub center: EncryptedIndex,
}

impl DecodedNode {
    pub fn is_root(&self) -> bool {
        self.epoch.is_some()
    }
}

pub fn canonical_node_bytes(tree: &HitTree, id: NodeId) -> Result<Vec<u8>> {
    let node = tree.node(id);
    let enc = node.center_enc.as_ref().ok_or_else(|| {
        Error::Consistency(format!("node {id} has no encrypted center to encode"))
    })?;
    let is_root = id == tree.root_id;
    let mut flags = 0;
    if is_root {
        flags |= FLAG_ROOT;
    }
    if node.is_leaf() {
        flags |= FLAG_LEAF;
    }
    let mut w = Writer::new();
    w.u64(id).u8(flags);
    if is_root {
        w.u64(tree.epoch);
    }
    w.u64(node.children.len() as u64);
    for &c in &node.children {
        w.u64(c);
    }
    if let Some(doc) = node.doc_id {
        w.u64(doc);
    }
    w.u64(enc.part1.len() as u64)
        .f64s(&enc.part1)
        .f64s(&enc.part2);
    Ok(w.finish())
}

pub fn decode_canonical_node(bytes: &[u8]) -> Result<DecodedNode> {
    let mut r = Reader::new(bytes, FORMAT);
    let node = read_node(&mut r)?;
    r.finish()?;
    Ok(node)
}

fn read_node(r: &mut Reader<'_>) -> Result<DecodedNode> {
    let node_id = r.u64()?;
    let flags = r.u8()?;
    if flags & !(FLAG_ROOT | FLAG_LEAF) != 0 {
        return Err(Error::format(
            FORMAT,
            format!("node {node_id}: unknown flags {flags:#x}"),
        ));
    }
    let epoch = if flags & FLAG_ROOT != 0 {
        Some(r.u64()?)
    } else {
        None
    };
    let n_children = r.len(8)?;
    let children = (0..n_children)
        .map(|_| r.u64())
        .collect::<Result<Vec<_>>>()?;
    let doc_id = if flags & FLAG_LEAF != 0 {
        Some(r.u64()?)
    } else {
        None
    };
    let dim = r.len(16)?;
    let part1 = r.f64s(dim)?;
    let part2 = r.f64s(dim)?;
    Ok(DecodedNode {
        node_id,
        epoch,
        children,
        doc_id,
        center: EncryptedIndex {
            node_id,
            part1,
            part2,
        },
    })
}

impl HitTree {
    /// Serializes an encrypted tree.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        w.bytes(HIT_MAGIC)
            .u64(self.epoch)
            .u64(self.root_id)
            .u64(self.depth as u64)
            .u64(self.leaf_count as u64)
            .u64(self.nodes.len() as u64);
        for id in 0..self.nodes.len() as u64 {
            let bytes = canonical_node_bytes(self, id)?;
            w.u64(bytes.len() as u64).bytes(&bytes);
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, FORMAT);
        r.magic(HIT_MAGIC)?;
        let epoch = r.u64()?;
        let root_id = r.u64()?;
        let depth = r.u64()? as usize;
        let leaf_count = r.u64()? as usize;
        let node_count = r.len(8)?;
        let mut nodes = Vec::with_capacity(node_count);
        let mut dim = None;
        for slot in 0..node_count {
            let len = r.len(1)?;
            let node = decode_canonical_node(r.bytes(len)?)?;
            if node.node_id != slot as u64 {
                return Err(Error::format(
                    FORMAT,
                    format!("node at slot {slot} has id {}", node.node_id),
                ));
            }
            if node.is_root() != (node.node_id == root_id) {
                return Err(Error::format(
                    FORMAT,
                    format!("node {slot}: root flag disagrees with header"),
                ));
            }
            if node.epoch.is_some_and(|e| e != epoch) {
                return Err(Error::format(FORMAT, "root epoch disagrees with header"));
            }
            let d = node.center.part1.len();
            if *dim.get_or_insert(d) != d {
                return Err(Error::format(
                    FORMAT,
                    format!("node {slot}: dimension {d} differs"),
                ));
            }
            nodes.push(HitNode {
                node_id: node.node_id,
                center_plain: None,
                center_enc: Some(node.center),
                children: node.children,
                parent: None,
                doc_id: node.doc_id,
            });
        }
        r.finish()?;
        let tree = HitTree::from_nodes(nodes, root_id, epoch)
            .map_err(|e| Error::format(FORMAT, e.to_string()))?;
        if tree.depth != depth || tree.leaf_count != leaf_count {
            return Err(Error::format(
                FORMAT,
                "depth or leaf count disagrees with header",
            ));
        }
        Ok(tree)
    }

    /// Dimension of the encrypted centers, if any node is encrypted.
    pub fn dim(&self) -> Option<usize> {
        self.nodes.iter().find_map(|n| {
            n.center_enc
                .as_ref()
                .map(|e| e.part1.len())
                .or(n.center_plain.as_ref().map(Vec::len))
        })
    }
}
