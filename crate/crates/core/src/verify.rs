//! Signed index trees and search-result proofs.
//!
//! The owner signs the SHA-256 digest of every node's canonical bytes. A
//! server answering a query returns, next to the results, the canonical bytes
//! and signatures of every node on the search path plus the returned leaves.
//! The user re-hashes each node, checks each signature, checks that the path
//! hangs together from the root down, and checks that the returned doc ids
//! are exactly the signed leaves.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use ed25519_dalek::{Signature, Signer as _, SigningKey, VerifyingKey};
use sha2::{Digest as _, Sha256};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::hit::{canonical_node_bytes, decode_canonical_node, HitTree, NodeId, SearchResult};
use crate::secure_knn::SecretKey;

pub const PROOF_MAGIC: &[u8] = b"OPUS-PROOF/1";
pub const SIGNATURES_MAGIC: &[u8] = b"OPUS-SIGS/1";
pub const PUBLIC_KEY_MAGIC: &[u8] = b"OPUS-PUB/1";

pub type Digest = [u8; 32];

pub fn digest(bytes: &[u8]) -> Digest {
    Sha256::digest(bytes).into()
}

/// Owner-side half of a hash-then-sign scheme.
pub trait NodeSigner {
    fn sign(&self, digest: &Digest) -> Result<Vec<u8>>;
}

/// User-side half of a hash-then-sign scheme.
pub trait NodeVerifier {
    fn verify(&self, digest: &Digest, signature: &[u8]) -> bool;
}

/// Ed25519 signer.
pub struct Ed25519Signer {
    key: SigningKey,
}

impl Ed25519Signer {
    pub fn from_seed(seed: &[u8; 32]) -> Self {
        Self {
            key: SigningKey::from_bytes(seed),
        }
    }

    /// Derives the signing key from the owner's secret key, so one key file
    /// drives both encryption and signing.
    pub fn from_secret_key(key: &SecretKey) -> Self {
        let mut h = Sha256::new();
        h.update(b"opus node signing key");
        h.update(key.to_bytes());
        Self::from_seed(&h.finalize().into())
    }

    pub fn verifier(&self) -> Ed25519Verifier {
        Ed25519Verifier {
            key: self.key.verifying_key(),
        }
    }
}

impl NodeSigner for Ed25519Signer {
    fn sign(&self, digest: &Digest) -> Result<Vec<u8>> {
        Ok(self.key.sign(digest).to_bytes().to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ed25519Verifier {
    key: VerifyingKey,
}

impl Ed25519Verifier {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(PUBLIC_KEY_MAGIC).bytes(self.key.as_bytes());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "OPUS-PUB/1");
        r.magic(PUBLIC_KEY_MAGIC)?;
        let raw: [u8; 32] = r.bytes(32)?.try_into().unwrap();
        r.finish()?;
        let key = VerifyingKey::from_bytes(&raw)
            .map_err(|e| Error::format("OPUS-PUB/1", e.to_string()))?;
        Ok(Self { key })
    }
}

impl NodeVerifier for Ed25519Verifier {
    fn verify(&self, digest: &Digest, signature: &[u8]) -> bool {
        let Ok(sig) = Signature::from_slice(signature) else {
            return false;
        };
        self.key.verify_strict(digest, &sig).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSignature {
    pub node_id: NodeId,
    pub digest: Digest,
    pub signature: Vec<u8>,
}

pub type SignatureMap = BTreeMap<NodeId, NodeSignature>;

/// Signs every node of an encrypted tree over its canonical bytes.
pub fn sign_tree(tree: &HitTree, signer: &dyn NodeSigner) -> Result<SignatureMap> {
    let mut out = BTreeMap::new();
    for id in 0..tree.nodes.len() as NodeId {
        let bytes = canonical_node_bytes(tree, id).map_err(|e| Error::Signing {
            node_id: id,
            reason: e.to_string(),
        })?;
        let d = digest(&bytes);
        let signature = signer.sign(&d).map_err(|e| Error::Signing {
            node_id: id,
            reason: e.to_string(),
        })?;
        out.insert(
            id,
            NodeSignature {
                node_id: id,
                digest: d,
                signature,
            },
        );
    }
    Ok(out)
}

fn write_signature(w: &mut Writer, s: &NodeSignature) {
    w.u64(s.node_id)
        .bytes(&s.digest)
        .u64(s.signature.len() as u64)
        .bytes(&s.signature);
}

fn read_signature(r: &mut Reader<'_>) -> Result<NodeSignature> {
    let node_id = r.u64()?;
    let digest: Digest = r.bytes(32)?.try_into().unwrap();
    let len = r.len(1)?;
    let signature = r.bytes(len)?.to_vec();
    Ok(NodeSignature {
        node_id,
        digest,
        signature,
    })
}

pub fn signatures_to_bytes(sigs: &SignatureMap) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(SIGNATURES_MAGIC).u64(sigs.len() as u64);
    for s in sigs.values() {
        write_signature(&mut w, s);
    }
    w.finish()
}

pub fn signatures_from_bytes(bytes: &[u8]) -> Result<SignatureMap> {
    let mut r = Reader::new(bytes, "OPUS-SIGS/1");
    r.magic(SIGNATURES_MAGIC)?;
    let n = r.len(48)?;
    let mut out = BTreeMap::new();
    for _ in 0..n {
        let s = read_signature(&mut r)?;
        if out.insert(s.node_id, s).is_some() {
            return Err(Error::format("OPUS-SIGS/1", "duplicate node id"));
        }
    }
    r.finish()?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationProof {
    /// Canonical node bytes with their signatures: the search path from the
    /// root, then the returned leaves.
    pub path_nodes: Vec<(Vec<u8>, NodeSignature)>,
    pub result_doc_ids: Vec<u64>,
}

impl VerificationProof {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(PROOF_MAGIC).u64(self.path_nodes.len() as u64);
        for (bytes, sig) in &self.path_nodes {
            w.u64(bytes.len() as u64).bytes(bytes);
            write_signature(&mut w, sig);
        }
        w.u64(self.result_doc_ids.len() as u64);
        for &d in &self.result_doc_ids {
            w.u64(d);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "OPUS-PROOF/1");
        r.magic(PROOF_MAGIC)?;
        let n = r.len(56)?;
        let mut path_nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let len = r.len(1)?;
            let node = r.bytes(len)?.to_vec();
            path_nodes.push((node, read_signature(&mut r)?));
        }
        let n_docs = r.len(8)?;
        let result_doc_ids = (0..n_docs).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(Self {
            path_nodes,
            result_doc_ids,
        })
    }
}

/// Collects the visited path and the returned leaves with their signatures.
pub fn extract_proof(
    tree: &HitTree,
    sigs: &SignatureMap,
    result: &SearchResult,
) -> Result<VerificationProof> {
    let leaf_of: HashMap<u64, NodeId> = tree
        .nodes
        .iter()
        .filter_map(|n| Some((n.doc_id?, n.node_id)))
        .collect();
    let mut ids: Vec<NodeId> = result.visited_path.clone();
    if ids.first() != Some(&tree.root_id) {
        ids.insert(0, tree.root_id);
    }
    for &(doc, _) in &result.entries {
        let leaf = *leaf_of
            .get(&doc)
            .ok_or_else(|| Error::Integrity(format!("doc {doc} is not a leaf of this tree")))?;
        ids.push(leaf);
    }
    let path_nodes = ids
        .into_iter()
        .map(|id| {
            let sig = sigs
                .get(&id)
                .ok_or_else(|| Error::Integrity(format!("node {id} has no signature")))?;
            Ok((canonical_node_bytes(tree, id)?, sig.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VerificationProof {
        path_nodes,
        result_doc_ids: result.entries.iter().map(|e| e.0).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectClass {
    /// Digest or signature does not match the node bytes.
    BadSignature,
    /// The path does not start at the root or a node is not a child of an
    /// earlier node.
    BrokenLinkage,
    /// Returned doc ids and signed leaves differ.
    UnsignedResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject {
        /// Offending node, or the doc id for result mismatches.
        node_id: u64,
        class: RejectClass,
    },
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

pub fn verify_proof(proof: &VerificationProof, verifier: &dyn NodeVerifier) -> Verdict {
    let reject = |node_id, class| Verdict::Reject { node_id, class };
    let mut seen: BTreeSet<NodeId> = BTreeSet::new();
    let mut reachable: BTreeSet<NodeId> = BTreeSet::new();
    let mut leaf_docs: BTreeMap<u64, NodeId> = BTreeMap::new();
    if proof.path_nodes.is_empty() {
        return reject(0, RejectClass::BrokenLinkage);
    }
    for (i, (bytes, sig)) in proof.path_nodes.iter().enumerate() {
        let d = digest(bytes);
        if d != sig.digest || !verifier.verify(&d, &sig.signature) {
            return reject(sig.node_id, RejectClass::BadSignature);
        }
        let Ok(node) = decode_canonical_node(bytes) else {
            return reject(sig.node_id, RejectClass::BadSignature);
        };
        if node.node_id != sig.node_id {
            return reject(sig.node_id, RejectClass::BadSignature);
        }
        let linked = if i == 0 {
            node.is_root()
        } else {
            !node.is_root() && reachable.contains(&node.node_id)
        };
        if !linked || !seen.insert(node.node_id) {
            return reject(node.node_id, RejectClass::BrokenLinkage);
        }
        reachable.extend(node.children.iter().copied());
        if let Some(doc) = node.doc_id {
            leaf_docs.insert(doc, node.node_id);
        }
    }
    let mut returned = BTreeSet::new();
    for &doc in &proof.result_doc_ids {
        if !leaf_docs.contains_key(&doc) || !returned.insert(doc) {
            return reject(doc, RejectClass::UnsignedResult);
        }
    }
    if let Some((&doc, _)) = leaf_docs.iter().find(|(d, _)| !returned.contains(d)) {
        return reject(doc, RejectClass::UnsignedResult);
    }
    Verdict::Accept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hit::{build_hit, encrypt_tree, search, ClusterParams};
    use crate::secure_knn::{enc_query, keygen};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (HitTree, SignatureMap, Ed25519Verifier, VerificationProof) {
        let files = vec![
            (0, vec![1.0, 0.0]),
            (1, vec![0.9, 0.1]),
            (2, vec![0.0, 1.0]),
            (3, vec![0.1, 0.9]),
        ];
        let key = keygen(2, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tree = encrypt_tree(
            &build_hit(&files, &ClusterParams::default()).unwrap(),
            &key,
            &mut rng,
        )
        .unwrap();
        let signer = Ed25519Signer::from_secret_key(&key);
        let sigs = sign_tree(&tree, &signer).unwrap();
        let trap = enc_query(&[1.0, 0.0], &key, &mut rng).unwrap();
        let res = search(&tree, &trap, 2).unwrap();
        let proof = extract_proof(&tree, &sigs, &res).unwrap();
        (tree, sigs, signer.verifier(), proof)
    }

    #[test]
    fn untampered_accepts() {
        let (tree, sigs, v, proof) = setup();
        assert_eq!(sigs.len(), tree.nodes.len());
        assert_eq!(verify_proof(&proof, &v), Verdict::Accept);
        // root + one cluster + two leaves
        assert_eq!(proof.path_nodes.len(), 4);
        let again = VerificationProof::from_bytes(&proof.to_bytes()).unwrap();
        let fresh = Ed25519Verifier::from_bytes(&v.to_bytes()).unwrap();
        assert!(verify_proof(&again, &fresh).is_accept());
    }

    #[test]
    fn swapped_result_is_unsigned() {
        let (_, _, v, mut proof) = setup();
        proof.result_doc_ids[0] = 3;
        assert!(matches!(
            verify_proof(&proof, &v),
            Verdict::Reject {
                class: RejectClass::UnsignedResult,
                ..
            }
        ));
    }

    #[test]
    fn reordered_path_breaks_linkage() {
        let (_, _, v, mut proof) = setup();
        proof.path_nodes.swap(0, 1);
        assert!(matches!(
            verify_proof(&proof, &v),
            Verdict::Reject {
                class: RejectClass::BrokenLinkage,
                ..
            }
        ));
    }

    #[test]
    fn wrong_key_rejects() {
        let (_, _, _, proof) = setup();
        let other = Ed25519Signer::from_seed(&[9; 32]).verifier();
        assert!(!verify_proof(&proof, &other).is_accept());
    }

    #[test]
    fn signature_file_round_trip() {
        let (_, sigs, _, _) = setup();
        assert_eq!(
            signatures_from_bytes(&signatures_to_bytes(&sigs)).unwrap(),
            sigs
        );
    }
}
