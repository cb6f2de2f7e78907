//! Multi-keyword fuzzy search over encrypted documents.
//!
//! Keywords are turned into order-preserved uni-gram ([`opu`]) vectors,
//! hashed into Bloom vectors with p-stable LSH ([`lsh_bloom`]), weighted by
//! TF-IDF ([`corpus`]), organised into a hierarchical index tree ([`hit`]) and
//! encrypted with secure kNN ([`secure_knn`]). Search results can be checked
//! against a signed tree ([`verify`]); [`eval`] holds the experiment harness.

mod codec;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod hit;
pub mod lsh_bloom;
pub mod opu;
pub mod secure_knn;
pub mod verify;

pub use error::{Error, Result};
