//! Public pipeline parameters shared by `index` and `query`.
//!
//! Both sides must hash keywords identically, so `index` writes the values it
//! used next to the index and `query` reads them back through
//! `--params-file`. None of these values is secret; the LSH family seed lives
//! in the key file.

use std::path::Path;

use anyhow::Context;
use opus_core::hit::ClusterParams;
use opus_core::opu::OpuParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    /// Letter blocks per keyword.
    pub l_max: usize,
    /// Infection decay base.
    pub s: f64,
    /// Infection reach in blocks.
    pub u: usize,
    /// LSH functions per keyword.
    pub l: usize,
    /// LSH bucket width.
    pub a: f64,
    /// Cluster tightness.
    pub e: f64,
    /// Files with fewer distinct stems are skipped.
    pub min_keywords: usize,
    /// Files with more distinct stems are skipped.
    pub max_keywords: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            l_max: 20,
            s: 2.0,
            u: 2,
            l: 20,
            a: 4.0,
            e: 0.4,
            min_keywords: 1,
            max_keywords: 1_000_000,
        }
    }
}

impl PipelineParams {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = crate::read_string(path)?;
        toml::from_str(&text)
            .with_context(|| format!("parsing parameters in {}", path.display()))
            .map_err(crate::malformed)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("parameters serialize")
    }

    pub fn opu(&self) -> OpuParams {
        OpuParams {
            l_max: self.l_max,
            s: self.s,
            u: self.u,
        }
    }

    pub fn cluster(&self, seed: u64) -> ClusterParams {
        ClusterParams {
            e: self.e,
            seed,
            ..ClusterParams::default()
        }
    }
}
