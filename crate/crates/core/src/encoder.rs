//! Instance featurization and the three-part agent state.

use serde::{Deserialize, Serialize};

use crate::dataset::{EntityTable, Instance};
use crate::error::{Error, Result};
use crate::linalg::mean_pool;

/// Entity-embedding dimension.
pub const ENTITY_DIM: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub d_s: usize,
    pub hash_seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { d_s: 64, hash_seed: 0 }
    }
}

pub type InstanceRepr = Vec<f64>;
pub type RelationEmbedding = Vec<f64>;

// FNV-1a, 64 bit. Stable across platforms and toolchains, unlike std's hasher.
fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// Signed feature hashing of the token multiset into `d_s` buckets.
pub fn hashed_bag_of_words(tokens: &[String], config: &EncoderConfig) -> InstanceRepr {
    let mut v = vec![0.0; config.d_s];
    if config.d_s == 0 {
        return v;
    }
    for t in tokens {
        let h = fnv1a(config.hash_seed, t.as_bytes());
        let bucket = (h % config.d_s as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    v
}

pub fn encode_instance(instance: &Instance, config: &EncoderConfig) -> Result<InstanceRepr> {
    match &instance.repr {
        Some(r) if r.len() != config.d_s => Err(Error::dim("precomputed repr", config.d_s, r.len())),
        Some(r) => Ok(r.clone()),
        None => Ok(hashed_bag_of_words(&instance.tokens, config)),
    }
}

/// `e2 − e1` (head + relation ≈ tail).
pub fn relation_embedding(e1: &str, e2: &str, table: &EntityTable) -> Result<RelationEmbedding> {
    let h = table.get(e1)?;
    let t = table.get(e2)?;
    if h.len() != t.len() {
        return Err(Error::dim("entity embedding", h.len(), t.len()));
    }
    Ok(t.iter().zip(h).map(|(t, h)| t - h).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub selected_part: Vec<f64>,
    pub candidate_part: Vec<f64>,
    pub relation_part: Vec<f64>,
}

impl StateVector {
    pub fn dim(&self) -> usize {
        self.selected_part.len() + self.candidate_part.len() + self.relation_part.len()
    }

    /// Concatenation `[selected ; candidate ; relation]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.selected_part);
        v.extend_from_slice(&self.candidate_part);
        v.extend_from_slice(&self.relation_part);
        v
    }
}

pub fn state_dim(d_s: usize, d_e: usize) -> usize {
    2 * d_s + d_e
}

pub fn build_state<V: AsRef<[f64]>>(selected: &[V], candidate: &[f64], rel: &[f64]) -> Result<StateVector> {
    let d_s = candidate.len();
    Ok(StateVector {
        selected_part: mean_pool(selected, d_s, "selected representation")?,
        candidate_part: candidate.to_vec(),
        relation_part: rel.to_vec(),
    })
}
