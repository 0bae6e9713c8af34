//! Random-hyperplane (simHash) LSH with banding.
//!
//! Bit `i` of a signature is the sign of the dot product with hyperplane
//! `i`; two vectors at angle `θ` agree on each bit with probability
//! `1 - θ/π`. The `H` bits are cut into `b` bands of `r` bits and a column is
//! stored in one bucket per band, so near neighbors share at least one bucket
//! with high probability.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embed::{dot, l2_normalize, EmbeddingStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LshParams {
    pub hyperplanes: usize,
    pub bands: usize,
}

impl Default for LshParams {
    fn default() -> Self {
        LshParams {
            hyperplanes: 128,
            bands: 16,
        }
    }
}

impl LshParams {
    pub fn rows_per_band(&self) -> usize {
        self.hyperplanes / self.bands.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands == 0 || self.hyperplanes == 0 || self.hyperplanes % self.bands != 0 {
            return Err(Error::InvalidParam(format!(
                "bands ({}) must divide hyperplanes ({})",
                self.bands, self.hyperplanes
            )));
        }
        if self.rows_per_band() > 64 {
            return Err(Error::InvalidParam("at most 64 rows per band".into()));
        }
        Ok(())
    }
}

/// A simHash signature packed into 64-bit words, bit `i` in word `i / 64`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Signature(Vec<u64>);

impl Signature {
    pub fn bit(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    /// Number of positions on which two signatures agree.
    pub fn agreements(&self, other: &Signature, len: usize) -> usize {
        (0..len).filter(|&i| self.bit(i) == other.bit(i)).count()
    }

    fn band(&self, band: usize, rows: usize) -> u64 {
        (0..rows).fold(0u64, |acc, j| acc | (self.bit(band * rows + j) as u64) << j)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LshIndex {
    params: LshParams,
    seed: u64,
    dim: usize,
    n_items: usize,
    hyperplanes: Vec<f32>,
    /// `(band, band signature)` → entry offsets in the store.
    #[serde(with = "bucket_list")]
    buckets: BTreeMap<(u32, u64), Vec<u32>>,
}

impl LshIndex {
    /// Hashes every nonzero vector of the store. Zero vectors (empty
    /// columns) have no direction and are left out.
    pub fn build(store: &EmbeddingStore, params: LshParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let dim = store.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hyperplanes = Vec::with_capacity(params.hyperplanes * dim);
        for _ in 0..params.hyperplanes {
            let mut h: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            l2_normalize(&mut h);
            hyperplanes.extend(h);
        }
        let mut index = LshIndex {
            params,
            seed,
            dim,
            n_items: store.len(),
            hyperplanes,
            buckets: BTreeMap::new(),
        };
        for (offset, e) in store.entries().iter().enumerate() {
            if e.vector.iter().all(|&x| x == 0.0) {
                continue;
            }
            let sig = index.signature(&e.vector)?;
            let keys: Vec<_> = index.band_keys(&sig).collect();
            for band in keys {
                index.buckets.entry(band).or_default().push(offset as u32);
            }
        }
        Ok(index)
    }

    pub fn params(&self) -> LshParams {
        self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn signature(&self, v: &[f32]) -> Result<Signature> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        let mut words = vec![0u64; self.params.hyperplanes.div_ceil(64)];
        for (i, h) in self.hyperplanes.chunks_exact(self.dim).enumerate() {
            if dot(h, v) >= 0.0 {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Ok(Signature(words))
    }

    fn band_keys(&self, sig: &Signature) -> impl Iterator<Item = (u32, u64)> + '_ {
        let rows = self.params.rows_per_band();
        let sig = sig.clone();
        (0..self.params.bands).map(move |b| (b as u32, sig.band(b, rows)))
    }

    /// Store offsets sharing at least one band bucket with `v`.
    pub fn bucket_neighbors(&self, v: &[f32]) -> Result<BTreeSet<usize>> {
        let sig = self.signature(v)?;
        let mut out = BTreeSet::new();
        for key in self.band_keys(&sig) {
            if let Some(items) = self.buckets.get(&key) {
                out.extend(items.iter().map(|&o| o as usize));
            }
        }
        Ok(out)
    }

    /// Number of bucket memberships of a store entry.
    pub fn memberships(&self, offset: usize) -> usize {
        self.buckets
            .values()
            .filter(|items| items.contains(&(offset as u32)))
            .count()
    }

    pub(crate) fn check_store(&self, store: &EmbeddingStore) -> Result<()> {
        if store.dim() != self.dim || store.len() != self.n_items {
            return Err(Error::InvalidParam(format!(
                "LSH index was built over {} vectors of dim {}, store has {} of dim {}",
                self.n_items,
                self.dim,
                store.len(),
                store.dim()
            )));
        }
        Ok(())
    }
}

/// JSON maps need string keys; buckets are stored as a list of pairs.
mod bucket_list {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serializer};

    type Buckets = BTreeMap<(u32, u64), Vec<u32>>;

    pub fn serialize<S: Serializer>(b: &Buckets, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(b.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Buckets, D::Error> {
        let pairs: Vec<((u32, u64), Vec<u32>)> = Vec::deserialize(d)?;
        Ok(pairs.into_iter().collect())
    }
}
