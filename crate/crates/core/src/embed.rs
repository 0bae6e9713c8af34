//! Training-free column embedder, cosine scoring and the embedding store.
//!
//! The baseline embedder is signed feature hashing: every token adds
//! `±idf(token)` to one coordinate picked by a stable 64-bit hash, the sign
//! coming from a second, independent hash. The sum is L2-normalized; columns
//! without tokens (or whose tokens all have zero idf) embed to the zero
//! vector, which has cosine 0 with everything.
//!
//! # Store format
//!
//! Little-endian, version 1:
//!
//! ```text
//! "SMBE" | version: u8 = 1 | dim: u32 | count: u32
//! count × ( table_id_len: u16 | table_id: UTF-8 | col_idx: u16 | dim × f32 )
//! ```

use std::collections::{BTreeMap, HashMap};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{LakeCatalog, Table};
use crate::error::{Error, Result};
use crate::preprocess::{serialize_table, SamplingMethod, SerializedColumn, TokenStats};

pub const STORE_MAGIC: &[u8; 4] = b"SMBE";
pub const STORE_VERSION: u8 = 1;
const HEADER_LEN: usize = 13;

/// Version of the token hash below. Bump it whenever `token_hashes` changes,
/// since stores built with different hashes are not comparable.
pub const HASH_VERSION: u32 = 1;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const BUCKET_SALT: u64 = 0x5851_f42d_4c95_7f2d;
const SIGN_SALT: u64 = 0x1405_7b7e_f767_814f;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Bucket hash and sign hash of a token.
pub fn token_hashes(token: &str) -> (u64, u64) {
    let h = fnv1a(token.as_bytes());
    (splitmix64(h ^ BUCKET_SALT), splitmix64(h ^ SIGN_SALT))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColumnKey {
    pub table_id: String,
    pub col_idx: usize,
}

impl ColumnKey {
    pub fn new(table_id: impl Into<String>, col_idx: usize) -> Self {
        ColumnKey {
            table_id: table_id.into(),
            col_idx,
        }
    }
}

impl std::fmt::Display for ColumnKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.table_id, self.col_idx)
    }
}

#[derive(Debug, Clone)]
pub struct ColumnEmbedding {
    pub table_id: String,
    pub col_idx: usize,
    pub vector: Vec<f32>,
}

impl ColumnEmbedding {
    pub fn new(table_id: impl Into<String>, col_idx: usize, vector: Vec<f32>) -> Self {
        ColumnEmbedding {
            table_id: table_id.into(),
            col_idx,
            vector,
        }
    }

    pub fn key(&self) -> ColumnKey {
        ColumnKey::new(self.table_id.clone(), self.col_idx)
    }

    pub fn l2_norm(&self) -> f64 {
        norm(&self.vector)
    }
}

/// Bitwise equality on the vector, so that NaN payloads and signed zeros
/// round-trip exactly.
impl PartialEq for ColumnEmbedding {
    fn eq(&self, other: &Self) -> bool {
        self.table_id == other.table_id
            && self.col_idx == other.col_idx
            && self.vector.len() == other.vector.len()
            && self
                .vector
                .iter()
                .zip(&other.vector)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

/// Eight independent partial sums so the loop vectorizes.
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        let (x, y): (&[f32; 8], &[f32; 8]) = (x.try_into().unwrap(), y.try_into().unwrap());
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().sum::<f32>() + tail
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let d: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    Ok((d / (na * nb)).clamp(-1.0, 1.0))
}

pub fn l2_normalize(v: &mut [f32]) {
    let n = norm(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x = (*x as f64 / n) as f32;
        }
    }
}

/// Feature-hashes a serialized column into a `dim`-dimensional unit vector.
pub fn embed_column_baseline(sc: &SerializedColumn, stats: &TokenStats, dim: usize) -> ColumnEmbedding {
    let mut acc = vec![0f64; dim];
    for token in &sc.tokens {
        let (bucket, sign) = token_hashes(token);
        let w = stats.idf(token);
        let slot = (bucket % dim as u64) as usize;
        if sign & 1 == 0 {
            acc[slot] += w;
        } else {
            acc[slot] -= w;
        }
    }
    let n = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    let vector = if n > 0.0 {
        acc.iter().map(|x| (x / n) as f32).collect()
    } else {
        vec![0.0; dim]
    };
    ColumnEmbedding::new(sc.table_id.clone(), sc.col_idx, vector)
}

/// Everything that determines how a table is turned into column vectors.
/// Query tables must be embedded with the same configuration as the lake.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub method: SamplingMethod,
    pub max_len: usize,
    pub dim: usize,
    pub seed: u64,
    #[serde(default = "default_hash_version")]
    pub hash_version: u32,
}

fn default_hash_version() -> u32 {
    HASH_VERSION
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            method: SamplingMethod::TfidfEntity,
            max_len: 256,
            dim: 256,
            seed: 0,
            hash_version: HASH_VERSION,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 8 {
            return Err(Error::InvalidParam(format!("dim must be >= 8, got {}", self.dim)));
        }
        if self.max_len == 0 {
            return Err(Error::InvalidParam("max_len must be >= 1".into()));
        }
        if self.hash_version != HASH_VERSION {
            return Err(Error::InvalidParam(format!(
                "store was built with hash version {}, this build uses {HASH_VERSION}",
                self.hash_version
            )));
        }
        Ok(())
    }
}

pub fn embed_table(table: &Table, stats: &TokenStats, cfg: &EmbedConfig) -> Vec<ColumnEmbedding> {
    serialize_table(table, stats, cfg.method, cfg.max_len, cfg.seed)
        .iter()
        .map(|sc| embed_column_baseline(sc, stats, cfg.dim))
        .collect()
}

/// Embeds every column of the lake, in catalog order.
pub fn embed_catalog(catalog: &LakeCatalog, stats: &TokenStats, cfg: &EmbedConfig) -> Result<EmbeddingStore> {
    cfg.validate()?;
    let tables: Vec<&Table> = catalog.iter().collect();
    let per_table: Vec<Vec<ColumnEmbedding>> =
        tables.par_iter().map(|t| embed_table(t, stats, cfg)).collect();
    EmbeddingStore::from_entries(cfg.dim, per_table.into_iter().flatten())
}

/// Column vectors keyed by (table id, column index), in insertion order.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    entries: Vec<ColumnEmbedding>,
    index: HashMap<ColumnKey, usize>,
    tables: BTreeMap<String, Vec<usize>>,
}

impl PartialEq for EmbeddingStore {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.entries == other.entries
    }
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParam("store dimension must be >= 1".into()));
        }
        Ok(EmbeddingStore {
            dim,
            entries: Vec::new(),
            index: HashMap::new(),
            tables: BTreeMap::new(),
        })
    }

    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = ColumnEmbedding>) -> Result<Self> {
        let mut store = Self::new(dim)?;
        for e in entries {
            store.push(e)?;
        }
        Ok(store)
    }

    pub fn push(&mut self, entry: ColumnEmbedding) -> Result<()> {
        if entry.vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: entry.vector.len(),
            });
        }
        let key = entry.key();
        if self.index.contains_key(&key) {
            return Err(Error::Format(format!("duplicate column {key}")));
        }
        let offset = self.entries.len();
        self.index.insert(key, offset);
        let cols = self.tables.entry(entry.table_id.clone()).or_default();
        let pos = cols.partition_point(|&o| self.entries[o].col_idx < entry.col_idx);
        cols.insert(pos, offset);
        self.entries.push(entry);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ColumnEmbedding] {
        &self.entries
    }

    pub fn entry(&self, offset: usize) -> &ColumnEmbedding {
        &self.entries[offset]
    }

    pub fn get(&self, table_id: &str, col_idx: usize) -> Option<&ColumnEmbedding> {
        self.index
            .get(&ColumnKey::new(table_id, col_idx))
            .map(|&o| &self.entries[o])
    }

    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    /// Table ids in lexicographic order.
    pub fn table_ids(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }

    /// Entry offsets of a table's columns, ordered by column index.
    pub fn table_offsets(&self, table_id: &str) -> Option<&[usize]> {
        self.tables.get(table_id).map(Vec::as_slice)
    }

    /// Column vectors of a table, ordered by column index.
    pub fn table_vectors(&self, table_id: &str) -> Option<Vec<&[f32]>> {
        self.table_offsets(table_id)
            .map(|offs| offs.iter().map(|&o| self.entries[o].vector.as_slice()).collect())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let io = |e| Error::io("<store>", e);
        let count = u32::try_from(self.entries.len())
            .map_err(|_| Error::Format("too many entries".into()))?;
        let dim = u32::try_from(self.dim).map_err(|_| Error::Format("dimension too large".into()))?;
        w.write_all(STORE_MAGIC).map_err(io)?;
        w.write_all(&[STORE_VERSION]).map_err(io)?;
        w.write_all(&dim.to_le_bytes()).map_err(io)?;
        w.write_all(&count.to_le_bytes()).map_err(io)?;
        for e in &self.entries {
            let id = e.table_id.as_bytes();
            let id_len = u16::try_from(id.len())
                .map_err(|_| Error::Format(format!("table id too long: {}", e.table_id)))?;
            let col = u16::try_from(e.col_idx)
                .map_err(|_| Error::Format(format!("column index too large: {}", e.key())))?;
            w.write_all(&id_len.to_le_bytes()).map_err(io)?;
            w.write_all(id).map_err(io)?;
            w.write_all(&col.to_le_bytes()).map_err(io)?;
            for x in &e.vector {
                w.write_all(&x.to_le_bytes()).map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::with_capacity(HEADER_LEN + self.entries.len() * (8 + 4 * self.dim));
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { buf: bytes, pos: 0 };
        if r.take(4)? != STORE_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.take(1)?[0];
        if version != STORE_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dim = r.u32()? as usize;
        let count = r.u32()? as usize;
        let mut store = Self::new(dim)?;
        for _ in 0..count {
            let id_len = r.u16()? as usize;
            let table_id = std::str::from_utf8(r.take(id_len)?)
                .map_err(|_| Error::Format("table id is not UTF-8".into()))?
                .to_string();
            let col_idx = r.u16()? as usize;
            let raw = r.take(4 * dim)?;
            let vector = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            store.push(ColumnEmbedding::new(table_id, col_idx, vector))?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(store)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("truncated file".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn write_store(store: &EmbeddingStore, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    store.write_to(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_store(path: &Path) -> Result<EmbeddingStore> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    EmbeddingStore::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sc(tokens: &[&str]) -> SerializedColumn {
        SerializedColumn {
            table_id: "t".into(),
            col_idx: 0,
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            method: SamplingMethod::Head,
            budget: 64,
        }
    }

    fn flat_stats() -> TokenStats {
        // Every unseen token has idf ln(100).
        TokenStats {
            m_columns: 100,
            df: HashMap::new(),
        }
    }

    #[test]
    fn empty_tokens_give_zero_vector() {
        let e = embed_column_baseline(&sc(&[]), &flat_stats(), 16);
        assert_eq!(e.vector, vec![0.0; 16]);
        assert_eq!(e.l2_norm(), 0.0);
    }

    #[test]
    fn single_token_gives_one_hot() {
        let e = embed_column_baseline(&sc(&["hello"]), &flat_stats(), 16);
        let nonzero: Vec<f32> = e.vector.iter().copied().filter(|x| *x != 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(nonzero[0].abs(), 1.0);
    }

    #[test]
    fn same_multiset_same_vector() {
        let st = flat_stats();
        let a = embed_column_baseline(&sc(&["a", "b", "b", "c"]), &st, 32);
        let b = embed_column_baseline(&sc(&["b", "c", "a", "b"]), &st, 32);
        assert_eq!(a.vector, b.vector);
    }

    #[test]
    fn hash_is_pinned() {
        // Frozen values: a change here invalidates every existing store.
        assert_eq!(fnv1a(b""), FNV_OFFSET);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
        let (b, s) = token_hashes("california");
        assert_eq!((b, s), token_hashes("california"));
        assert_ne!(b, s);
    }

    #[test]
    fn cosine_examples() {
        let v = [0.3f32, -1.2, 4.0];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 2.0], &[2.0, 1.0]).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(cosine(&[1.0], &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn disjoint_token_sets_are_nearly_orthogonal() {
        let st = flat_stats();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst = 0f64;
        for trial in 0..50 {
            let a: Vec<String> = (0..200).map(|i| format!("a{trial}x{i}y{}", rng.random::<u32>())).collect();
            let b: Vec<String> = (0..200).map(|i| format!("b{trial}x{i}y{}", rng.random::<u32>())).collect();
            let ea = embed_column_baseline(&sc(&a.iter().map(String::as_str).collect::<Vec<_>>()), &st, 256);
            let eb = embed_column_baseline(&sc(&b.iter().map(String::as_str).collect::<Vec<_>>()), &st, 256);
            worst = worst.max(cosine(&ea.vector, &eb.vector).unwrap().abs());
        }
        // Sd of the cosine is about 1/sqrt(dim) = 0.0625.
        assert!(worst < 0.3, "max |cos| = {worst}");
    }

    #[test]
    fn embeddings_are_unit_norm() {
        let e = embed_column_baseline(&sc(&["x", "y", "z", "x"]), &flat_stats(), 64);
        assert!((e.l2_norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn empty_store_is_header_only() {
        let s = EmbeddingStore::new(4).unwrap();
        let bytes = s.to_bytes().unwrap();
        assert_eq!(bytes.len(), 13);
        assert_eq!(&bytes[..4], b"SMBE");
        assert_eq!(EmbeddingStore::from_bytes(&bytes).unwrap(), s);
    }

    #[test]
    fn one_entry_round_trip() {
        let s = EmbeddingStore::from_entries(
            3,
            [ColumnEmbedding::new("tbl", 2, vec![1.5, -0.0, f32::MIN_POSITIVE])],
        )
        .unwrap();
        let bytes = s.to_bytes().unwrap();
        assert_eq!(bytes.len(), 13 + 2 + 3 + 2 + 12);
        let back = EmbeddingStore::from_bytes(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn bad_files_are_rejected() {
        let s = EmbeddingStore::from_entries(2, [ColumnEmbedding::new("a", 0, vec![1.0, 0.0])]).unwrap();
        let bytes = s.to_bytes().unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(EmbeddingStore::from_bytes(&bad), Err(Error::Format(m)) if m.contains("magic")));

        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(EmbeddingStore::from_bytes(&bad), Err(Error::Format(_))));

        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Format(m)) if m.contains("truncated")
        ));

        // Two copies of the same record with count = 2.
        let record = &bytes[13..];
        let mut dup = bytes[..13].to_vec();
        dup[9..13].copy_from_slice(&2u32.to_le_bytes());
        dup.extend_from_slice(record);
        dup.extend_from_slice(record);
        assert!(matches!(EmbeddingStore::from_bytes(&dup), Err(Error::Format(m)) if m.contains("duplicate")));
    }

    #[test]
    fn table_views_are_ordered_by_column() {
        let s = EmbeddingStore::from_entries(
            2,
            [
                ColumnEmbedding::new("b", 1, vec![0.0, 1.0]),
                ColumnEmbedding::new("a", 0, vec![1.0, 0.0]),
                ColumnEmbedding::new("b", 0, vec![1.0, 1.0]),
            ],
        )
        .unwrap();
        assert_eq!(s.table_ids().collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(s.table_offsets("b").unwrap(), &[2, 0]);
        assert_eq!(s.get("b", 1).unwrap().vector, vec![0.0, 1.0]);

        let mut s = s;
        assert!(s.push(ColumnEmbedding::new("a", 0, vec![0.0, 0.0])).is_err());
        assert!(s.push(ColumnEmbedding::new("c", 0, vec![0.0])).is_err());
    }

    fn arb_store() -> impl Strategy<Value = EmbeddingStore> {
        (1usize..6).prop_flat_map(|dim| {
            prop::collection::btree_map(
                ("[a-z0-9_]{1,8}", 0usize..5),
                prop::collection::vec(any::<u32>().prop_map(f32::from_bits), dim),
                0..8,
            )
            .prop_map(move |m| {
                EmbeddingStore::from_entries(
                    dim,
                    m.into_iter().map(|((t, c), v)| ColumnEmbedding::new(t, c, v)),
                )
                .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn store_round_trip_is_byte_identical(store in arb_store()) {
            let bytes = store.to_bytes().unwrap();
            let back = EmbeddingStore::from_bytes(&bytes).unwrap();
            prop_assert_eq!(&back, &store);
            prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }
}
