//! Candidate retrieval: which lake tables hold a column similar to a query
//! column.
//!
//! Both index types only propose columns; every proposal is re-scored with
//! the exact cosine and kept only if it reaches `tau`, so an index can lose
//! candidates but never admit a wrong one.

pub mod hnsw;
pub mod lsh;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embed::{cosine, EmbeddingStore};
use crate::error::{Error, Result};

pub use hnsw::{HnswIndex, HnswParams};
pub use lsh::{LshIndex, LshParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexType {
    Lsh,
    Hnsw,
}

impl std::str::FromStr for IndexType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lsh" => Ok(IndexType::Lsh),
            "hnsw" => Ok(IndexType::Hnsw),
            other => Err(Error::InvalidParam(format!("unknown index type `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "index_type", rename_all = "lowercase")]
pub enum AnnIndex {
    Lsh(LshIndex),
    Hnsw(HnswIndex),
}

/// A column that qualified a table, with its exact cosine to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnHit {
    pub offset: usize,
    pub similarity: f64,
}

/// Deduplicated candidate tables, plus the column hits that justify them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateSet {
    pub tables: BTreeSet<String>,
    pub hits: Vec<ColumnHit>,
}

impl CandidateSet {
    fn from_hits(store: &EmbeddingStore, hits: Vec<ColumnHit>) -> Self {
        let tables = hits
            .iter()
            .map(|h| store.entry(h.offset).table_id.clone())
            .collect();
        CandidateSet { tables, hits }
    }

    pub fn merge(&mut self, other: CandidateSet) {
        self.tables.extend(other.tables);
        self.hits.extend(other.hits);
    }
}

impl AnnIndex {
    pub fn index_type(&self) -> IndexType {
        match self {
            AnnIndex::Lsh(_) => IndexType::Lsh,
            AnnIndex::Hnsw(_) => IndexType::Hnsw,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            AnnIndex::Lsh(i) => i.seed(),
            AnnIndex::Hnsw(i) => i.seed(),
        }
    }

    pub fn params_json(&self) -> serde_json::Value {
        match self {
            AnnIndex::Lsh(i) => serde_json::to_value(i.params()),
            AnnIndex::Hnsw(i) => serde_json::to_value(i.params()),
        }
        .expect("params serialize")
    }

    /// Tables owning a column with cosine `>= tau` to `q` among the index's
    /// proposals. LSH proposes every bucket co-occupant; HNSW proposes the
    /// `top_n` approximate nearest columns.
    pub fn find_candidates(&self, store: &EmbeddingStore, q: &[f32], tau: f64, top_n: usize) -> Result<CandidateSet> {
        if q.len() != store.dim() {
            return Err(Error::DimensionMismatch {
                expected: store.dim(),
                actual: q.len(),
            });
        }
        let hits = match self {
            AnnIndex::Lsh(idx) => {
                idx.check_store(store)?;
                let mut hits = Vec::new();
                for offset in idx.bucket_neighbors(q)? {
                    let similarity = cosine(q, &store.entry(offset).vector)?;
                    if similarity >= tau {
                        hits.push(ColumnHit { offset, similarity });
                    }
                }
                hits
            }
            AnnIndex::Hnsw(idx) => {
                let mut hits = Vec::new();
                for (offset, _) in idx.search(store, q, top_n)? {
                    let similarity = cosine(q, &store.entry(offset).vector)?;
                    if similarity >= tau {
                        hits.push(ColumnHit { offset, similarity });
                    }
                }
                hits
            }
        };
        Ok(CandidateSet::from_hits(store, hits))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

/// Exact-scan retrieval with the same contract as [`AnnIndex::find_candidates`],
/// without the `top_n` cut.
pub fn scan_candidates(store: &EmbeddingStore, q: &[f32], tau: f64) -> Result<CandidateSet> {
    let mut hits = Vec::new();
    for (offset, e) in store.entries().iter().enumerate() {
        let similarity = cosine(q, &e.vector)?;
        if similarity >= tau {
            hits.push(ColumnHit { offset, similarity });
        }
    }
    Ok(CandidateSet::from_hits(store, hits))
}

/// Exact `k` nearest store entries by cosine, ties broken by offset.
pub fn exact_knn(store: &EmbeddingStore, q: &[f32], k: usize) -> Result<Vec<(usize, f64)>> {
    let mut all = Vec::with_capacity(store.len());
    for (offset, e) in store.entries().iter().enumerate() {
        all.push((offset, cosine(q, &e.vector)?));
    }
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    Ok(all)
}

/// Small JSON file pointing at a store and an index built over it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub index_type: IndexType,
    pub params: serde_json::Value,
    pub seed: u64,
    pub store_path: PathBuf,
    pub index_path: PathBuf,
}

impl IndexManifest {
    pub fn for_index(index: &AnnIndex, store_path: PathBuf, index_path: PathBuf) -> Self {
        IndexManifest {
            index_type: index.index_type(),
            params: index.params_json(),
            seed: index.seed(),
            store_path,
            index_path,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Resolves a manifest-relative path.
    pub fn resolve(&self, manifest_path: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::ColumnEmbedding;

    fn toy_store() -> EmbeddingStore {
        EmbeddingStore::from_entries(
            3,
            [
                ColumnEmbedding::new("a", 0, vec![1.0, 0.0, 0.0]),
                ColumnEmbedding::new("a", 1, vec![0.0, 1.0, 0.0]),
                ColumnEmbedding::new("b", 0, vec![0.9, 0.1, 0.0]),
                ColumnEmbedding::new("c", 0, vec![0.0, 0.0, 1.0]),
            ],
        )
        .unwrap()
    }

    fn both(store: &EmbeddingStore) -> [AnnIndex; 2] {
        [
            AnnIndex::Lsh(LshIndex::build(store, LshParams::default(), 1).unwrap()),
            AnnIndex::Hnsw(HnswIndex::build(store, HnswParams::default(), 1).unwrap()),
        ]
    }

    #[test]
    fn self_retrieval_and_unsatisfiable_tau() {
        let store = toy_store();
        for idx in both(&store) {
            let q = store.entry(0).vector.clone();
            let c = idx.find_candidates(&store, &q, 0.5, 64).unwrap();
            assert!(c.tables.contains("a"), "{:?}", idx.index_type());
            for h in &c.hits {
                assert!(h.similarity >= 0.5);
            }
            let none = idx.find_candidates(&store, &q, 1.0 + 1e-9, 64).unwrap();
            assert!(none.tables.is_empty());
            assert!(idx.find_candidates(&store, &[1.0], 0.5, 4).is_err());
        }
    }

    #[test]
    fn scan_matches_threshold() {
        let store = toy_store();
        let c = scan_candidates(&store, &[1.0, 0.0, 0.0], 0.5).unwrap();
        assert_eq!(c.tables.iter().map(String::as_str).collect::<Vec<_>>(), ["a", "b"]);
        let knn = exact_knn(&store, &[1.0, 0.0, 0.0], 2).unwrap();
        assert_eq!(knn.iter().map(|h| h.0).collect::<Vec<_>>(), [0, 2]);
    }

    #[test]
    fn save_load_round_trip() {
        let store = toy_store();
        let dir = tempfile::tempdir().unwrap();
        for idx in both(&store) {
            let p = dir.path().join("idx.json");
            idx.save(&p).unwrap();
            let back = AnnIndex::load(&p).unwrap();
            assert_eq!(back.index_type(), idx.index_type());
            let q = [0.0, 0.0, 1.0];
            assert_eq!(
                back.find_candidates(&store, &q, 0.5, 8).unwrap(),
                idx.find_candidates(&store, &q, 0.5, 8).unwrap()
            );
        }
    }

    #[test]
    fn manifest_json_shape() {
        let store = toy_store();
        let idx = AnnIndex::Lsh(LshIndex::build(&store, LshParams::default(), 7).unwrap());
        let m = IndexManifest::for_index(&idx, "e.smbe".into(), "e.lsh.json".into());
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["index_type"], "lsh");
        assert_eq!(v["seed"], 7);
        assert_eq!(v["params"]["hyperplanes"], 128);
        assert_eq!(v["store_path"], "e.smbe");
        let back: IndexManifest = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
        assert!("faiss".parse::<IndexType>().is_err());
    }
}
