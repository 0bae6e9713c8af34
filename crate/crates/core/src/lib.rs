//! Table union search over data lakes.
//!
//! The offline half of the pipeline parses a directory of CSV tables
//! ([`catalog`]), serializes every column into a bounded token list
//! ([`preprocess`]) and embeds it into a dense vector ([`embed`]). The online
//! half retrieves candidate tables through an approximate nearest-neighbor
//! index ([`ann`]), scores each candidate by maximum-weight bipartite matching
//! over column similarities ([`matching`]) and keeps the top-k, skipping
//! candidates whose score bounds cannot change the answer ([`search`]).
//!
//! [`eval`] and [`synth`] provide the benchmark harness and a deterministic
//! synthetic lake generator.

pub mod ann;
pub mod catalog;
pub mod embed;
pub mod error;
pub mod eval;
pub mod matching;
pub mod preprocess;
pub mod search;
pub mod synth;

pub use catalog::{Column, LakeCatalog, Table};
pub use embed::{cosine, ColumnEmbedding, ColumnKey, EmbedConfig, EmbeddingStore};
pub use error::{Error, Result};
pub use matching::{MatchResult, UnionabilityGraph};
pub use preprocess::{SamplingMethod, SerializedColumn, TokenStats};
pub use search::{Pruning, QuerySpec, QueryTable, Retrieval, ScoreKind, SearchHit, SearchResultList};
