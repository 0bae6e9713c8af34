//! Deterministic synthetic data lakes with known unionability.
//!
//! Tables are generated in groups. Every group owns a set of column roles
//! (categorical phrases, id-like codes, integers) and each role draws its
//! cells from a pool private to the group, so two tables of the same group
//! have unionable columns by construction while tables of different groups
//! share no tokens unless cross-group noise is enabled. The ground truth is
//! the same-group relation.
//!
//! [`planted_duplicate`] builds vector-level lakes for index benchmarks: a
//! query table, one table whose columns are near-copies of it, and random
//! filler tables.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::catalog::Table;
use crate::embed::{dot, l2_normalize, ColumnEmbedding, ColumnKey, EmbeddingStore};
use crate::error::{Error, Result};
use crate::eval::GroundTruth;
use crate::search::QueryTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_groups: usize,
    pub tables_per_group: usize,
    pub min_cols: usize,
    pub max_cols: usize,
    pub min_rows: usize,
    pub max_rows: usize,
    /// Distinct cell values per column role.
    pub vocab_size: usize,
    /// Probability that a cell is drawn from another group's pool.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_groups: 10,
            tables_per_group: 8,
            min_cols: 2,
            max_cols: 6,
            min_rows: 30,
            max_rows: 80,
            vocab_size: 12,
            noise_rate: 0.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.n_groups,
            self.tables_per_group,
            self.min_cols,
            self.max_cols,
            self.min_rows,
            self.max_rows,
            self.vocab_size,
        ];
        if counts.contains(&0) {
            return Err(Error::InvalidParam("synthetic lake counts must be >= 1".into()));
        }
        if self.min_cols > self.max_cols || self.min_rows > self.max_rows {
            return Err(Error::InvalidParam("min must not exceed max".into()));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::InvalidParam(format!("noise rate must be in [0, 1), got {}", self.noise_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RoleKind {
    Phrase,
    Code,
    Integer,
}

struct Role {
    kind: RoleKind,
    pool: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SynthLake {
    pub tables: Vec<Table>,
    pub ground_truth: GroundTruth,
    /// Column type per column: `g<group>_r<role>`.
    pub labels: HashMap<ColumnKey, String>,
}

const SYLLABLES: [&str; 40] = [
    "ba", "ke", "lo", "mi", "nu", "pa", "re", "si", "to", "vu", "da", "fe", "go", "hi", "ju", "ka",
    "le", "mo", "ni", "pu", "ra", "se", "ti", "vo", "wa", "xe", "yo", "zi", "bro", "cla", "dre",
    "fli", "gro", "pla", "sta", "tri", "que", "sha", "cho", "thu",
];

struct WordSource {
    seen: HashSet<String>,
}

impl WordSource {
    /// A word never produced before by this source. Words grow longer when
    /// the short ones run out.
    fn fresh(&mut self, rng: &mut ChaCha8Rng, syllables: std::ops::RangeInclusive<usize>) -> String {
        let (lo, mut hi) = syllables.into_inner();
        let mut misses = 0;
        loop {
            let n = rng.random_range(lo..=hi);
            let w: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
            if self.seen.insert(w.clone()) {
                return w;
            }
            misses += 1;
            if misses % 32 == 0 {
                hi += 1;
            }
        }
    }
}

pub fn table_id(group: usize, index: usize) -> String {
    format!("g{group:03}_t{index:03}")
}

/// Generates a lake in memory. Same spec, same lake.
pub fn generate(spec: &SynthSpec) -> Result<SynthLake> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut words = WordSource { seen: HashSet::new() };
    let n_roles = spec.max_cols + 2;

    let mut next_range = 0u64;
    let groups: Vec<Vec<Role>> = (0..spec.n_groups)
        .map(|_| {
            (0..n_roles)
                .map(|r| {
                    let kind = match r {
                        0 => RoleKind::Phrase,
                        1 => RoleKind::Code,
                        2 => RoleKind::Integer,
                        _ => *[RoleKind::Phrase, RoleKind::Code, RoleKind::Integer].choose(&mut rng).unwrap(),
                    };
                    let pool = match kind {
                        RoleKind::Phrase => (0..spec.vocab_size)
                            .map(|_| {
                                let n_words = rng.random_range(1..=2);
                                (0..n_words)
                                    .map(|_| capitalize(&words.fresh(&mut rng, 2..=3)))
                                    .collect::<Vec<_>>()
                                    .join(" ")
                            })
                            .collect(),
                        RoleKind::Code => (0..spec.vocab_size)
                            .map(|_| {
                                let stem = words.fresh(&mut rng, 1..=2).to_uppercase();
                                format!("{stem}{:04}", rng.random_range(0..10_000))
                            })
                            .collect(),
                        RoleKind::Integer => {
                            // Each integer role owns a disjoint million-wide range.
                            next_range += 1;
                            let base = next_range * 1_000_000;
                            let mut values: Vec<u64> = (0..spec.vocab_size as u64).map(|i| base + i * 997 % 900_000).collect();
                            values.shuffle(&mut rng);
                            values.into_iter().map(|v| v.to_string()).collect()
                        }
                    };
                    Role { kind, pool }
                })
                .collect()
        })
        .collect();

    let mut tables = Vec::new();
    let mut ground_truth = GroundTruth::default();
    let mut labels = HashMap::new();
    for (g, roles) in groups.iter().enumerate() {
        for t in 0..spec.tables_per_group {
            let width = rng.random_range(spec.min_cols..=spec.max_cols).min(n_roles);
            let mut chosen: Vec<usize> = (1..n_roles).collect();
            chosen.shuffle(&mut rng);
            chosen.truncate(width - 1);
            chosen.push(0);
            chosen.shuffle(&mut rng);

            let n_rows = rng.random_range(spec.min_rows..=spec.max_rows);
            let headers = chosen
                .iter()
                .map(|&r| match roles[r].kind {
                    RoleKind::Phrase => format!("name_{r}"),
                    RoleKind::Code => format!("code_{r}"),
                    RoleKind::Integer => format!("amount_{r}"),
                })
                .collect();
            let rows = (0..n_rows)
                .map(|_| {
                    chosen
                        .iter()
                        .map(|&r| {
                            let source = if spec.n_groups > 1 && rng.random_bool(spec.noise_rate) {
                                let other = (g + rng.random_range(1..spec.n_groups)) % spec.n_groups;
                                &groups[other][r]
                            } else {
                                &roles[r]
                            };
                            source.pool.choose(&mut rng).unwrap().clone()
                        })
                        .collect()
                })
                .collect();
            let id = table_id(g, t);
            for (c, &r) in chosen.iter().enumerate() {
                labels.insert(ColumnKey::new(id.clone(), c), format!("g{g:03}_r{r}"));
            }
            tables.push(Table::from_rows(id, headers, rows)?);
        }
        for a in 0..spec.tables_per_group {
            ground_truth.relevant.entry(table_id(g, a)).or_default();
            for b in 0..spec.tables_per_group {
                if a != b {
                    ground_truth.insert(table_id(g, a), table_id(g, b));
                }
            }
        }
    }
    Ok(SynthLake {
        tables,
        ground_truth,
        labels,
    })
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

impl SynthLake {
    /// Writes `lake/<table_id>.csv`, `groundtruth.csv` and `labels.csv`
    /// under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let lake = dir.join("lake");
        std::fs::create_dir_all(&lake).map_err(|e| Error::io(&lake, e))?;
        for t in &self.tables {
            let path = lake.join(format!("{}.csv", t.table_id));
            let csv_err = |source| Error::Csv {
                path: path.clone(),
                source,
            };
            let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
            w.write_record(t.columns.iter().map(|c| c.header.as_str())).map_err(csv_err)?;
            for r in 0..t.n_rows {
                w.write_record(t.row(r)).map_err(csv_err)?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        self.ground_truth.write(&dir.join("groundtruth.csv"))?;

        let path = dir.join("labels.csv");
        let csv_err = |source| Error::Csv {
            path: path.clone(),
            source,
        };
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(["table_id", "col_idx", "label"]).map_err(csv_err)?;
        let mut labels: Vec<_> = self.labels.iter().collect();
        labels.sort();
        for (key, label) in labels {
            w.write_record([key.table_id.as_str(), &key.col_idx.to_string(), label]).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }
}

pub fn random_unit_vector(rng: &mut impl Rng, dim: usize) -> Vec<f32> {
    loop {
        let mut v: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if dot(&v, &v) > 0.0 {
            l2_normalize(&mut v);
            return v;
        }
    }
}

/// A unit vector at exactly `cosine` similarity to the unit vector `u`.
pub fn vector_at_cosine(rng: &mut impl Rng, u: &[f32], cosine: f64) -> Vec<f32> {
    let mut w = random_unit_vector(rng, u.len());
    let proj = dot(&w, u);
    for (x, &ui) in w.iter_mut().zip(u) {
        *x -= proj * ui;
    }
    l2_normalize(&mut w);
    let sin = (1.0 - cosine * cosine).max(0.0).sqrt();
    let mut v: Vec<f32> = u
        .iter()
        .zip(&w)
        .map(|(&a, &b)| (cosine * a as f64 + sin * b as f64) as f32)
        .collect();
    l2_normalize(&mut v);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub n_tables: usize,
    pub cols_per_table: usize,
    pub dim: usize,
    /// Cosine between each query column and its planted copy.
    pub similarity: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            n_tables: 2000,
            cols_per_table: 5,
            dim: 64,
            similarity: 0.99,
            seed: 0,
        }
    }
}

pub struct PlantedLake {
    pub store: EmbeddingStore,
    pub query: QueryTable,
    pub planted: String,
}

/// Random unit-vector tables plus one table whose columns are near-copies
/// of the query's columns. The planted table's position in id order is
/// random.
pub fn planted_duplicate(spec: &PlantedSpec) -> Result<PlantedLake> {
    if spec.n_tables == 0 || spec.cols_per_table == 0 || spec.dim == 0 {
        return Err(Error::InvalidParam("planted lake sizes must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let query: Vec<Vec<f32>> = (0..spec.cols_per_table)
        .map(|_| random_unit_vector(&mut rng, spec.dim))
        .collect();
    let planted_at = rng.random_range(0..spec.n_tables);
    let mut entries = Vec::with_capacity(spec.n_tables * spec.cols_per_table);
    for t in 0..spec.n_tables {
        let id = format!("t{t:07}");
        for c in 0..spec.cols_per_table {
            let v = if t == planted_at {
                vector_at_cosine(&mut rng, &query[c], spec.similarity)
            } else {
                random_unit_vector(&mut rng, spec.dim)
            };
            entries.push(ColumnEmbedding::new(id.clone(), c, v));
        }
    }
    Ok(PlantedLake {
        store: EmbeddingStore::from_entries(spec.dim, entries)?,
        query: QueryTable {
            table_id: Some("query".into()),
            columns: query,
        },
        planted: format!("t{planted_at:07}"),
    })
}
